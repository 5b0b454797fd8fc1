"""DAG-cost e-graph extraction."""
