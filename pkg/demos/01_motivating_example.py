"""
Greedy versus optimal extraction on a ten-node e-graph
======================================================

The e-graph holds ``not a and (a or not b)`` together with a few rewrites.
Picking the locally cheapest node in every class costs 17, while the best
DAG costs 16 because it reuses ``not a``.  The hybrid pipeline (greedy, then
pruning, then exact search seeded by greedy) recovers the 16.
"""

from egx.exact import solve_exact
from egx.generate import motivating_example
from egx.greedy import extract_greedy
from egx.prune import prune

egraph = motivating_example()
for cid, members in egraph.classes.items():
    print(f"{cid:>9}: " + ", ".join(f"{n}={egraph.node(n).op}({egraph.node(n).cost})" for n in members))

# Greedy keeps, per class, the node whose whole subterm is cheapest.
greedy, costs = extract_greedy(egraph)
print("\ngreedy choices:", greedy.choices)
print("greedy DAG cost:", greedy.dag_cost)

# node_best records every node's own subterm cost, including the losers.
# E5 would need its own class below itself, so it never gets a finite cost.
for nid, total in zip(egraph.node_ids, costs.node_best):
    print(f"  {nid}: {total}")

# Keep nodes within 25% of their class minimum.
mask = prune(egraph, costs, "1.25")
print("\npruned:", mask.pruned_ids(egraph))
print("retained:", mask.retained_ids(egraph))

# Exact search over what is left, starting from the greedy incumbent.
best, status = solve_exact(egraph, mask, greedy,
                           on_incumbent=lambda c, t: print(f"  incumbent {c} at {t * 1e3:.2f} ms"))
print("\nhybrid choices:", best.choices)
print("hybrid DAG cost:", best.dag_cost, f"({status})")
