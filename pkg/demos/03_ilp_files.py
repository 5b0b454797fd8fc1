"""
Handing the pruned problem to an external MILP solver
=====================================================

The exact problem can also be written as an integer program in CPLEX LP
format, with the greedy solution as a warm start.  Any solver that reads LP
files can take it from there; its ``name value`` solution lines are decoded
back into an extraction.  Here scipy's HiGHS interface stands in for the
external solver.
"""

import io
import tempfile
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from egx.generate import motivating_example
from egx.greedy import extract_greedy
from egx.ilp import build_ilp, emit_lp, emit_warmstart, parse_solution
from egx.prune import prune

egraph = motivating_example()
greedy, costs = extract_greedy(egraph)
model = build_ilp(egraph, prune(egraph, costs, "1.25"), greedy)

out = Path(tempfile.mkdtemp())
emit_lp(model, out / "fig.lp")
emit_warmstart(model, out / "fig.mst")
print((out / "fig.lp").read_text()[:600], "...\n")
print("warm start:", " ".join((out / "fig.mst").read_text().split()[:8]), "...")

# Solve the same rows with HiGHS and write its answer as name/value lines.
c, A, lo, hi, integrality, bounds, names = model.to_matrix()
res = milp(c, constraints=LinearConstraint(A, lo, hi), integrality=integrality,
           bounds=Bounds(*np.array(bounds, float).T))
solution = "".join(f"{name} {value:g}\n" for name, value in zip(names, res.x))

extraction = parse_solution(model, io.StringIO(solution))
print("\nsolver objective:", res.fun)
print("decoded:", extraction.choices, "DAG cost", extraction.dag_cost)
