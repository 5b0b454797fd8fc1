"""Integer program for exact DAG-cost extraction.

Variables (dense indexes in the names):

- ``s_i``  binary, node ``i`` is selected
- ``a_j``  binary, class ``j`` is active
- ``o_i``  binary, complement of ``s_i`` (switches the ordering row off)
- ``l_j``  continuous in ``[0, |C|]``, topological level of class ``j``

Rows are grouped into families, and each family's tag is the prefix of its
row names in the LP file:

====== ==============================================================
eq5b   one selected node per active class: ``sum(s_i in j) - a_j = 0``
eq5c   a selected node activates its children: ``s_i - a_k <= 0``
eq5d   roots are active: ``a_r = 1``
eq5e   acyclicity: ``l_j - l_k + M o_i >= 1`` with ``M = |C| + 1``
eq5f   ``s_i + o_i = 1``
eq5g   pruned and self-cyclic nodes are fixed: ``s_i = 0``
====== ==============================================================

Fixed nodes keep their ``s`` variable (so the fixing row documents them) but
get no ``o`` variable and no rows besides their class sum and their fixing.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import IO, Iterable, Mapping

import numpy as np

from .egraph import EGraph, EGraphError, ExtractionResult, check_selection
from .prune import PruneMask

FAMILIES = ("eq5b", "eq5c", "eq5d", "eq5e", "eq5f", "eq5g")


class SolutionError(EGraphError):
    """A solver solution that does not decode to one node per active class."""


@dataclass
class Row:
    name: str
    terms: list[tuple[int, str]]
    sense: str  # "=", "<=" or ">="
    rhs: int

    def satisfied(self, values: Mapping[str, float], tol: float = 1e-9) -> bool:
        lhs = sum(coef * values.get(var, 0.0) for coef, var in self.terms)
        if self.sense == "=":
            return abs(lhs - self.rhs) <= tol
        if self.sense == "<=":
            return lhs <= self.rhs + tol
        return lhs >= self.rhs - tol


@dataclass
class IlpModel:
    egraph: EGraph
    select_vars: dict[int, str]
    active_vars: dict[int, str]
    opp_vars: dict[int, str]
    level_vars: dict[int, str]
    big_m: int
    level_bound: int
    objective: list[tuple[int, str]]
    constraints: dict[str, list[Row]]
    fixed: set[int] = field(default_factory=set)
    warm_start: dict[str, int] = field(default_factory=dict)

    @property
    def binaries(self) -> list[str]:
        return [*self.select_vars.values(), *self.active_vars.values(), *self.opp_vars.values()]

    @property
    def variables(self) -> list[str]:
        return [*self.binaries, *self.level_vars.values()]

    def rows(self) -> Iterable[Row]:
        for fam in FAMILIES:
            yield from self.constraints[fam]

    def violations(self, values: Mapping[str, float], families: Iterable[str] = FAMILIES) -> list[str]:
        """Names of the rows (in ``families``) that ``values`` violates."""
        bad = []
        for fam in families:
            bad.extend(r.name for r in self.constraints[fam] if not r.satisfied(values))
        for var in self.level_vars.values():
            v = values.get(var, 0.0)
            if v < -1e-9 or v > self.level_bound + 1e-9:
                bad.append(f"bound:{var}")
        return bad

    def objective_value(self, values: Mapping[str, float]) -> float:
        return sum(coef * values.get(var, 0.0) for coef, var in self.objective)

    def assignment(self, selection: Mapping[int, int]) -> dict[str, int]:
        """Variable values for a dense selection, levels set to topological depth.

        Every class in ``selection`` is active; leaves get level 0 and any
        other active class sits one above its deepest child.
        """
        eg = self.egraph
        values: dict[str, int] = {v: 0 for v in self.variables}
        for c, n in selection.items():
            if n in self.select_vars:
                values[self.select_vars[n]] = 1
            if c in self.active_vars:
                values[self.active_vars[c]] = 1
        for n, var in self.opp_vars.items():
            values[var] = 1 - values[self.select_vars[n]]
        graph = {c: [k for k in eg.node_child_classes[n] if k in selection] for c, n in selection.items()}
        try:
            order = list(TopologicalSorter(graph).static_order())
        except CycleError:
            raise EGraphError("selection is cyclic; no level assignment exists") from None
        depth: dict[int, int] = {}
        for c in order:
            depth[c] = 1 + max((depth[k] for k in graph[c]), default=-1)
        for c, d in depth.items():
            if c in self.level_vars:
                values[self.level_vars[c]] = d
        return values

    def decode(self, values: Mapping[str, float]) -> dict[int, int]:
        """Dense selection from variable values (``> 0.5`` counts as 1)."""
        node_of = {v: n for n, v in self.select_vars.items()}
        class_of = {v: c for c, v in self.active_vars.items()}
        selection: dict[int, int] = {}
        active = set()
        for var, value in values.items():
            if value <= 0.5:
                continue
            if var in node_of:
                n = node_of[var]
                c = int(self.egraph.node_class[n])
                if c in selection:
                    raise SolutionError(
                        f"class {self.egraph.class_ids[c]!r} has two selected nodes "
                        f"({self.select_vars[selection[c]]}, {var})"
                    )
                selection[c] = n
            elif var in class_of:
                active.add(class_of[var])
        missing = sorted(active - selection.keys())
        if missing:
            raise SolutionError(
                f"active class {self.egraph.class_ids[missing[0]]!r} has no selected node"
            )
        return selection

    def to_matrix(self):
        """Dense ``(c, A, lower, upper, integrality, bounds, names)`` arrays.

        Rows ``lower <= A x <= upper``; ``bounds`` is the per-variable
        ``(lo, hi)`` pair list.  Meant for handing the model to a generic
        MILP routine.
        """
        names = self.variables
        col = {v: i for i, v in enumerate(names)}
        c = np.zeros(len(names))
        for coef, var in self.objective:
            c[col[var]] += coef
        rows = list(self.rows())
        A = np.zeros((len(rows), len(names)))
        lower = np.full(len(rows), -np.inf)
        upper = np.full(len(rows), np.inf)
        for r, row in enumerate(rows):
            for coef, var in row.terms:
                A[r, col[var]] += coef
            if row.sense in ("=", ">="):
                lower[r] = row.rhs
            if row.sense in ("=", "<="):
                upper[r] = row.rhs
        n_bin = len(self.binaries)
        integrality = np.array([1] * n_bin + [0] * len(self.level_vars))
        bounds = [(0, 1)] * n_bin + [(0, self.level_bound)] * len(self.level_vars)
        return c, A, lower, upper, integrality, bounds, names


def build_ilp(
    egraph: EGraph,
    mask: PruneMask | None = None,
    warm: ExtractionResult | None = None,
) -> IlpModel:
    """Build the extraction model, optionally restricted by ``mask`` and seeded by ``warm``."""
    dead = set(mask.dead_classes) if mask is not None else set()
    if any(r in dead for r in egraph.roots):
        raise EGraphError("a root e-class has no finite-cost node; the model is empty")
    live = [c for c in range(egraph.num_classes) if c not in dead]
    pruned = mask.pruned if mask is not None else set()

    select = {}
    fixed = set()
    for c in live:
        for n in egraph.class_nodes[c]:
            select[n] = f"s_{n}"
            kids = egraph.node_child_classes[n]
            if n in pruned or egraph.self_cyclic[n] or any(k in dead for k in kids):
                fixed.add(n)
    free = [n for n in sorted(select) if n not in fixed]
    active = {c: f"a_{c}" for c in live}
    level = {c: f"l_{c}" for c in live}
    opp = {n: f"o_{n}" for n in free}
    big_m = egraph.num_classes + 1

    cons: dict[str, list[Row]] = {fam: [] for fam in FAMILIES}
    for c in live:
        terms = [(1, select[n]) for n in egraph.class_nodes[c]]
        cons["eq5b"].append(Row(f"eq5b_{c}", terms + [(-1, active[c])], "=", 0))
    for n in free:
        for k in egraph.node_child_classes[n]:
            cons["eq5c"].append(Row(f"eq5c_{n}_{k}", [(1, select[n]), (-1, active[k])], "<=", 0))
    for r in egraph.roots:
        cons["eq5d"].append(Row(f"eq5d_{r}", [(1, active[r])], "=", 1))
    for n in free:
        j = int(egraph.node_class[n])
        for k in egraph.node_child_classes[n]:
            if k != j:
                cons["eq5e"].append(
                    Row(f"eq5e_{n}_{k}", [(1, level[j]), (-1, level[k]), (big_m, opp[n])], ">=", 1)
                )
    for n in free:
        cons["eq5f"].append(Row(f"eq5f_{n}", [(1, select[n]), (1, opp[n])], "=", 1))
    for n in sorted(fixed):
        cons["eq5g"].append(Row(f"eq5g_{n}", [(1, select[n])], "=", 0))

    model = IlpModel(
        egraph=egraph,
        select_vars=select,
        active_vars=active,
        opp_vars=opp,
        level_vars=level,
        big_m=big_m,
        level_bound=egraph.num_classes,
        objective=[(int(egraph.node_cost[n]), select[n]) for n in free],
        constraints=cons,
        fixed=fixed,
    )
    if warm is not None:
        model.warm_start = _warm_values(model, warm)
    return model


def _warm_values(model: IlpModel, warm: ExtractionResult) -> dict[str, int]:
    eg = model.egraph
    selection = warm.selection(eg)
    if not check_selection(eg, selection).valid:
        raise EGraphError("warm start is not a valid extraction")
    reach = eg.reachable_classes(selection)
    chosen = {selection[c] for c in reach}
    bad = sorted(n for n in chosen if n in model.fixed or n not in model.select_vars)
    if bad:
        raise EGraphError(
            "warm start selects pruned node(s) " + ", ".join(eg.node_ids[n] for n in bad)
        )
    values: dict[str, int] = {}
    for n in sorted(model.opp_vars):
        bit = 1 if n in chosen else 0
        values[model.select_vars[n]] = bit
        values[model.opp_vars[n]] = 1 - bit
    reach_set = set(reach)
    for c, var in model.active_vars.items():
        values[var] = 1 if c in reach_set else 0
    return values


# ---------------------------------------------------------------------------
# file formats


def _open_text_sink(sink):
    if isinstance(sink, (str, os.PathLike)):
        return open(sink, "w", encoding="utf-8", newline="\n"), True
    if isinstance(sink, io.TextIOBase):
        return sink, False
    return io.TextIOWrapper(sink, encoding="utf-8", newline="\n", write_through=True), False


def _expr(terms: list[tuple[int, str]]) -> list[str]:
    out = []
    for i, (coef, var) in enumerate(terms):
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = var if mag == 1 else f"{mag} {var}"
        if i == 0:
            out.append(body if sign == "+" else f"- {body}")
        else:
            out.append(f"{sign} {body}")
    return out


def _wrapped(head: str, pieces: list[str], width: int = 200) -> list[str]:
    lines, cur = [], head
    for p in pieces:
        if len(cur) + 1 + len(p) > width and cur.strip():
            lines.append(cur)
            cur = "   " + p
        else:
            cur = f"{cur} {p}" if cur else p
    lines.append(cur)
    return lines


def lp_text(model: IlpModel) -> str:
    eg = model.egraph
    lines = [
        f"\\ extraction model: {eg.num_nodes} nodes, {eg.num_classes} classes, "
        f"{len(model.fixed)} fixed",
        "Minimize",
    ]
    lines += _wrapped(" obj:", _expr(model.objective) or ["0 " + next(iter(model.select_vars.values()))])
    lines.append("Subject To")
    for row in model.rows():
        lines += _wrapped(f" {row.name}:", _expr(row.terms) + [row.sense, str(row.rhs)])
    lines.append("Bounds")
    for var in model.level_vars.values():
        lines.append(f" 0 <= {var} <= {model.level_bound}")
    lines.append("Binaries")
    lines += _wrapped("", model.binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


def emit_lp(model: IlpModel, sink: str | os.PathLike | IO) -> None:
    """Write the model in CPLEX LP format; output is deterministic."""
    fh, owned = _open_text_sink(sink)
    try:
        fh.write(lp_text(model))
        fh.flush()
    finally:
        if owned:
            fh.close()
        elif not isinstance(sink, (str, os.PathLike, io.TextIOBase)):
            fh.detach()


def emit_warmstart(model: IlpModel, sink: str | os.PathLike | IO) -> None:
    """Write ``<variable> <0|1>`` lines for the warm start."""
    if not model.warm_start:
        raise EGraphError("model has no warm start")
    text = "".join(f"{var} {bit}\n" for var, bit in model.warm_start.items())
    fh, owned = _open_text_sink(sink)
    try:
        fh.write(text)
        fh.flush()
    finally:
        if owned:
            fh.close()
        elif not isinstance(sink, (str, os.PathLike, io.TextIOBase)):
            fh.detach()


def read_solution_values(source: str | os.PathLike | IO) -> dict[str, float]:
    """Parse whitespace-separated ``name value`` lines; ``#`` starts a comment."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    values: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise SolutionError(f"line {lineno}: expected '<name> <value>'")
        try:
            values[parts[0]] = float(parts[1])
        except ValueError:
            raise SolutionError(f"line {lineno}: bad value {parts[1]!r}") from None
    return values


def parse_solution(model: IlpModel, source: str | os.PathLike | IO) -> ExtractionResult:
    """Decode a solver solution into a validated, costed extraction."""
    values = read_solution_values(source)
    known = set(model.variables)
    unknown = [v for v in values if v not in known]
    if unknown:
        raise SolutionError(f"unknown variable {unknown[0]!r} in solution")
    selection = model.decode(values)
    return ExtractionResult.from_selection(model.egraph, selection, status="parsed")
