"""Exact DAG-cost extraction by branch and bound, plus a brute-force oracle."""

from __future__ import annotations

import itertools
import math
import sys
import time
from typing import Callable

from .egraph import INF, EGraph, EGraphError, ExtractionResult, check_selection
from .prune import PruneMask

STATUSES = ("optimal", "feasible", "infeasible", "limit")
ORACLE_CAP = 2**20

IncumbentHook = Callable[[int, float], None]


class _Stop(Exception):
    pass


class _Search:
    def __init__(self, egraph, allowed, time_limit, node_limit, on_incumbent):
        self.eg = egraph
        self.allowed = allowed
        self.min_cost = [
            min((int(egraph.node_cost[n]) for n in ns), default=INF) for ns in allowed
        ]
        self.levels = egraph.class_levels
        self.deadline = time.perf_counter() + time_limit
        self.start = time.perf_counter()
        self.node_limit = node_limit
        self.on_incumbent = on_incumbent
        self.expanded = 0
        self.best_cost: int | float = INF
        self.best: dict[int, int] | None = None
        # search state
        self.sel: dict[int, int] = {}
        self.pending: set[int] = set()  # required classes not yet decided
        self.cost = 0
        self.pending_bound = 0

    def offer(self, selection: dict[int, int], cost: int) -> None:
        if cost < self.best_cost:
            self.best_cost = cost
            self.best = dict(selection)
            if self.on_incumbent is not None:
                self.on_incumbent(cost, time.perf_counter() - self.start)

    def _closes_cycle(self, c: int, n: int) -> bool:
        # committing n in c closes a cycle iff c is reachable from one of n's
        # committed children through committed selections
        stack = [k for k in self.eg.node_child_classes[n] if k in self.sel]
        seen = set()
        while stack:
            k = stack.pop()
            if k == c:
                return True
            if k in seen:
                continue
            seen.add(k)
            stack.extend(j for j in self.eg.node_child_classes[self.sel[k]] if j in self.sel or j == c)
        return False

    def _pick_class(self) -> int:
        return min(self.pending, key=lambda c: (-int(self.levels[c]), len(self.allowed[c]), c))

    def run(self, roots) -> bool:
        """Search from the roots; returns True when the tree was exhausted."""
        for r in roots:
            if r not in self.pending:
                self.pending.add(r)
                self.pending_bound += self.min_cost[r]
        try:
            self._branch()
        except _Stop:
            return False
        return True

    def _tick(self) -> None:
        self.expanded += 1
        if self.node_limit is not None and self.expanded > self.node_limit:
            raise _Stop
        if self.expanded % 256 == 0 and time.perf_counter() > self.deadline:
            raise _Stop

    def _branch(self) -> None:
        if not self.pending:
            self.offer(self.sel, self.cost)
            return
        if self.cost + self.pending_bound >= self.best_cost:
            return
        c = self._pick_class()
        self.pending.remove(c)
        self.pending_bound -= self.min_cost[c]
        for n in self.allowed[c]:
            self._tick()
            if self._closes_cycle(c, n):
                continue
            own = int(self.eg.node_cost[n])
            added = [k for k in self.eg.node_child_classes[n] if k not in self.sel and k not in self.pending]
            if any(self.min_cost[k] == INF for k in added):
                continue
            bound_add = sum(self.min_cost[k] for k in added)
            if self.cost + own + self.pending_bound + bound_add >= self.best_cost:
                continue
            self.sel[c] = n
            self.cost += own
            self.pending.update(added)
            self.pending_bound += bound_add
            self._branch()
            self.pending_bound -= bound_add
            self.pending.difference_update(added)
            self.cost -= own
            del self.sel[c]
        self.pending.add(c)
        self.pending_bound += self.min_cost[c]


def _allowed_nodes(egraph: EGraph, mask: PruneMask | None, warm_sel: dict[int, int]) -> list[list[int]]:
    allowed = []
    for c, members in enumerate(egraph.class_nodes):
        if mask is not None:
            pool = mask.retained.get(c, [])
        else:
            pool = members
        pool = [n for n in pool if not egraph.self_cyclic[n]]
        pref = warm_sel.get(c)
        pool.sort(key=lambda n: (n != pref, int(egraph.node_cost[n]), n))
        allowed.append(pool)
    return allowed


def solve_exact(
    egraph: EGraph,
    mask: PruneMask | None = None,
    warm: ExtractionResult | None = None,
    time_limit: float = 60.0,
    node_limit: int | None = None,
    on_incumbent: IncumbentHook | None = None,
) -> tuple[ExtractionResult, str]:
    """Minimum DAG-cost extraction over the nodes the mask retains.

    Classes are decided from the roots downward, highest topological level
    first.  A partial assignment is bounded below by its committed cost plus
    the cheapest allowed node of every class it still has to decide, which
    never overestimates.  ``warm`` seeds the incumbent, so the result is never
    worse than it.  Hitting ``time_limit`` or ``node_limit`` returns the
    incumbent with status ``feasible`` (or ``limit`` when there is none).
    """
    if not time_limit > 0:
        raise ValueError("time_limit must be positive")
    warm_sel: dict[int, int] = {}
    if warm is not None:
        full = warm.selection(egraph)
        if not check_selection(egraph, full).valid:
            raise EGraphError("warm start is not a valid extraction")
        warm_sel = {c: full[c] for c in egraph.reachable_classes(full)}
    allowed = _allowed_nodes(egraph, mask, warm_sel)
    if warm_sel and any(n not in allowed[c] for c, n in warm_sel.items()):
        raise EGraphError("warm start selects a node outside the retained set")

    search = _Search(egraph, allowed, time_limit, node_limit, on_incumbent)
    if warm_sel:
        search.offer(warm_sel, sum(int(egraph.node_cost[n]) for n in warm_sel.values()))
    limit = max(sys.getrecursionlimit(), 4 * egraph.num_classes + 1000)
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(limit)
    try:
        exhausted = search.run(egraph.roots)
    finally:
        sys.setrecursionlimit(old)

    if search.best is None:
        status = "infeasible" if exhausted else "limit"
        return ExtractionResult({}, valid=False, status=status), status
    status = "optimal" if exhausted else "feasible"
    return ExtractionResult.from_selection(egraph, search.best, status=status), status


# ---------------------------------------------------------------------------
# brute force


def enumerate_oracle(egraph: EGraph, cap: int = ORACLE_CAP) -> tuple[ExtractionResult, int | float]:
    """Cheapest valid extraction by trying every one-node-per-class assignment.

    Only classes reachable from the roots through some node take part.  Ties
    go to the lexicographically smallest choice vector.
    """
    reach = _reachable_any(egraph)
    spaces = [egraph.class_nodes[c] for c in reach]
    size = math.prod(len(s) for s in spaces)
    if size > cap:
        raise ValueError(f"{size} assignments exceed the oracle cap of {cap}")
    best_cost: int | float = INF
    best = None
    for combo in itertools.product(*spaces):
        selection = dict(zip(reach, combo))
        cost = _oracle_cost(egraph, selection)
        if cost < best_cost:
            best_cost, best = cost, selection
    if best is None:
        return ExtractionResult({}, valid=False, status="infeasible"), INF
    return ExtractionResult.from_selection(egraph, best, status="optimal"), best_cost


def _reachable_any(egraph: EGraph) -> list[int]:
    seen = set(egraph.roots)
    stack = list(egraph.roots)
    while stack:
        c = stack.pop()
        for n in egraph.class_nodes[c]:
            for k in egraph.node_child_classes[n]:
                if k not in seen:
                    seen.add(k)
                    stack.append(k)
    return sorted(seen)


def _oracle_cost(egraph: EGraph, selection: dict[int, int]) -> int | float:
    """DAG cost of ``selection`` from the roots, INF when it reaches a cycle."""
    state: dict[int, int] = {}  # 1 on the DFS path, 2 done
    total = 0
    for root in egraph.roots:
        if state.get(root) == 2:
            continue
        stack = [(root, iter(egraph.node_child_classes[selection[root]]))]
        state[root] = 1
        total += int(egraph.node_cost[selection[root]])
        while stack:
            c, it = stack[-1]
            k = next(it, None)
            if k is None:
                state[c] = 2
                stack.pop()
                continue
            s = state.get(k)
            if s == 1:
                return INF
            if s is None:
                state[k] = 1
                total += int(egraph.node_cost[selection[k]])
                stack.append((k, iter(egraph.node_child_classes[selection[k]])))
    return total
