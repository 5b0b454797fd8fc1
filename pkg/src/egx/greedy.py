"""Bottom-up greedy extraction by worklist fixpoint.

Each e-node gets a *cost set*: the node chosen for every class its subterm
needs, together with the summed cost of those distinct nodes.  A class keeps
the cheapest cost set seen among its members, and improvements are pushed to
the parent nodes until nothing changes.

The worklist pops nodes in order of their class's topological level in the
condensed class graph (ties by node index).  On graphs without class cycles
this evaluates every class exactly once against final child selections, which
is what makes the batched variant in :mod:`egx.parallel` land on the same
fixpoint.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .egraph import INF, EGraph, ExtractionResult, InfeasibleError

COST_KINDS = ("dag", "tree", "depth")


@dataclass(frozen=True)
class CostSet:
    """Selection record for one node.

    ``classes``/``nodes`` are parallel arrays sorted by class index: the
    support of the node's subterm (DAG mode).  Tree and depth modes only
    carry the node's own entry.
    """

    node: int
    total: int | float
    classes: np.ndarray
    nodes: np.ndarray

    @property
    def chosen(self) -> dict[int, int]:
        return dict(zip(self.classes.tolist(), self.nodes.tolist()))

    def named(self, egraph: EGraph) -> dict[str, str]:
        return egraph.to_ids(self.chosen)


@dataclass
class ClassCosts:
    """Per-class best cost sets and per-node best totals."""

    best: dict[int, CostSet] = field(default_factory=dict)
    node_best: list = field(default_factory=list)

    @classmethod
    def empty(cls, egraph: EGraph) -> "ClassCosts":
        return cls({}, [INF] * egraph.num_nodes)

    def class_totals(self) -> dict[int, int | float]:
        return {c: cs.total for c, cs in self.best.items()}

    def class_min(self, egraph: EGraph, c: int) -> int | float:
        return min(self.node_best[n] for n in egraph.class_nodes[c])


def _singleton(egraph: EGraph, node: int, total) -> CostSet:
    c = egraph.node_class[node]
    return CostSet(
        node,
        total,
        np.array([c], dtype=egraph.class_index_dtype),
        np.array([node], dtype=np.uint32),
    )


def _infinite(egraph: EGraph, node: int) -> CostSet:
    return _singleton(egraph, node, INF)


def is_ready(egraph: EGraph, node: int, costs: ClassCosts) -> bool:
    best = costs.best
    return all(k in best for k in egraph.node_child_classes[node])


def calculate_cost_set(
    egraph: EGraph, node: int, costs: ClassCosts, cost_kind: str = "dag"
) -> CostSet:
    """Cost set of ``node`` given the current per-class bests.

    DAG mode unions the children's supports (a class shared by several
    children appears once; on conflicting entries the lowest child class
    wins) and sums the distinct nodes.  A support that already contains the
    node's own class would close a cycle and costs ``INF``.
    """
    kids = egraph.node_child_classes[node]
    own_cost = int(egraph.node_cost[node])
    if egraph.self_cyclic[node]:
        return _infinite(egraph, node)
    if not kids:
        return _singleton(egraph, node, own_cost)
    try:
        child_sets = [costs.best[k] for k in kids]
    except KeyError as exc:
        raise ValueError(
            f"child class {egraph.class_ids[exc.args[0]]!r} of node "
            f"{egraph.node_ids[node]!r} has no selection yet"
        ) from None

    if cost_kind == "tree":
        totals = [costs.best[k].total for k in egraph.node_children[node]]
        return _singleton(egraph, node, own_cost + sum(totals))
    if cost_kind == "depth":
        return _singleton(egraph, node, own_cost + max(cs.total for cs in child_sets))
    if cost_kind != "dag":
        raise ValueError(f"unknown cost kind {cost_kind!r}")

    if any(cs.total == INF for cs in child_sets):
        return _infinite(egraph, node)
    if len(child_sets) == 1:
        classes, nodes = child_sets[0].classes, child_sets[0].nodes
    else:
        all_classes = np.concatenate([cs.classes for cs in child_sets])
        all_nodes = np.concatenate([cs.nodes for cs in child_sets])
        classes, first = np.unique(all_classes, return_index=True)
        nodes = all_nodes[first]
    own = egraph.node_class[node]
    pos = int(np.searchsorted(classes, own))
    if pos < len(classes) and classes[pos] == own:
        return _infinite(egraph, node)
    classes = np.insert(classes, pos, own).astype(egraph.class_index_dtype, copy=False)
    nodes = np.insert(nodes, pos, node).astype(np.uint32, copy=False)
    total = int(egraph.node_cost[nodes].sum())
    return CostSet(node, total, classes, nodes)


def initial_worklist(egraph: EGraph) -> tuple[list[tuple[int, int]], list[bool]]:
    levels = egraph.class_levels[egraph.node_class].tolist()
    heap = list(zip(levels, range(egraph.num_nodes)))
    heapq.heapify(heap)
    return heap, [True] * egraph.num_nodes


def enqueue_parents(
    egraph: EGraph, c: int, heap: list, queued: list[bool]
) -> None:
    levels = egraph.class_levels
    for p in egraph.parents[c]:
        if not queued[p]:
            queued[p] = True
            heapq.heappush(heap, (int(levels[egraph.node_class[p]]), p))


def finish_extraction(
    egraph: EGraph, costs: ClassCosts, cost_kind: str
) -> ExtractionResult:
    """Project every class onto its best node and keep the root-reachable part."""
    selection = {c: cs.node for c, cs in costs.best.items()}
    reach = egraph.reachable_classes(selection)
    missing = [egraph.class_ids[c] for c in reach if c not in selection]
    if missing:
        raise InfeasibleError(
            f"no finite-cost selection for e-class(es) {', '.join(missing[:5])}"
        )
    result = ExtractionResult.from_selection(egraph, selection, cost_kind)
    if not result.valid:
        result.status = "cyclic"
    return result


TraceHook = Callable[[int, int, "int | float"], None]


def extract_greedy(
    egraph: EGraph,
    cost_kind: str = "dag",
    trace: TraceHook | None = None,
) -> tuple[ExtractionResult, ClassCosts]:
    """Sequential greedy extraction.

    ``trace(class, node, total)`` is called on every class improvement.
    Raises :class:`InfeasibleError` when a root-reachable class never gets a
    finite selection.
    """
    if cost_kind not in COST_KINDS:
        raise ValueError(f"unknown cost kind {cost_kind!r}")
    costs = ClassCosts.empty(egraph)
    heap, queued = initial_worklist(egraph)
    best, node_best = costs.best, costs.node_best
    while heap:
        _, n = heapq.heappop(heap)
        queued[n] = False
        if not is_ready(egraph, n, costs):
            continue
        cs = calculate_cost_set(egraph, n, costs, cost_kind)
        if cs.total < node_best[n]:
            node_best[n] = cs.total
        c = int(egraph.node_class[n])
        prev = best.get(c)
        if cs.total < (INF if prev is None else prev.total):
            best[c] = cs
            if trace is not None:
                trace(c, n, cs.total)
            enqueue_parents(egraph, c, heap, queued)
    return finish_extraction(egraph, costs, cost_kind), costs
