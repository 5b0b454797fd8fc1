"""Batched parallel greedy extraction.

Batches come off the same level-ordered worklist as the sequential extractor
and never span two topological levels.  Within one level, classes from
different strongly connected components cannot see each other, so a batch is
split by component and the components are spread over the workers.  A worker
walks its share of the batch in worklist order against a private overlay of
the class costs; everything else is read from the state frozen at the start
of the batch.  When the batch joins, the overlays are reduced to one
candidate per class and applied in a single thread.

Because each component sees exactly the update sequence the sequential
extractor would give it, the final per-class selections match the sequential
run for any worker count and batch size.
"""

from __future__ import annotations

import heapq
import os
from collections import ChainMap
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from types import SimpleNamespace

from .egraph import INF, EGraph, ExtractionResult
from .greedy import (
    COST_KINDS,
    ClassCosts,
    CostSet,
    TraceHook,
    calculate_cost_set,
    finish_extraction,
    initial_worklist,
    is_ready,
)


def default_workers() -> int:
    """Worker count from ``EGX_THREADS``, else the CPU count."""
    env = os.environ.get("EGX_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class BatchBuffer:
    """Candidates produced by one batch."""

    batch_size: int
    inserted: list[CostSet] = field(default_factory=list)

    def dedup(self, egraph: EGraph) -> dict[int, CostSet]:
        """Cheapest candidate per class, smallest node index on ties."""
        out: dict[int, CostSet] = {}
        for cs in self.inserted:
            c = int(egraph.node_class[cs.node])
            cur = out.get(c)
            if cur is None or (cs.total, cs.node) < (cur.total, cur.node):
                out[c] = cs
        return out


@dataclass
class _GroupOutcome:
    best: dict[int, CostSet]
    node_best: dict[int, int | float]
    events: list[tuple[int, int, int | float]]


def _run_group(
    egraph: EGraph,
    costs: ClassCosts,
    cost_kind: str,
    items: list[tuple[int, int]],
    bound: tuple[int, int],
) -> _GroupOutcome:
    local: dict[int, CostSet] = {}
    view = SimpleNamespace(best=ChainMap(local, costs.best))
    node_best: dict[int, int | float] = {}
    events = []
    levels = egraph.class_levels
    heap = list(items)
    heapq.heapify(heap)
    pending = {n for _, n in items}
    while heap:
        _, n = heapq.heappop(heap)
        pending.discard(n)
        if not is_ready(egraph, n, view):
            continue
        cs = calculate_cost_set(egraph, n, view, cost_kind)
        if cs.total < node_best.get(n, costs.node_best[n]):
            node_best[n] = cs.total
        c = int(egraph.node_class[n])
        prev = view.best.get(c)
        if cs.total < (INF if prev is None else prev.total):
            local[c] = cs
            events.append((c, n, cs.total))
            for p in egraph.parents[c]:
                key = (int(levels[egraph.node_class[p]]), p)
                # parents above the batch bound go to the shared worklist at merge
                if key <= bound and p not in pending:
                    pending.add(p)
                    heapq.heappush(heap, key)
    return _GroupOutcome(local, node_best, events)


def _pop_batch(heap: list, queued: list[bool], batch_size: int) -> list[tuple[int, int]]:
    level = heap[0][0]
    batch = []
    while heap and heap[0][0] == level and len(batch) < batch_size:
        key = heapq.heappop(heap)
        queued[key[1]] = False
        batch.append(key)
    return batch


def _split(groups: list[list[tuple[int, int]]], parts: int) -> list[list[list[tuple[int, int]]]]:
    shares: list[list] = [[] for _ in range(parts)]
    loads = [0] * parts
    for g in sorted(groups, key=len, reverse=True):
        i = loads.index(min(loads))
        shares[i].append(g)
        loads[i] += len(g)
    return [s for s in shares if s]


def extract_parallel(
    egraph: EGraph,
    cost_kind: str = "dag",
    workers: int | None = None,
    batch_size: int | None = None,
    trace: TraceHook | None = None,
) -> tuple[ExtractionResult, ClassCosts]:
    """Greedy extraction with fork-join batches over ``workers`` threads.

    ``batch_size`` defaults to four times the worker count.  Nodes whose
    children are unresolved are dropped from their batch and come back when a
    child class first gets a selection.
    """
    if cost_kind not in COST_KINDS:
        raise ValueError(f"unknown cost kind {cost_kind!r}")
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ValueError("workers must be >= 1")
    batch_size = 4 * workers if batch_size is None else batch_size
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")

    costs = ClassCosts.empty(egraph)
    heap, queued = initial_worklist(egraph)
    scc = egraph.class_scc
    levels = egraph.class_levels

    def work(share):
        return [_run_group(egraph, costs, cost_kind, g, bound) for g in share]

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while heap:
            batch = _pop_batch(heap, queued, batch_size)
            bound = batch[-1]
            by_scc: dict[int, list[tuple[int, int]]] = {}
            for key in batch:
                by_scc.setdefault(int(scc[egraph.node_class[key[1]]]), []).append(key)
            groups = list(by_scc.values())
            if pool is not None and len(groups) > 1:
                shares = _split(groups, workers)
                outcomes = [o for part in pool.map(work, shares) for o in part]
            else:
                outcomes = work(groups)
            outcomes.sort(key=lambda o: o.events[0][1] if o.events else -1)

            buffer = BatchBuffer(batch_size)
            for o in outcomes:
                for n, total in o.node_best.items():
                    if total < costs.node_best[n]:
                        costs.node_best[n] = total
                buffer.inserted.extend(o.best.values())
                if trace is not None:
                    for event in o.events:
                        trace(*event)
            for c, cs in sorted(buffer.dedup(egraph).items()):
                costs.best[c] = cs
                for p in egraph.parents[c]:
                    key = (int(levels[egraph.node_class[p]]), p)
                    if key > bound and not queued[p]:
                        queued[p] = True
                        heapq.heappush(heap, key)
    finally:
        if pool is not None:
            pool.shutdown()
    return finish_extraction(egraph, costs, cost_kind), costs
