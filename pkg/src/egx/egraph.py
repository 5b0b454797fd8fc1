"""E-graph instances: loading, validation, cost evaluation and redundancy elimination.

An :class:`EGraph` is immutable once built.  Nodes and classes keep the string
identifiers they were loaded with, and every one of them also gets a dense
integer index (file order) that the extraction algorithms work with.
"""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from functools import cached_property
from typing import IO, Iterable, Mapping

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

INF = math.inf

# all finite totals are sums of a subset of node costs, so bounding the grand
# total keeps every int64 accumulation exact
_COST_LIMIT = 2**62


class EGraphError(ValueError):
    """Malformed e-graph input or an invalid extraction."""


class InfeasibleError(RuntimeError):
    """No finite-cost acyclic extraction exists for the requested roots."""


@dataclass(frozen=True)
class ENode:
    id: str
    op: str
    children: tuple[str, ...]  # e-class ids, in operand order
    eclass: str
    cost: int


class EGraph:
    """Immutable e-graph with dense indexes.

    Dense attributes (all indexed by node or class position):

    - ``node_ids`` / ``class_ids``: the original string ids
    - ``node_class``: owning class of each node
    - ``node_cost``: int64 cost of each node
    - ``node_children``: child class indexes of each node, operand order
    - ``node_child_classes``: sorted unique child class indexes
    - ``class_nodes``: member node indexes of each class, ascending
    - ``parents``: node indexes that use each class as a child
    - ``roots``: root class indexes
    - ``self_cyclic``: nodes that list their own class as a child
    """

    def __init__(self, nodes: Iterable[ENode], roots: Iterable[str]):
        nodes = list(nodes)
        self.node_ids: list[str] = [n.id for n in nodes]
        self.node_index: dict[str, int] = {}
        for i, nid in enumerate(self.node_ids):
            if nid in self.node_index:
                raise EGraphError(f"duplicate node id {nid!r}")
            self.node_index[nid] = i

        self.class_ids: list[str] = []
        self.class_index: dict[str, int] = {}
        for n in nodes:
            if n.eclass not in self.class_index:
                self.class_index[n.eclass] = len(self.class_ids)
                self.class_ids.append(n.eclass)

        self.ops: list[str] = [n.op for n in nodes]
        costs = []
        for n in nodes:
            if isinstance(n.cost, bool) or not isinstance(n.cost, (int, np.integer)):
                raise EGraphError(f"node {n.id!r}: cost {n.cost!r} is not an integer")
            if n.cost < 0:
                raise EGraphError(f"node {n.id!r}: negative cost {n.cost}")
            costs.append(int(n.cost))
        if sum(costs) >= _COST_LIMIT:
            raise EGraphError("total node cost overflows the 63-bit cost range")
        self.node_cost = np.array(costs, dtype=np.int64)
        self.node_class = np.array(
            [self.class_index[n.eclass] for n in nodes], dtype=np.int64
        )

        node_children = []
        for n in nodes:
            try:
                node_children.append(tuple(self.class_index[c] for c in n.children))
            except KeyError as exc:
                raise EGraphError(
                    f"node {n.id!r} references unknown e-class {exc.args[0]!r}"
                ) from None
        self.node_children: list[tuple[int, ...]] = node_children
        self.node_child_classes: list[tuple[int, ...]] = [
            tuple(sorted(set(ch))) for ch in node_children
        ]

        members: list[list[int]] = [[] for _ in self.class_ids]
        for i, c in enumerate(self.node_class):
            members[c].append(i)
        self.class_nodes: list[tuple[int, ...]] = [tuple(m) for m in members]

        parents: list[set[int]] = [set() for _ in self.class_ids]
        for i, chs in enumerate(self.node_child_classes):
            for c in chs:
                parents[c].add(i)
        self.parents: list[tuple[int, ...]] = [tuple(sorted(p)) for p in parents]

        self.self_cyclic = np.array(
            [self.node_class[i] in chs for i, chs in enumerate(self.node_child_classes)],
            dtype=bool,
        )

        root_list = []
        for r in roots:
            if r not in self.class_index:
                raise EGraphError(f"root e-class {r!r} has no nodes")
            idx = self.class_index[r]
            if idx not in root_list:
                root_list.append(idx)
        if not root_list:
            raise EGraphError("e-graph has no root e-classes")
        self.roots: tuple[int, ...] = tuple(root_list)

    # -- sizes -------------------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_classes(self) -> int:
        return len(self.class_ids)

    @property
    def class_index_dtype(self) -> type:
        """Narrowest unsigned type holding every class index."""
        return np.uint16 if self.num_classes < 65536 else np.uint32

    # -- string views ------------------------------------------------------

    def node(self, node_id: str) -> ENode:
        i = self.node_index[node_id]
        return ENode(
            id=node_id,
            op=self.ops[i],
            children=tuple(self.class_ids[c] for c in self.node_children[i]),
            eclass=self.class_ids[self.node_class[i]],
            cost=int(self.node_cost[i]),
        )

    @property
    def nodes(self) -> dict[str, ENode]:
        return {nid: self.node(nid) for nid in self.node_ids}

    @property
    def classes(self) -> dict[str, list[str]]:
        return {
            cid: [self.node_ids[i] for i in self.class_nodes[c]]
            for c, cid in enumerate(self.class_ids)
        }

    @property
    def root_ids(self) -> list[str]:
        return [self.class_ids[r] for r in self.roots]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EGraph):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and set(self.root_ids) == set(other.root_ids)
        )

    def __repr__(self) -> str:
        return (
            f"EGraph(nodes={self.num_nodes}, classes={self.num_classes}, "
            f"roots={self.root_ids!r})"
        )

    # -- derived structure -------------------------------------------------

    @cached_property
    def _condensation(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.num_classes
        src, dst = [], []
        for i, chs in enumerate(self.node_child_classes):
            c = int(self.node_class[i])
            for k in chs:
                src.append(c)
                dst.append(k)
        graph = csr_matrix(
            (np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n, n)
        )
        n_comp, comp = connected_components(graph, directed=True, connection="strong")
        comp_children: list[set[int]] = [set() for _ in range(n_comp)]
        for a, b in zip(src, dst):
            if comp[a] != comp[b]:
                comp_children[comp[a]].add(int(comp[b]))
        level = [-1] * n_comp
        for start in range(n_comp):
            if level[start] >= 0:
                continue
            stack = [(start, iter(comp_children[start]))]
            while stack:
                node, it = stack[-1]
                child = next(it, None)
                if child is None:
                    stack.pop()
                    level[node] = 1 + max(
                        (level[k] for k in comp_children[node]), default=-1
                    )
                elif level[child] < 0:
                    stack.append((child, iter(comp_children[child])))
        comp = np.asarray(comp, dtype=np.int64)
        return comp, np.asarray(level, dtype=np.int64)[comp]

    @property
    def class_scc(self) -> np.ndarray:
        """Strongly connected component id of every class in the class graph."""
        return self._condensation[0]

    @property
    def class_levels(self) -> np.ndarray:
        """Topological level of every class in the condensed class graph.

        Classes in one strongly connected component share a level, and every
        class sits strictly above all classes it can reach outside its own
        component.  Leaves are level 0.
        """
        return self._condensation[1]

    def reachable_classes(self, selection: Mapping[int, int]) -> list[int]:
        """Classes reachable from the roots through ``selection`` (dense)."""
        seen: set[int] = set()
        order = []
        stack = list(self.roots)
        while stack:
            c = stack.pop()
            if c in seen:
                continue
            seen.add(c)
            order.append(c)
            n = selection.get(c)
            if n is not None:
                stack.extend(self.node_child_classes[n])
        return order

    def to_dense(self, choices: Mapping[str, str]) -> dict[int, int]:
        try:
            return {self.class_index[c]: self.node_index[n] for c, n in choices.items()}
        except KeyError as exc:
            raise EGraphError(f"unknown id {exc.args[0]!r} in choices") from None

    def to_ids(self, selection: Mapping[int, int]) -> dict[str, str]:
        return {
            self.class_ids[c]: self.node_ids[n] for c, n in sorted(selection.items())
        }


# ---------------------------------------------------------------------------
# loading and storing


def _scaled_cost(raw, node_id: str, scale: int | None, rounding: str) -> int:
    if isinstance(raw, bool) or not isinstance(raw, (int, float, Decimal)):
        raise EGraphError(f"node {node_id!r}: cost {raw!r} is not a number")
    value = Fraction(raw)
    if scale is not None:
        value *= scale
    if value.denominator != 1:
        if scale is None or rounding == "exact":
            raise EGraphError(
                f"node {node_id!r}: cost {raw} is not an integer; pass a scale"
            )
        if rounding == "nearest":
            value = Fraction(round(value))
        elif rounding == "floor":
            value = Fraction(math.floor(value))
        elif rounding == "ceil":
            value = Fraction(math.ceil(value))
        else:
            raise ValueError(f"unknown rounding mode {rounding!r}")
    if value < 0:
        raise EGraphError(f"node {node_id!r}: negative cost {raw}")
    return int(value)


def parse_egraph(
    doc: Mapping, scale: int | None = None, rounding: str = "nearest"
) -> EGraph:
    """Build an :class:`EGraph` from an already-decoded JSON document.

    Children in the document name *nodes*; each is resolved to the e-class of
    the node it names.  With ``scale`` every cost is multiplied by it and then
    rounded (``nearest``, ``floor``, ``ceil`` or ``exact``, which rejects
    anything non-integral).
    """
    if scale is not None and (not isinstance(scale, int) or scale < 1):
        raise ValueError("scale must be a positive integer")
    if not isinstance(doc, Mapping) or "nodes" not in doc:
        raise EGraphError("e-graph document needs a 'nodes' object")
    raw_nodes = doc["nodes"]
    if not isinstance(raw_nodes, Mapping):
        raise EGraphError("'nodes' must map node ids to node records")
    roots = doc.get("root_eclasses")
    if not roots:
        raise EGraphError("e-graph document has no 'root_eclasses'")

    owner: dict[str, str] = {}
    for nid, rec in raw_nodes.items():
        try:
            owner[str(nid)] = str(rec["eclass"])
        except (KeyError, TypeError):
            raise EGraphError(f"node {nid!r} lacks an 'eclass'") from None

    nodes = []
    for nid, rec in raw_nodes.items():
        nid = str(nid)
        children = []
        for ch in rec.get("children", []):
            if str(ch) not in owner:
                raise EGraphError(f"node {nid!r} references unknown node {ch!r}")
            children.append(owner[str(ch)])
        nodes.append(
            ENode(
                id=nid,
                op=str(rec.get("op", "")),
                children=tuple(children),
                eclass=owner[nid],
                cost=_scaled_cost(rec.get("cost", 1), nid, scale, rounding),
            )
        )
    return EGraph(nodes, [str(r) for r in roots])


def load_egraph(
    source: str | os.PathLike | IO,
    scale: int | None = None,
    rounding: str = "nearest",
) -> EGraph:
    """Load an e-graph from a JSON file path or a readable stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    try:
        doc = json.loads(data, parse_float=Decimal)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise EGraphError(f"malformed e-graph JSON: {exc}") from None
    return parse_egraph(doc, scale=scale, rounding=rounding)


def egraph_to_json(egraph: EGraph) -> dict:
    """Serialize to the interchange document (children name class members)."""
    rep = [egraph.node_ids[members[0]] for members in egraph.class_nodes]
    nodes = {}
    for i, nid in enumerate(egraph.node_ids):
        nodes[nid] = {
            "op": egraph.ops[i],
            "children": [rep[c] for c in egraph.node_children[i]],
            "eclass": egraph.class_ids[egraph.node_class[i]],
            "cost": int(egraph.node_cost[i]),
        }
    return {"nodes": nodes, "root_eclasses": egraph.root_ids}


def store_egraph(egraph: EGraph, sink: str | os.PathLike | IO) -> None:
    text = json.dumps(egraph_to_json(egraph), indent=1)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
    elif isinstance(sink, io.TextIOBase):
        sink.write(text)
    else:
        sink.write(text.encode("utf-8"))


# ---------------------------------------------------------------------------
# redundancy elimination


def deduplicate(egraph: EGraph, aggressive: bool = False) -> tuple[EGraph, set[str]]:
    """Keep one cheapest node among same-class nodes with identical child classes.

    Nodes collide when they share ``(op, child class set)``; with
    ``aggressive`` the operator is ignored.  Ties keep the smallest index.
    """
    keep: dict[tuple, int] = {}
    for i in range(egraph.num_nodes):
        kids = egraph.node_child_classes[i]
        key = (int(egraph.node_class[i]), kids) if aggressive else (
            int(egraph.node_class[i]), egraph.ops[i], kids
        )
        j = keep.get(key)
        if j is None or egraph.node_cost[i] < egraph.node_cost[j]:
            keep[key] = i
    kept = sorted(keep.values())
    if len(kept) == egraph.num_nodes:
        return egraph, set()
    kept_set = set(kept)
    removed = {egraph.node_ids[i] for i in range(egraph.num_nodes) if i not in kept_set}
    nodes = [egraph.node(egraph.node_ids[i]) for i in kept]
    return EGraph(nodes, egraph.root_ids), removed


# ---------------------------------------------------------------------------
# extraction checks and cost models


@dataclass
class ValidityReport:
    valid: bool
    missing_roots: list[str] = field(default_factory=list)
    missing_children: list[tuple[str, str]] = field(default_factory=list)
    wrong_class: list[tuple[str, str]] = field(default_factory=list)
    cycle: list[str] | None = None

    def __bool__(self) -> bool:
        return self.valid


def _find_cycle(egraph: EGraph, selection: Mapping[int, int]) -> list[int] | None:
    """Return the classes of one selection cycle reachable from the roots."""
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    for root in egraph.roots:
        if root in state:
            continue
        path = [root]
        iters = [iter(egraph.node_child_classes[selection[root]])]
        state[root] = 1
        while iters:
            k = next(iters[-1], None)
            if k is None:
                state[path.pop()] = 2
                iters.pop()
                continue
            s = state.get(k)
            if s == 1:
                return path[path.index(k):]
            if s is None:
                state[k] = 1
                path.append(k)
                iters.append(iter(egraph.node_child_classes[selection[k]]))
    return None


def check_selection(egraph: EGraph, selection: Mapping[int, int]) -> ValidityReport:
    """Dense-index form of :func:`validate_extraction`."""
    report = ValidityReport(valid=True)
    for c, n in selection.items():
        if egraph.node_class[n] != c:
            report.wrong_class.append((egraph.class_ids[c], egraph.node_ids[n]))
    report.missing_roots = [egraph.class_ids[r] for r in egraph.roots if r not in selection]
    for c in egraph.reachable_classes(selection):
        n = selection.get(c)
        if n is None:
            continue
        for k in egraph.node_child_classes[n]:
            if k not in selection:
                report.missing_children.append((egraph.node_ids[n], egraph.class_ids[k]))
    if report.missing_roots or report.missing_children or report.wrong_class:
        report.valid = False
        return report
    cycle = _find_cycle(egraph, selection)
    if cycle is not None:
        report.cycle = [egraph.class_ids[c] for c in cycle]
        report.valid = False
    return report


def validate_extraction(egraph: EGraph, choices: Mapping[str, str]) -> ValidityReport:
    """Check root coverage, child coverage and acyclicity of ``choices``."""
    return check_selection(egraph, egraph.to_dense(choices))


def selection_dag_cost(egraph: EGraph, selection: Mapping[int, int]) -> int:
    """Sum of node costs over the distinct nodes reachable from the roots."""
    reach = egraph.reachable_classes(selection)
    return int(sum(int(egraph.node_cost[selection[c]]) for c in reach))


def _require_valid(egraph: EGraph, selection: Mapping[int, int]) -> None:
    report = check_selection(egraph, selection)
    if not report.valid:
        raise EGraphError(f"invalid extraction: {report}")


def evaluate_dag_cost(egraph: EGraph, choices: Mapping[str, str]) -> int:
    """DAG cost of a valid extraction: shared subterms are counted once."""
    selection = egraph.to_dense(choices)
    _require_valid(egraph, selection)
    return selection_dag_cost(egraph, selection)


def _class_costs(egraph: EGraph, selection: Mapping[int, int], combine) -> dict[int, int]:
    memo: dict[int, int] = {}
    for root in egraph.roots:
        stack = [root]
        while stack:
            c = stack[-1]
            if c in memo:
                stack.pop()
                continue
            n = selection[c]
            pending = [k for k in egraph.node_child_classes[n] if k not in memo]
            if pending:
                stack.extend(pending)
                continue
            stack.pop()
            memo[c] = combine(int(egraph.node_cost[n]), [memo[k] for k in egraph.node_children[n]])
    return memo


def evaluate_tree_cost(egraph: EGraph, choices: Mapping[str, str]) -> int:
    """Tree cost: every operand occurrence is costed separately, summed over roots."""
    selection = egraph.to_dense(choices)
    _require_valid(egraph, selection)
    memo = _class_costs(egraph, selection, lambda own, kids: own + sum(kids))
    return sum(memo[r] for r in egraph.roots)


def evaluate_depth_cost(egraph: EGraph, choices: Mapping[str, str]) -> int:
    """Depth cost: node cost plus the costliest operand, maximized over roots."""
    selection = egraph.to_dense(choices)
    _require_valid(egraph, selection)
    memo = _class_costs(egraph, selection, lambda own, kids: own + max(kids, default=0))
    return max(memo[r] for r in egraph.roots)


COST_EVALUATORS = {
    "dag": evaluate_dag_cost,
    "tree": evaluate_tree_cost,
    "depth": evaluate_depth_cost,
}


@dataclass
class ExtractionResult:
    """One chosen node per root-reachable class, plus its evaluation."""

    choices: dict[str, str]
    valid: bool
    dag_cost: int | float = INF
    cost_kind: str = "dag"
    cost: int | float = INF
    status: str = "ok"

    @classmethod
    def from_selection(
        cls,
        egraph: EGraph,
        selection: Mapping[int, int],
        cost_kind: str = "dag",
        status: str = "ok",
    ) -> "ExtractionResult":
        """Restrict ``selection`` to the root-reachable classes and cost it."""
        reach = egraph.reachable_classes(selection)
        trimmed = {c: selection[c] for c in reach if c in selection}
        choices = egraph.to_ids(trimmed)
        report = check_selection(egraph, trimmed)
        if not report.valid:
            return cls(choices, False, INF, cost_kind, INF, status)
        dag = selection_dag_cost(egraph, trimmed)
        cost = dag if cost_kind == "dag" else COST_EVALUATORS[cost_kind](egraph, choices)
        return cls(choices, True, dag, cost_kind, cost, status)

    def selection(self, egraph: EGraph) -> dict[int, int]:
        return egraph.to_dense(self.choices)

    def to_json(self) -> dict:
        return {
            "choices": dict(self.choices),
            "dag_cost": None if self.dag_cost == INF else int(self.dag_cost),
            "valid": self.valid,
        }
