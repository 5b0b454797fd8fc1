"""Threshold pruning of candidate e-nodes from heuristic per-node costs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .egraph import INF, EGraph
from .greedy import ClassCosts

NO_PRUNE = INF
DEFAULT_THETA = Fraction(5, 4)


def parse_theta(text: str | int | float | Fraction) -> Fraction | float:
    """Read a threshold such as ``"1.25"``, ``"5/4"`` or ``"inf"`` exactly."""
    if isinstance(text, str) and text.strip().lower() in ("inf", "infinity", "none"):
        return NO_PRUNE
    if isinstance(text, float):
        if text == INF:
            return NO_PRUNE
        text = repr(text)
    try:
        theta = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"invalid threshold {text!r}") from None
    if theta < 1:
        raise ValueError(f"threshold must be >= 1, got {theta}")
    return theta


def format_theta(theta: Fraction | float) -> str:
    if theta == NO_PRUNE:
        return "inf"
    return f"{theta.numerator}/{theta.denominator}"


@dataclass
class PruneMask:
    theta: Fraction | float
    pruned: set[int] = field(default_factory=set)
    retained: dict[int, list[int]] = field(default_factory=dict)
    dead_classes: set[int] = field(default_factory=set)

    def pruned_ids(self, egraph: EGraph) -> list[str]:
        return [egraph.node_ids[n] for n in sorted(self.pruned)]

    def retained_ids(self, egraph: EGraph) -> dict[str, list[str]]:
        return {
            egraph.class_ids[c]: [egraph.node_ids[n] for n in ns]
            for c, ns in sorted(self.retained.items())
        }

    def ratio(self, egraph: EGraph) -> float:
        return len(self.pruned) / egraph.num_nodes if egraph.num_nodes else 0.0

    def to_json(self, egraph: EGraph) -> dict:
        return {"theta": format_theta(self.theta), "pruned": self.pruned_ids(egraph)}


def prune(egraph: EGraph, costs: ClassCosts, theta: Fraction | float | str = DEFAULT_THETA) -> PruneMask:
    """Keep, per class, the nodes whose heuristic cost is within ``theta`` of the class minimum.

    The comparison ``node_best <= cost_min * theta`` is done in integers
    (``node_best * q <= cost_min * p`` for ``theta = p/q``).  Nodes that never
    got a finite cost are always pruned, and classes with no finite member are
    reported as dead.
    """
    theta = parse_theta(theta)
    mask = PruneMask(theta)
    node_best = costs.node_best
    for c, members in enumerate(egraph.class_nodes):
        finite = [n for n in members if node_best[n] != INF]
        if not finite:
            mask.dead_classes.add(c)
            mask.pruned.update(members)
            continue
        cost_min = min(node_best[n] for n in finite)
        if theta == NO_PRUNE:
            keep = finite
        else:
            p, q = theta.numerator, theta.denominator
            keep = [n for n in finite if node_best[n] * q <= cost_min * p]
        mask.retained[c] = keep
        kept = set(keep)
        mask.pruned.update(n for n in members if n not in kept)
    return mask


def store_mask(mask: PruneMask, egraph: EGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mask.to_json(egraph), fh, indent=1)
