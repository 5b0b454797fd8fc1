"""Seeded synthetic e-graphs and the bundled motivating example."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .egraph import EGraph, ENode, load_egraph


def motivating_example() -> EGraph:
    """The ten-node e-graph for ``not a and (a or not b)``.

    Greedy extraction costs 17 on it; the optimum is 16, obtained by sharing
    ``not a`` between the root and the De Morgan form of the disjunction.
    """
    with resources.files("egx.data").joinpath("motivating.json").open("rb") as fh:
        return load_egraph(fh)


def layered_egraph(
    seed: int,
    layers: int = 4,
    classes_per_layer: int | tuple[int, int] = 3,
    nodes_per_class: int | tuple[int, int] = (1, 3),
    max_fan_in: int = 3,
    cost_range: tuple[int, int] = (1, 100),
    back_edge_prob: float = 0.0,
    roots: int = 1,
) -> EGraph:
    """Random layered e-graph.

    Layer 0 holds leaves.  A node in a higher layer draws 0 to ``max_fan_in``
    children from the classes of lower layers (0 children makes it a leaf).
    With ``back_edge_prob`` > 0 each child may instead come from the node's
    own or a higher layer, which introduces class cycles.  Roots are taken
    from the top layer.
    """
    rng = np.random.default_rng(seed)

    def draw(spec) -> int:
        if isinstance(spec, int):
            return spec
        lo, hi = spec
        return int(rng.integers(lo, hi + 1))

    layer_classes: list[list[str]] = []
    n_class = 0
    for _ in range(layers):
        k = max(1, draw(classes_per_layer))
        layer_classes.append([f"c{n_class + j}" for j in range(k)])
        n_class += k
    all_classes = [c for layer in layer_classes for c in layer]

    nodes: list[ENode] = []
    for depth, classes in enumerate(layer_classes):
        lower = [c for layer in layer_classes[:depth] for c in layer]
        for cid in classes:
            for _ in range(max(1, draw(nodes_per_class))):
                children: list[str] = []
                if depth > 0:
                    for _ in range(int(rng.integers(0, max_fan_in + 1))):
                        if back_edge_prob and rng.random() < back_edge_prob:
                            pool = all_classes[all_classes.index(layer_classes[depth][0]):]
                        else:
                            pool = lower
                        children.append(pool[int(rng.integers(len(pool)))])
                nodes.append(
                    ENode(
                        id=f"n{len(nodes)}",
                        op=f"op{len(children)}",
                        children=tuple(children),
                        eclass=cid,
                        cost=int(rng.integers(cost_range[0], cost_range[1] + 1)),
                    )
                )
    top = layer_classes[-1]
    picks = rng.choice(len(top), size=min(roots, len(top)), replace=False)
    return EGraph(nodes, [top[int(i)] for i in sorted(picks)])
