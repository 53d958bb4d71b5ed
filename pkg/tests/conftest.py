import math

import numpy as np
import pytest

from slubench.lattice import Arc, Lattice, make_lattice


@pytest.fixture
def diamond():
    """0 -(the)-> 1 -(cat ln3 | hat ln1)-> 2 -(sat)-> 3."""
    arcs = [
        Arc(0, 1, "the", 0.0, 0.0),
        Arc(1, 2, "cat", math.log(3.0), 0.0),
        Arc(1, 2, "hat", math.log(1.0), 0.0),
        Arc(2, 3, "sat", 0.0, 0.0),
    ]
    return make_lattice([0.0, 0.3, 0.6, 0.9], arcs)


@pytest.fixture
def single_path():
    arcs = [
        Arc(0, 1, "turn", -0.1, -0.2),
        Arc(1, 2, "lights", -0.3, -0.1),
        Arc(2, 3, "on", -0.2, -0.4),
    ]
    return make_lattice([0.0, 0.3, 0.6, 0.9], arcs)


def random_lattice(rng: np.random.Generator, max_nodes: int = 10,
                   vocab=("a", "b", "c", "d", "e")) -> Lattice:
    """Random layered DAG with optional skip arcs; always valid."""
    n_layers = int(rng.integers(2, 6))
    widths = [1] + [int(rng.integers(1, 3)) for _ in range(n_layers - 2)] + [1]
    while sum(widths) > max_nodes and len(widths) > 2:
        widths.pop(1)
    nodes = []
    layer_of = []
    for layer, width in enumerate(widths):
        for _ in range(width):
            layer_of.append(layer)
            nodes.append(layer * 0.3)
    index_by_layer = {}
    for idx, layer in enumerate(layer_of):
        index_by_layer.setdefault(layer, []).append(idx)

    arcs = []
    for layer in range(len(widths) - 1):
        here, there = index_by_layer[layer], index_by_layer[layer + 1]
        for u in here:
            targets = {there[int(rng.integers(len(there)))]}
            if rng.random() < 0.5:
                targets.add(there[int(rng.integers(len(there)))])
            for v in targets:
                arcs.append(Arc(u, v, vocab[int(rng.integers(len(vocab)))],
                                float(rng.uniform(-3.0, 0.0)),
                                float(rng.uniform(-1.0, 0.0))))
        for v in there:
            if not any(a.to_node == v for a in arcs):
                u = here[int(rng.integers(len(here)))]
                arcs.append(Arc(u, v, vocab[int(rng.integers(len(vocab)))],
                                float(rng.uniform(-3.0, 0.0)),
                                float(rng.uniform(-1.0, 0.0))))
        # occasional skip arc over one layer
        if layer + 2 < len(widths) and rng.random() < 0.3:
            u = here[int(rng.integers(len(here)))]
            v = index_by_layer[layer + 2][int(rng.integers(len(index_by_layer[layer + 2])))]
            arcs.append(Arc(u, v, vocab[int(rng.integers(len(vocab)))],
                            float(rng.uniform(-3.0, 0.0)),
                            float(rng.uniform(-1.0, 0.0))))
    return make_lattice(nodes, arcs)


def enumerate_paths(lat: Lattice, lm_scale: float = 1.0):
    """All start->final paths as (arc index tuple, words tuple, weight)."""
    out = {}
    for i, arc in enumerate(lat.arcs):
        out.setdefault(arc.from_node, []).append(i)
    paths = []

    def dfs(node, arc_ids, words, weight):
        if node == lat.final:
            paths.append((tuple(arc_ids), tuple(words), weight))
            return
        for i in out.get(node, []):
            arc = lat.arcs[i]
            dfs(arc.to_node, arc_ids + [i], words + [arc.word],
                weight + arc.weight(lm_scale))

    dfs(lat.start, [], [], 0.0)
    return paths
