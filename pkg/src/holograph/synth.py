"""Two-clique sanity dataset with a known answer."""

from __future__ import annotations

import numpy as np

from holograph.graphprep import Graph, write_dataset
from holograph.rng import rng_stream


def two_cliques(
    seed: int = 0,
    clique_size: int = 50,
    num_features: int = 16,
    bridges: int = 3,
    noise: float = 0.1,
) -> Graph:
    """Two complete subgraphs joined by a few random bridge edges.

    Nodes ``0..clique_size-1`` are class 0, the rest class 1. Class 0 features
    put weight 1 on the first half of the feature axes, class 1 on the
    second half (orthogonal prototypes), plus Gaussian noise.
    """
    rng = rng_stream(seed, "synth")
    V = 2 * clique_size
    edges = []
    for base in (0, clique_size):
        for i in range(clique_size):
            for j in range(i + 1, clique_size):
                edges.append((base + i, base + j))
    picked = set()
    while len(picked) < bridges:
        u = int(rng.integers(0, clique_size))
        v = int(rng.integers(clique_size, V))
        picked.add((u, v))
    edges.extend(sorted(picked))
    labels = np.repeat([0, 1], clique_size)
    half = num_features // 2
    protos = np.zeros((2, num_features))
    protos[0, :half] = 1.0
    protos[1, half:] = 1.0
    features = protos[labels] + noise * rng.standard_normal((V, num_features))
    return Graph.from_edges(V, np.array(edges), features, labels, num_classes=2)


def write_two_cliques(out_dir, seed: int = 0, **kwargs) -> Graph:
    graph = two_cliques(seed, **kwargs)
    write_dataset(graph, out_dir)
    return graph
