import numpy as np
import pytest

from resilient_consensus import DirectedGraph, LtiModel, design_controller, normalized_laplacian


@pytest.fixture
def example1_graph():
    # 4 agents, unit weights: edges 1->0, 0->1, 1->2, 0->3 (0-based)
    return DirectedGraph.from_edges(4, [[1, 0], [0, 1], [1, 2], [0, 3]])


@pytest.fixture
def example1_spectrum(example1_graph):
    return normalized_laplacian(example1_graph)


@pytest.fixture
def chain5_graph():
    # followers of the bundled 5-agent topology: 1 is the sole root
    return DirectedGraph.from_edges(5, [[1, 0], [1, 2], [2, 3], [3, 4]])


@pytest.fixture
def integrator():
    return LtiModel(A=[[1.0]], B=[[1.0]])


@pytest.fixture
def rotation2d():
    return LtiModel(A=[[0.0, -1.0], [1.0, 0.0]], B=[[0.0], [1.0]])


@pytest.fixture
def auv_model():
    return LtiModel(
        A=[[0.65, 0.54, 0.0, -0.0019],
           [0.21, 1.48, 0.0, -0.01],
           [0.83, 0.84, 1.0, 0.99],
           [0.11, 1.21, 0.0, 0.99]],
        B=[[0.08, 0.13],
           [-0.13, 0.20],
           [0.02, 0.09],
           [-0.07, 0.09]],
    )


@pytest.fixture
def example1_ctrl(integrator, example1_spectrum):
    return design_controller(integrator, example1_spectrum)


def random_spanning_tree_digraph(n, rng, extra_edge_factor=0.3, weighted=False):
    """Tree backbone (random parents) plus random extra edges; always has a root."""
    a = np.zeros((n, n))
    order = rng.permutation(n)
    for idx in range(1, n):
        child, parent = order[idx], order[rng.integers(0, idx)]
        a[child, parent] = rng.uniform(0.5, 2.0) if weighted else 1.0
    extra = int(extra_edge_factor * n * n)
    for _ in range(extra):
        i, j = rng.integers(0, n, size=2)
        if i != j and rng.random() < 0.5:
            a[i, j] = rng.uniform(0.5, 2.0) if weighted else 1.0
    return DirectedGraph(a)


def bfs_reachable(adjacency, start):
    """Independent reachability oracle: plain BFS over the information flow."""
    n = adjacency.shape[0]
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for v in range(n):
                if adjacency[v, u] > 0 and v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return seen


def bfs_roots(adjacency):
    n = adjacency.shape[0]
    return {r for r in range(n) if len(bfs_reachable(adjacency, r)) == n}
