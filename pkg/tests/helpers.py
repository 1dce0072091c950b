"""Hand-built staged trees and random generators shared by the tests.

Vertex labels ``v<i>`` follow breadth-first numbering: for three binary
variables ``v0`` is the root, ``v1, v2`` are at depth 1, ``v3..v6`` at
depth 2 and so on.
"""
import itertools

import numpy as np

from stagecraft.bn import DAG
from stagecraft.model import EventTree, StagedTree, VariableSpec
from stagecraft.scoring import Dataset


def binary(name):
    return VariableSpec(name, ("0", "1"))


def binary_tree(p):
    return EventTree(tuple(binary(f"X{i + 1}") for i in range(p)))


def from_vertex_blocks(tree, blocks):
    """Staging from blocks of breadth-first vertex numbers (any depth order)."""
    per_depth = [[] for _ in range(tree.p)]
    for block in blocks:
        vs = [tree.from_bfs_index(i) for i in block]
        depths = {d for d, _ in vs}
        assert len(depths) == 1, block
        per_depth[depths.pop()].append([r for _, r in vs])
    return StagedTree.from_blocks(tree, per_depth)


def two_context_tree():
    """X3 depends on X1 only: stages {v3,v4} and {v5,v6}; the BN X2 <- X1 -> X3."""
    t = binary_tree(3)
    return from_vertex_blocks(t, [[0], [1], [2], [3, 4], [5, 6]])


def diagonal_tree():
    """Three binary variables with X3 | (0,0) equal to X3 | (1,1)."""
    t = binary_tree(3)
    return from_vertex_blocks(t, [[0], [1], [2], [3, 6], [4], [5]])


def non_simple_tree():
    """Four binary variables; v1, v2 share a stage but not a position."""
    t = binary_tree(4)
    return from_vertex_blocks(
        t,
        [[0], [1, 2], [3, 5], [4], [6], [7, 9, 10, 11], [8, 12, 13, 14]],
    )


NON_SIMPLE_POSITIONS = [
    [0], [1], [2], [3, 5], [4], [6], [7, 9, 10, 11], [8, 12, 13, 14],
]


def hospital_tree():
    """Ternary social class, ternary life events, binary admission.

    Life events share a distribution for the first two social classes, so
    admission must too, level by level.
    """
    levels = ("low", "avg", "high")
    t = EventTree(
        (
            VariableSpec("social", levels),
            VariableSpec("events", levels),
            VariableSpec("admission", ("no", "yes")),
        )
    )
    return StagedTree.from_blocks(
        t,
        [[[0]], [[0, 1], [2]], [[0, 3], [1, 4], [2, 5], [6], [7], [8]]],
    )


def partitions_by_vertex(st, depth):
    """Set of frozensets of ranks: an order-free view of one depth's blocks."""
    return {frozenset(int(r) for r in b) for b in st.blocks(depth)}


def random_tree(rng, p_max=4, k_max=3):
    p = int(rng.integers(1, p_max + 1))
    ks = rng.integers(2, k_max + 1, size=p)
    return EventTree(
        tuple(VariableSpec(f"V{i}", tuple(str(x) for x in range(k))) for i, k in enumerate(ks))
    )


def random_staging(rng, tree):
    """Arbitrary partition at every depth, biased towards a few blocks."""
    labels = []
    for d in range(tree.p):
        n = tree.n_vertices(d)
        m = int(rng.integers(1, n + 1))
        m = min(m, int(rng.integers(1, 4)))
        labels.append(rng.integers(0, m, size=n))
    return StagedTree(tree, tuple(labels))


def random_dataset(rng, variables, N):
    rows = np.column_stack([rng.integers(0, v.k, size=N) for v in variables])
    return Dataset(tuple(variables), rows)


def skewed_dataset(rng, variables, N):
    """Rows drawn from a random joint distribution with dependencies."""
    ks = [v.k for v in variables]
    probs = rng.dirichlet(np.full(int(np.prod(ks)), 0.3))
    idx = rng.choice(len(probs), size=N, p=probs)
    rows = np.stack(np.unravel_index(idx, ks), axis=1)
    return Dataset(tuple(variables), rows)


def random_dag(rng, p, edge_prob=0.4):
    perm = rng.permutation(p)
    parents = [set() for _ in range(p)]
    for a, b in itertools.combinations(range(p), 2):
        if rng.random() < edge_prob:
            parents[perm[b]].add(int(perm[a]))
    return DAG(tuple(f"V{i}" for i in range(p)), tuple(frozenset(s) for s in parents))


def random_simple_dag(rng, p):
    """Parent chain along a random order, each set inside its predecessor's plus it."""
    perm = [int(i) for i in rng.permutation(p)]
    parents = [frozenset() for _ in range(p)]
    for prev, nxt in zip(perm, perm[1:]):
        pool = sorted(parents[prev] | {prev})
        parents[nxt] = frozenset(v for v in pool if rng.random() < 0.6)
    return DAG(tuple(f"V{i}" for i in range(p)), tuple(parents)), tuple(perm)


def brute_force_transfer(a, b):
    """Transfer distance by enumerating every injection of blocks."""
    a = np.asarray(a)
    b = np.asarray(b)
    A = sorted(set(a.tolist()))
    B = sorted(set(b.tolist()))
    overlap = {(i, j): int(np.sum((a == i) & (b == j))) for i in A for j in B}
    if len(A) > len(B):
        A, B = B, A
        overlap = {(j, i): v for (i, j), v in overlap.items()}
    best = 0
    for perm in itertools.permutations(B, len(A)):
        best = max(best, sum(overlap[(i, j)] for i, j in zip(A, perm)))
    return len(a) - best
