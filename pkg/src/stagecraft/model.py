"""Event trees, staged trees, positions and chain event graphs.

Vertices are never materialised as objects.  A vertex is addressed by
``(depth, rank)`` where ``rank`` is the mixed-radix rank of its value
prefix (first variable most significant).  The root is ``(0, 0)``; the
variable at depth ``d`` is ``variables[d]`` and the children of
``(d, r)`` are ``(d + 1, r * k_d + x)`` for each level index ``x``.

Stagings and position partitions are stored as one integer label array
per internal depth.  Labels are canonical: ids are assigned in order of
first appearance (smallest rank first) and are globally unique, with the
ids of depth ``d`` occupying a contiguous range after those of depth
``d - 1``.  Two stagings are equal iff their label arrays are equal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

Vertex = tuple[int, int]


@dataclass(frozen=True)
class VariableSpec:
    name: str
    levels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(x) for x in self.levels))
        if len(self.levels) < 2:
            raise ValueError(f"variable {self.name!r} needs at least 2 levels")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError(f"variable {self.name!r} has duplicate levels")

    @property
    def k(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class EventTree:
    """The X-compatible tree skeleton, implicit in an ordered variable list."""

    variables: tuple[VariableSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if not self.variables:
            raise ValueError("an event tree needs at least one variable")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")

    @property
    def p(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(v.k for v in self.variables)

    def n_vertices(self, depth: int) -> int:
        """Number of vertices at ``depth``; depth ``p`` holds the leaves."""
        if not 0 <= depth <= self.p:
            raise ValueError(f"depth {depth} outside 0..{self.p}")
        return int(np.prod(self.cardinalities[:depth], dtype=np.int64))

    @property
    def n_internal(self) -> int:
        return sum(self.n_vertices(d) for d in range(self.p))

    @property
    def n_leaves(self) -> int:
        return self.n_vertices(self.p)

    def child(self, v: Vertex, x: int) -> Vertex:
        d, r = v
        return d + 1, r * self.cardinalities[d] + x

    def parent(self, v: Vertex) -> Vertex:
        d, r = v
        if d == 0:
            raise ValueError("the root has no parent")
        return d - 1, r // self.cardinalities[d - 1]

    def prefix(self, v: Vertex) -> tuple[int, ...]:
        d, r = v
        out = []
        for k in reversed(self.cardinalities[:d]):
            r, x = divmod(r, k)
            out.append(x)
        return tuple(reversed(out))

    def vertex(self, prefix: Sequence[int]) -> Vertex:
        r = 0
        for x, k in zip(prefix, self.cardinalities):
            if not 0 <= x < k:
                raise ValueError(f"level index {x} out of range")
            r = r * k + x
        return len(prefix), r

    def prefixes(self, depth: int) -> np.ndarray:
        """All value prefixes at ``depth`` as an ``(n, depth)`` array in rank order."""
        n = self.n_vertices(depth)
        if depth == 0:
            return np.zeros((1, 0), dtype=np.int64)
        idx = np.unravel_index(np.arange(n), self.cardinalities[:depth])
        return np.stack(idx, axis=1).astype(np.int64)

    def bfs_index(self, v: Vertex) -> int:
        """Breadth-first vertex number: root 0, then depth 1 left to right, and so on."""
        d, r = v
        return sum(self.n_vertices(j) for j in range(d)) + r

    def from_bfs_index(self, i: int) -> Vertex:
        for d in range(self.p + 1):
            n = self.n_vertices(d)
            if i < n:
                return d, i
            i -= n
        raise ValueError("vertex index out of range")


def build_event_tree(variables: Iterable[VariableSpec]) -> EventTree:
    return EventTree(tuple(variables))


def canonical_labels(labels: np.ndarray, offset: int = 0) -> np.ndarray:
    """Relabel so ids follow first appearance, starting at ``offset``."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return labels.astype(np.int64)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse.ravel()] + offset


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.int64)
    a.setflags(write=False)
    return a


def _canonical_partition(tree: EventTree, labels: Sequence[np.ndarray]) -> tuple[np.ndarray, ...]:
    if len(labels) != tree.p:
        raise ValueError(f"expected {tree.p} depths, got {len(labels)}")
    out = []
    offset = 0
    for d, lab in enumerate(labels):
        lab = np.asarray(lab).ravel()
        if lab.shape[0] != tree.n_vertices(d):
            raise ValueError(
                f"depth {d}: expected {tree.n_vertices(d)} labels, got {lab.shape[0]}"
            )
        lab = canonical_labels(lab, offset)
        offset = int(lab.max()) + 1
        out.append(_freeze(lab))
    return tuple(out)


def _blocks(labels: np.ndarray, offset: int) -> list[np.ndarray]:
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels - offset)
    return [np.sort(b) for b in np.split(order, np.cumsum(counts)[:-1])]


class _Partitioned:
    """Shared helpers for per-depth canonical label arrays."""

    tree: EventTree
    labels: tuple[np.ndarray, ...]

    def offset(self, depth: int) -> int:
        return int(self.labels[depth][0])

    def n_blocks(self, depth: int) -> int:
        lab = self.labels[depth]
        return int(lab.max()) - int(lab[0]) + 1

    def local(self, depth: int) -> np.ndarray:
        """Labels at ``depth`` shifted to ``0..n_blocks(depth)-1``."""
        return self.labels[depth] - self.offset(depth)

    def blocks(self, depth: int) -> list[np.ndarray]:
        return _blocks(self.labels[depth], self.offset(depth))

    def block_sizes(self) -> list[int]:
        return [self.n_blocks(d) for d in range(self.tree.p)]

    def total_blocks(self) -> int:
        return sum(self.block_sizes())

    def same_partition(self, other: "_Partitioned") -> bool:
        return self.tree == other.tree and all(
            np.array_equal(a, b) for a, b in zip(self.labels, other.labels)
        )


@dataclass(frozen=True, eq=False)
class PositionPartition(_Partitioned):
    tree: EventTree
    labels: tuple[np.ndarray, ...]

    def position_of(self, v: Vertex) -> int:
        d, r = v
        return int(self.labels[d][r])

    def __eq__(self, other):
        return isinstance(other, PositionPartition) and self.same_partition(other)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class StagedTree(_Partitioned):
    """An event tree with a per-depth staging and optional stage parameters.

    ``params`` maps global stage id to a probability vector over the levels
    of the variable at that stage's depth.
    """

    tree: EventTree
    labels: tuple[np.ndarray, ...]
    params: Mapping[int, np.ndarray] | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "labels", _canonical_partition(self.tree, self.labels))
        if self.params is not None:
            params = {}
            for s, vec in self.params.items():
                vec = np.array(vec, dtype=float)
                vec.setflags(write=False)
                params[int(s)] = vec
            object.__setattr__(self, "params", params)
            validate_params(self, mode="closed")

    @classmethod
    def from_blocks(
        cls,
        tree: EventTree,
        blocks: Sequence[Sequence[Sequence[int]]],
        params: Mapping[int, np.ndarray] | None = None,
    ) -> "StagedTree":
        """Build from explicit blocks of vertex ranks, one list of blocks per depth."""
        if len(blocks) != tree.p:
            raise ValueError(f"expected {tree.p} depths, got {len(blocks)}")
        labels = []
        for d, depth_blocks in enumerate(blocks):
            n = tree.n_vertices(d)
            lab = np.full(n, -1, dtype=np.int64)
            for b, members in enumerate(depth_blocks):
                members = list(members)
                if not members:
                    raise ValueError(f"depth {d}: empty stage")
                for r in members:
                    if not 0 <= r < n:
                        raise ValueError(f"depth {d}: vertex rank {r} out of range")
                    if lab[r] != -1:
                        raise ValueError(f"depth {d}: vertex {r} appears in two stages")
                    lab[r] = b
            if (lab == -1).any():
                missing = np.flatnonzero(lab == -1).tolist()
                raise ValueError(f"depth {d}: vertices {missing} not covered")
            labels.append(lab)
        return cls(tree, tuple(labels), params)

    @property
    def n_stages(self) -> int:
        return self.total_blocks()

    def stage_of(self, v: Vertex) -> int:
        d, r = v
        return int(self.labels[d][r])

    def stage_depth(self, stage: int) -> int:
        for d in range(self.tree.p):
            if self.offset(d) <= stage < self.offset(d) + self.n_blocks(d):
                return d
        raise KeyError(f"unknown stage id {stage}")

    def stage_ids(self, depth: int | None = None) -> range:
        if depth is None:
            return range(self.n_stages)
        return range(self.offset(depth), self.offset(depth) + self.n_blocks(depth))

    def with_params(self, params: Mapping[int, np.ndarray] | None) -> "StagedTree":
        return StagedTree(self.tree, self.labels, params)

    def without_params(self) -> "StagedTree":
        return StagedTree(self.tree, self.labels, None)

    def __eq__(self, other):
        if not isinstance(other, StagedTree) or not self.same_partition(other):
            return False
        if (self.params is None) != (other.params is None):
            return False
        if self.params is None:
            return True
        return self.params.keys() == other.params.keys() and all(
            np.array_equal(self.params[s], other.params[s]) for s in self.params
        )

    __hash__ = None

    def __repr__(self):
        sizes = ",".join(str(n) for n in self.block_sizes())
        return f"StagedTree({'>'.join(self.tree.names)}; stages per depth [{sizes}])"


def validate_params(st: StagedTree, mode: str = "closed", atol: float = 1e-12) -> None:
    """Check every stage has a probability vector of the right arity.

    ``mode="open"`` also rejects boundary values (0 or 1 entries).
    """
    if mode not in ("open", "closed"):
        raise ValueError(f"unknown validation mode {mode!r}")
    if st.params is None:
        raise ValueError("staged tree has no parameters")
    for d in range(st.tree.p):
        k = st.tree.cardinalities[d]
        for s in st.stage_ids(d):
            if s not in st.params:
                raise ValueError(f"stage {s} has no parameter vector")
            vec = st.params[s]
            if vec.shape != (k,):
                raise ValueError(f"stage {s}: expected {k} probabilities, got {vec.shape}")
            if (vec < 0).any() or abs(vec.sum() - 1.0) > atol:
                raise ValueError(f"stage {s}: not a probability vector")
            if mode == "open" and ((vec <= 0) | (vec >= 1)).any():
                raise ValueError(f"stage {s}: boundary probability in open-simplex mode")
    extra = set(st.params) - set(st.stage_ids())
    if extra:
        raise ValueError(f"parameters for unknown stages {sorted(extra)}")


def relevel(st: StagedTree, variables: Sequence[VariableSpec]) -> StagedTree:
    """Re-express ``st`` over ``variables``: same names and order, levels possibly permuted."""
    tree = EventTree(tuple(variables))
    if tree.names != st.tree.names:
        raise ValueError("variables must list the same names in the same order")
    perms = []
    for old, new in zip(st.tree.variables, tree.variables):
        if sorted(old.levels) != sorted(new.levels):
            raise ValueError(f"variable {old.name!r} has different levels")
        perms.append(np.array([new.levels.index(lev) for lev in old.levels], dtype=np.int64))
    moved = []  # old rank -> new rank, per depth
    labels = []
    for d in range(tree.p):
        pre = st.tree.prefixes(d)
        if d:
            cols = tuple(perms[j][pre[:, j]] for j in range(d))
            new_rank = np.ravel_multi_index(cols, tree.cardinalities[:d])
        else:
            new_rank = np.zeros(1, dtype=np.int64)
        lab = np.empty_like(st.labels[d])
        lab[new_rank] = st.labels[d]
        moved.append(new_rank)
        labels.append(lab)
    out = StagedTree(tree, tuple(labels))
    if st.params is None:
        return out
    params = {}
    for d in range(tree.p):
        for s in st.stage_ids(d):
            r = int(np.flatnonzero(st.labels[d] == s)[0])
            vec = np.empty_like(st.params[s])
            vec[perms[d]] = st.params[s]
            params[out.stage_of((d, int(moved[d][r])))] = vec
    return out.with_params(params)


def full_staging(tree: EventTree) -> StagedTree:
    return StagedTree(tree, tuple(np.arange(tree.n_vertices(d)) for d in range(tree.p)))


def independence_staging(tree: EventTree) -> StagedTree:
    """One stage per depth: the total-independence model."""
    return StagedTree(tree, tuple(np.zeros(tree.n_vertices(d), dtype=np.int64) for d in range(tree.p)))


def compute_positions(st: StagedTree) -> PositionPartition:
    """Bottom-up interning of (stage id, child position ids) keys."""
    tree = st.tree
    p = tree.p
    local: list[np.ndarray] = [np.empty(0)] * p
    # at the last internal depth every child is a leaf, so the key is the stage
    local[p - 1] = canonical_labels(st.labels[p - 1])
    for d in range(p - 2, -1, -1):
        k = tree.cardinalities[d]
        keys = np.column_stack([st.labels[d], local[d + 1].reshape(-1, k)])
        _, inverse = np.unique(keys, axis=0, return_inverse=True)
        local[d] = canonical_labels(inverse.ravel())
    return PositionPartition(tree, _canonical_partition(tree, local))


def subtree_equal(st: StagedTree, v: Vertex, w: Vertex) -> bool:
    """Direct recursive comparison of the coloured subtrees rooted at ``v`` and ``w``."""
    if v[0] != w[0]:
        raise ValueError(f"vertices at different depths: {v} vs {w}")
    if v[0] == st.tree.p:
        return True
    if v == w:
        return True
    if st.stage_of(v) != st.stage_of(w):
        return False
    return all(
        subtree_equal(st, st.tree.child(v, x), st.tree.child(w, x))
        for x in range(st.tree.cardinalities[v[0]])
    )


def is_simple(st: StagedTree) -> bool:
    pos = compute_positions(st)
    return all(np.array_equal(a, b) for a, b in zip(st.labels, pos.labels))


def simplify(st: StagedTree) -> StagedTree:
    """Use positions as stages.  Parameters are dropped."""
    return StagedTree(st.tree, compute_positions(st).labels)


@dataclass(frozen=True)
class CEG:
    """Chain event graph.

    Internal vertices are the position ids ``0..n_positions-1``; the sink
    ``w_inf`` has id ``n_positions``.  Edges are ``(source, target, level)``
    triples with ``level`` the level index of the source depth's variable.
    """

    tree: EventTree
    depth_of: tuple[int, ...]
    edges: tuple[tuple[int, int, int], ...]
    coloring: Mapping[int, int]
    members: tuple[tuple[int, ...], ...]

    @property
    def n_positions(self) -> int:
        return len(self.depth_of)

    @property
    def sink(self) -> int:
        return self.n_positions

    @property
    def n_vertices(self) -> int:
        return self.n_positions + 1

    def edge_label(self, edge: tuple[int, int, int]) -> str:
        src, _, x = edge
        var = self.tree.variables[self.depth_of[src]]
        return f"{var.name}={var.levels[x]}"


def to_ceg(st: StagedTree) -> CEG:
    tree = st.tree
    pos = compute_positions(st)
    n_pos = pos.total_blocks()
    depth_of = []
    members = []
    coloring = {}
    edges = []
    for d in range(tree.p):
        k = tree.cardinalities[d]
        for block in pos.blocks(d):
            w = pos.position_of((d, int(block[0])))
            depth_of.append(d)
            members.append(tuple(int(r) for r in block))
            coloring[w] = st.stage_of((d, int(block[0])))
            # every member has the same child positions, so one representative suffices
            rep = int(block[0])
            for x in range(k):
                if d + 1 < tree.p:
                    target = pos.position_of(tree.child((d, rep), x))
                else:
                    target = n_pos
                edges.append((w, target, x))
    return CEG(tree, tuple(depth_of), tuple(edges), coloring, tuple(members))


def atom_probabilities(st: StagedTree) -> np.ndarray:
    """Leaf probabilities in leaf-rank order: products of edge probabilities."""
    if st.params is None:
        raise ValueError("staged tree has no parameters")
    prob = np.ones(1)
    for d in range(st.tree.p):
        theta = np.stack([st.params[s] for s in st.stage_ids(d)])
        prob = (prob[:, None] * theta[st.local(d)]).ravel()
    return prob


def leaf_probability(st: StagedTree, prefix: Sequence[int]) -> float:
    """Probability of one atom by walking its root-to-leaf path."""
    if st.params is None:
        raise ValueError("staged tree has no parameters")
    prob = 1.0
    for d, x in enumerate(prefix):
        prob *= float(st.params[st.stage_of(st.tree.vertex(prefix[:d]))][x])
    return prob
