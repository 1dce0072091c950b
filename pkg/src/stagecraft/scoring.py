"""Prefix counts, maximum-likelihood stage parameters and BIC."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import xlogy

from .model import EventTree, StagedTree, VariableSpec


@dataclass(frozen=True, eq=False)
class Dataset:
    """``rows[n, j]`` is the level index of variable ``j`` in record ``n``."""

    variables: tuple[VariableSpec, ...]
    rows: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        rows = np.array(self.rows, dtype=np.int64).reshape(-1, len(self.variables))
        for j, var in enumerate(self.variables):
            col = rows[:, j]
            if col.size and (col.min() < 0 or col.max() >= var.k):
                raise ValueError(f"column {var.name!r} has out-of-range level indices")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def N(self) -> int:
        return self.rows.shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no variable named {name!r}") from None

    def resolve_order(self, order: Sequence[str | int] | None) -> tuple[int, ...]:
        """Column indices for an order given by names or indices."""
        if order is None:
            return tuple(range(len(self.variables)))
        idx = tuple(self.index_of(o) if isinstance(o, str) else int(o) for o in order)
        if sorted(idx) != list(range(len(self.variables))):
            raise ValueError(f"order {list(order)} is not a permutation of the variables")
        return idx

    def select(self, columns: Sequence[int]) -> "Dataset":
        columns = list(columns)
        return Dataset(tuple(self.variables[j] for j in columns), self.rows[:, columns])

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.variables == other.variables
            and np.array_equal(self.rows, other.rows)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CountTree:
    """``counts[d][r, x]`` is n(v, x) for the depth-``d`` vertex of rank ``r``."""

    tree: EventTree
    counts: tuple[np.ndarray, ...]
    N: int

    def n(self, depth: int, rank: int) -> int:
        return int(self.counts[depth][rank].sum())

    def n_edge(self, depth: int, rank: int, x: int) -> int:
        return int(self.counts[depth][rank, x])

    def vertex_totals(self, depth: int) -> np.ndarray:
        return self.counts[depth].sum(axis=1)


def count_paths(data: Dataset, order: Sequence[str | int] | None = None) -> CountTree:
    cols = data.resolve_order(order)
    tree = EventTree(tuple(data.variables[j] for j in cols))
    counts = []
    rank = np.zeros(data.N, dtype=np.int64)
    for d, j in enumerate(cols):
        k = tree.cardinalities[d]
        n_d = tree.n_vertices(d)
        x = data.rows[:, j]
        c = np.bincount(rank * k + x, minlength=n_d * k).reshape(n_d, k)
        c.setflags(write=False)
        counts.append(c)
        rank = rank * k + x
    return CountTree(tree, tuple(counts), data.N)


def _check_compatible(st: StagedTree, counts: CountTree) -> None:
    if st.tree != counts.tree:
        raise ValueError(
            f"variable order mismatch: model {st.tree.names} vs counts {counts.tree.names}"
        )


def stage_counts(st: StagedTree, counts: CountTree, depth: int) -> np.ndarray:
    """Pooled counts n(s, x), one row per stage at ``depth`` in stage-id order."""
    _check_compatible(st, counts)
    c = counts.counts[depth]
    pooled = np.zeros((st.n_blocks(depth), c.shape[1]), dtype=np.int64)
    np.add.at(pooled, st.local(depth), c)
    return pooled


def mle_parameters(st: StagedTree, counts: CountTree, alpha: float = 0.0) -> dict[int, np.ndarray]:
    """Per-stage multinomial MLE with optional additive smoothing ``alpha``.

    A stage with zero total count (and ``alpha == 0``) gets the uniform vector.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    params = {}
    for d in range(st.tree.p):
        pooled = stage_counts(st, counts, d) + alpha
        k = pooled.shape[1]
        for s, row in zip(st.stage_ids(d), pooled):
            total = row.sum()
            params[s] = row / total if total > 0 else np.full(k, 1.0 / k)
    return params


def fit(st: StagedTree, counts: CountTree, alpha: float = 0.0) -> StagedTree:
    return st.with_params(mle_parameters(st, counts, alpha))


def stage_loglik(pooled: np.ndarray) -> np.ndarray:
    """Maximised log-likelihood of each row of pooled counts, 0 ln 0 = 0."""
    pooled = np.asarray(pooled, dtype=float)
    return xlogy(pooled, pooled).sum(axis=-1) - xlogy(pooled.sum(axis=-1), pooled.sum(axis=-1))


def depth_log_likelihood(st: StagedTree, counts: CountTree, depth: int) -> float:
    return math.fsum(stage_loglik(stage_counts(st, counts, depth)))


def log_likelihood(st: StagedTree, counts: CountTree) -> float:
    _check_compatible(st, counts)
    return math.fsum(depth_log_likelihood(st, counts, d) for d in range(st.tree.p))


def n_free_params(st: StagedTree) -> int:
    return sum(st.n_blocks(d) * (k - 1) for d, k in enumerate(st.tree.cardinalities))


def _log_n(counts: CountTree) -> float:
    if counts.N <= 0:
        raise ValueError("BIC is undefined for an empty dataset")
    return math.log(counts.N)


def bic(st: StagedTree, counts: CountTree) -> float:
    """``n_free_params * ln N - 2 * loglik``; lower is better."""
    return n_free_params(st) * _log_n(counts) - 2.0 * log_likelihood(st, counts)


def depth_bic(st: StagedTree, counts: CountTree, depth: int) -> float:
    k = st.tree.cardinalities[depth]
    return st.n_blocks(depth) * (k - 1) * _log_n(counts) - 2.0 * depth_log_likelihood(
        st, counts, depth
    )


def merge_delta(a: np.ndarray, b: np.ndarray, log_n: float) -> float:
    """BIC change from pooling two count vectors into one stage."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    gain = stage_loglik(a + b) - stage_loglik(a) - stage_loglik(b)
    return float(-(a.shape[-1] - 1) * log_n - 2.0 * gain)


def delta_bic_merge(st: StagedTree, counts: CountTree, depth: int, a: int, b: int) -> float:
    """BIC(after merging stages ``a`` and ``b``) - BIC(before), from their counts only."""
    ids = st.stage_ids(depth)
    if a not in ids or b not in ids:
        raise ValueError(f"stages {a}, {b} are not both at depth {depth}")
    if a == b:
        raise ValueError("cannot merge a stage with itself")
    pooled = stage_counts(st, counts, depth)
    return merge_delta(pooled[a - ids.start], pooled[b - ids.start], _log_n(counts))


def merge_stages(st: StagedTree, depth: int, a: int, b: int) -> StagedTree:
    """Staging with stages ``a`` and ``b`` at ``depth`` joined (parameters dropped)."""
    labels = list(st.labels)
    lab = labels[depth].copy()
    lab[lab == b] = a
    labels[depth] = lab
    return StagedTree(st.tree, tuple(labels))
