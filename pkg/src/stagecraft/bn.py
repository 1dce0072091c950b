"""Bayesian networks: DAGs, simplicity, hill climbing, and the staged-tree embedding."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import xlogy

from .model import EventTree, StagedTree, VariableSpec, canonical_labels
from .scoring import Dataset


@dataclass(frozen=True)
class DAG:
    """Vertices ``0..p-1`` with names; ``parents[i]`` is the parent set of ``i``."""

    names: tuple[str, ...]
    parents: tuple[frozenset[int], ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "parents", tuple(frozenset(ps) for ps in self.parents))
        p = len(self.names)
        if len(self.parents) != p:
            raise ValueError("one parent set per vertex required")
        if len(set(self.names)) != p:
            raise ValueError("vertex names must be unique")
        for i, ps in enumerate(self.parents):
            if any(not 0 <= j < p for j in ps):
                raise ValueError(f"vertex {i} has an invalid parent")
            if i in ps:
                raise ValueError(f"vertex {i} is its own parent")
        if _find_order(self.parents) is None:
            raise ValueError("graph has a directed cycle")

    @classmethod
    def from_edges(cls, names: Sequence[str], edges: Sequence[tuple[int | str, int | str]]) -> "DAG":
        names = tuple(names)
        index = {n: i for i, n in enumerate(names)}
        parents = [set() for _ in names]
        for u, v in edges:
            u = index[u] if isinstance(u, str) else int(u)
            v = index[v] if isinstance(v, str) else int(v)
            parents[v].add(u)
        return cls(names, tuple(frozenset(ps) for ps in parents))

    @classmethod
    def empty(cls, names: Sequence[str]) -> "DAG":
        return cls(tuple(names), tuple(frozenset() for _ in names))

    @property
    def p(self) -> int:
        return len(self.names)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted((j, i) for i, ps in enumerate(self.parents) for j in ps)

    def with_parents(self, i: int, parents: frozenset[int]) -> "DAG":
        ps = list(self.parents)
        ps[i] = frozenset(parents)
        return DAG(self.names, tuple(ps))


def _find_order(parents: Sequence[frozenset[int]]) -> list[int] | None:
    """Smallest-label-first topological order, or None if cyclic."""
    p = len(parents)
    placed: list[int] = []
    done = set()
    while len(placed) < p:
        for i in range(p):
            if i not in done and parents[i] <= done:
                placed.append(i)
                done.add(i)
                break
        else:
            return None
    return placed


def first_topological_order(g: DAG) -> tuple[int, ...]:
    return tuple(_find_order(g.parents))


def topological_orders(g: DAG) -> Iterator[tuple[int, ...]]:
    """All linear extensions, lazily, in lexicographic order."""
    p = g.p

    def extend(prefix: list[int], placed: frozenset[int]):
        if len(prefix) == p:
            yield tuple(prefix)
            return
        for i in range(p):
            if i not in placed and g.parents[i] <= placed:
                prefix.append(i)
                yield from extend(prefix, placed | {i})
                prefix.pop()

    yield from extend([], frozenset())


def is_topological(g: DAG, order: Sequence[int]) -> bool:
    if sorted(order) != list(range(g.p)):
        return False
    seen: set[int] = set()
    for i in order:
        if not g.parents[i] <= seen:
            return False
        seen.add(i)
    return True


def _check_order(g: DAG, order: Sequence[int]) -> tuple[int, ...]:
    order = tuple(int(i) for i in order)
    if not is_topological(g, order):
        raise ValueError(f"{list(order)} is not a topological order of the DAG")
    return order


def is_simple_dag(g: DAG, order: Sequence[int] | None = None) -> bool:
    """Each parent set is within its predecessor's parent set plus the predecessor.

    Without ``order``, true iff some topological order satisfies the chain.
    """
    if order is None:
        return any(is_simple_dag(g, o) for o in topological_orders(g))
    order = _check_order(g, order)
    return all(
        g.parents[nxt] <= g.parents[prev] | {prev} for prev, nxt in zip(order, order[1:])
    )


def is_decomposable(g: DAG, literal: bool = False) -> bool:
    """Every nonempty parent set ``P_i`` has a member ``j`` with ``P_i <= P_j + {j}``.

    This is the perfect-DAG condition (all parent sets are cliques).  With
    ``literal=True`` the containment is replaced by equality
    ``P_i == P_j + {j}``, under which e.g. the chain 1 -> 2 -> 3 fails.
    """
    for ps in g.parents:
        if not ps:
            continue
        if literal:
            ok = any(ps == g.parents[j] | {j} for j in ps)
        else:
            ok = any(ps <= g.parents[j] | {j} for j in ps)
        if not ok:
            return False
    return True


def simplify_dag(g: DAG, order: Sequence[int] | None = None) -> DAG:
    """Add the fewest edges making ``g`` simple with respect to ``order``.

    Sweeps from the last position backwards so requirements cascade.
    """
    order = first_topological_order(g) if order is None else _check_order(g, order)
    parents = [set(ps) for ps in g.parents]
    for pos in range(len(order) - 2, -1, -1):
        prev, nxt = order[pos], order[pos + 1]
        parents[prev] |= parents[nxt] - {prev}
    out = DAG(g.names, tuple(frozenset(ps) for ps in parents))
    assert is_simple_dag(out, order)
    return out


def bn_to_staged_tree(
    g: DAG, variables: Sequence[VariableSpec], order: Sequence[int] | None = None
) -> StagedTree:
    """Staged tree whose depth-``d`` stages group prefixes by their parent values.

    ``variables[i]`` describes DAG vertex ``i``; the tree follows ``order``.
    """
    variables = tuple(variables)
    if [v.name for v in variables] != list(g.names):
        raise ValueError("variables must match the DAG vertices")
    order = first_topological_order(g) if order is None else _check_order(g, order)
    tree = EventTree(tuple(variables[i] for i in order))
    depth_of = {v: d for d, v in enumerate(order)}
    labels = []
    for d, v in enumerate(order):
        cols = sorted(depth_of[j] for j in g.parents[v])
        prefixes = tree.prefixes(d)
        if cols:
            dims = [tree.cardinalities[c] for c in cols]
            key = np.ravel_multi_index(tuple(prefixes[:, c] for c in cols), dims)
        else:
            key = np.zeros(tree.n_vertices(d), dtype=np.int64)
        labels.append(canonical_labels(key))
    return StagedTree(tree, tuple(labels))


def _family_loglik(data: Dataset, child: int, parents: Sequence[int]) -> float:
    rows = data.rows
    if parents:
        dims = [data.variables[j].k for j in parents]
        key = np.ravel_multi_index(tuple(rows[:, j] for j in parents), dims)
    else:
        key = np.zeros(data.N, dtype=np.int64)
    joint = key * data.variables[child].k + rows[:, child]
    _, n_joint = np.unique(joint, return_counts=True)
    _, n_pa = np.unique(key, return_counts=True)
    return float(math.fsum(xlogy(n_joint, n_joint)) - math.fsum(xlogy(n_pa, n_pa)))


def bn_log_likelihood(g: DAG, data: Dataset) -> float:
    """Maximised log-likelihood of the Markov factorisation over ``g``."""
    _check_data(g, data)
    return math.fsum(_family_loglik(data, i, sorted(ps)) for i, ps in enumerate(g.parents))


def _family_params(data: Dataset, child: int, parents) -> int:
    n = data.variables[child].k - 1
    for j in parents:
        n *= data.variables[j].k
    return n


def bn_bic(g: DAG, data: Dataset) -> float:
    _check_data(g, data)
    log_n = math.log(data.N)
    return math.fsum(
        _family_params(data, i, ps) * log_n - 2.0 * _family_loglik(data, i, sorted(ps))
        for i, ps in enumerate(g.parents)
    )


def _check_data(g: DAG, data: Dataset) -> None:
    if tuple(data.names) != g.names:
        raise ValueError("dataset columns must match the DAG vertices")


@dataclass(frozen=True)
class BNResult:
    dag: DAG
    order: tuple[int, ...]
    bic: float

    @property
    def order_names(self) -> tuple[str, ...]:
        return tuple(self.dag.names[i] for i in self.order)


def learn_bn_hc(data: Dataset, tol: float = 1e-9, max_iter: int = 10_000) -> BNResult:
    """Greedy add/delete/reverse edge search on BN BIC from the empty graph.

    Moves are scanned in a fixed order (by edge ``(u, v)``, then add, delete,
    reverse); a move replaces the incumbent only if it is better by more
    than ``tol``, so near-ties go to the first move scanned.
    """
    if data.N < 1:
        raise ValueError("cannot learn from an empty dataset")
    p = len(data.variables)
    log_n = math.log(data.N)
    cache: dict[tuple[int, frozenset[int]], float] = {}

    def local(i: int, ps: frozenset[int]) -> float:
        key = (i, ps)
        if key not in cache:
            cache[key] = _family_params(data, i, ps) * log_n - 2.0 * _family_loglik(
                data, i, sorted(ps)
            )
        return cache[key]

    parents = [frozenset() for _ in range(p)]
    score = [local(i, parents[i]) for i in range(p)]

    def acyclic(ps) -> bool:
        return _find_order(ps) is not None

    for _ in range(max_iter):
        candidates = []
        for u in range(p):
            for v in range(p):
                if u == v:
                    continue
                if u not in parents[v]:
                    trial = list(parents)
                    trial[v] = parents[v] | {u}
                    candidates.append((trial, (v,)))
                else:
                    trial = list(parents)
                    trial[v] = parents[v] - {u}
                    candidates.append((trial, (v,)))
                    trial = list(trial)
                    trial[u] = parents[u] | {v}
                    candidates.append((trial, (u, v)))
        best, best_delta = None, 0.0
        for trial, changed in candidates:
            if not acyclic(trial):
                continue
            delta = math.fsum(local(i, trial[i]) - score[i] for i in changed)
            if delta < best_delta - tol:
                best, best_delta = trial, delta
        if best is None:
            break
        parents = best
        score = [local(i, parents[i]) for i in range(p)]
    g = DAG(data.names, tuple(parents))
    return BNResult(g, first_topological_order(g), math.fsum(score))
