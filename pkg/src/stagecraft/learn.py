"""Structure learning for staged trees.

All searches are agglomerative steepest descent on BIC.  Ties between
candidate merges go to the lexicographically smallest pair of stage ids;
ties between variable orders go to the lexicographically smallest tuple of
variable names.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .model import StagedTree, simplify
from .scoring import CountTree, Dataset, bic, count_paths, fit, stage_loglik

ALGORITHMS = (
    "bhc",
    "simplified-bhc",
    "marginal",
    "total",
    "greedy-marginal",
    "all-marginal",
    "all-total",
)
FIXED_ORDER = ("bhc", "simplified-bhc", "marginal", "total")
DEFAULT_MAX_EXHAUSTIVE_P = 7


@dataclass(frozen=True)
class LearnResult:
    tree: StagedTree
    bic: float

    @property
    def order(self) -> tuple[str, ...]:
        return self.tree.tree.names


@dataclass(frozen=True)
class LearnConfig:
    algorithm: str = "marginal"
    order: tuple[str, ...] | str | None = None
    alpha: float = 0.0
    seed: int | None = None
    max_exhaustive_p: int = DEFAULT_MAX_EXHAUSTIVE_P
    threads: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")


class _StageForest:
    """Union-find over stages, one forest per depth, with a running BIC.

    Stage ids are vertex ranks and every stage is represented by its
    smallest member, so the children of stage ``s`` at depth ``d`` are the
    stages containing ranks ``s * k_d + x``.
    """

    def __init__(self, counts: CountTree):
        self.counts = counts
        self.tree = counts.tree
        self.p = self.tree.p
        self.k = self.tree.cardinalities
        if counts.N <= 0:
            raise ValueError("cannot learn from an empty dataset")
        self.log_n = math.log(counts.N)
        self.tol = tie_tolerance(counts.N)
        self.pen = [(k - 1) * self.log_n for k in self.k]
        self._nlogn = xlogy(np.arange(counts.N + 1), np.arange(counts.N + 1)).tolist()
        self.parent = [list(range(self.tree.n_vertices(d))) for d in range(self.p)]
        self.cnt = [c.tolist() for c in counts.counts]
        self.bic = math.fsum(
            len(self.cnt[d]) * self.pen[d] - 2.0 * math.fsum(self._f(c) for c in self.cnt[d])
            for d in range(self.p)
        )

    def _f(self, c) -> float:
        nlogn = self._nlogn
        return sum(nlogn[x] for x in c) - nlogn[sum(c)]

    def find(self, d: int, s: int) -> int:
        parent = self.parent[d]
        root = s
        while parent[root] != root:
            root = parent[root]
        while parent[s] != root:
            parent[s], s = root, parent[s]
        return root

    def roots(self, d: int) -> list[int]:
        return [s for s, t in enumerate(self.parent[d]) if s == t]

    def _merge(self, d: int, a: int, b: int, recursive: bool, apply: bool) -> float:
        par = [dict() for _ in range(self.p)]
        cnt = [dict() for _ in range(self.p)]

        def find(e, s):
            s = self.find(e, s)
            over = par[e]
            while s in over:
                s = over[s]
            return s

        delta = 0.0
        stack = [(d, a, b)]
        while stack:
            e, s, t = stack.pop()
            rs, rt = find(e, s), find(e, t)
            if rs == rt:
                continue
            if rs > rt:
                rs, rt = rt, rs
            cs = cnt[e].get(rs) or self.cnt[e][rs]
            ct = cnt[e].get(rt) or self.cnt[e][rt]
            cm = [x + y for x, y in zip(cs, ct)]
            delta += -self.pen[e] - 2.0 * (self._f(cm) - self._f(cs) - self._f(ct))
            par[e][rt] = rs
            cnt[e][rs] = cm
            if recursive and e + 1 < self.p:
                k = self.k[e]
                stack.extend((e + 1, s * k + x, t * k + x) for x in range(k))
        if apply:
            for e in range(self.p):
                for s, r in par[e].items():
                    self.parent[e][s] = r
                for s, c in cnt[e].items():
                    self.cnt[e][s] = c
            self.bic += delta
        return delta

    def merge_delta(self, d: int, a: int, b: int, recursive: bool = False) -> float:
        return self._merge(d, a, b, recursive, apply=False)

    def merge(self, d: int, a: int, b: int, recursive: bool = False) -> float:
        return self._merge(d, a, b, recursive, apply=True)

    def propagate(self, d: int) -> None:
        """Join level-matched children of same-stage vertices at depth ``d + 1``."""
        k = self.k[d]
        for s in range(len(self.parent[d])):
            r = self.find(d, s)
            if r != s:
                for x in range(k):
                    self.merge(d + 1, s * k + x, r * k + x)

    def hill_climb(self, d: int) -> None:
        """Steepest-descent merging of the current stages at depth ``d`` only."""
        roots = self.roots(d)
        pooled = np.array([self.cnt[d][r] for r in roots], dtype=float)
        for a, b in hill_climb_merges(pooled, self.log_n):
            self.merge(d, roots[a], roots[b])

    def staged_tree(self) -> StagedTree:
        labels = tuple(
            np.array([self.find(d, s) for s in range(len(self.parent[d]))])
            for d in range(self.p)
        )
        return StagedTree(self.tree, labels)


def tie_tolerance(n: float) -> float:
    """Score differences below this are rounding noise for ``n`` observations.

    The per-stage terms are sums of ``c ln c`` up to ``n ln n`` in size.
    """
    return 1e-9 + 1e-12 * n * math.log(max(n, 2.0))


def hill_climb_merges(pooled: np.ndarray, log_n: float) -> list[tuple[int, int]]:
    """Greedy agglomeration of count vectors under the BIC merge delta.

    Returns the accepted merges ``(a, b)``, ``a < b``, in order; group ``b``
    is absorbed into ``a``.  Each step takes the most negative delta, ties
    (within ``tie_tolerance``) to the smallest ``(a, b)``, and stops when no
    merge lowers BIC by more than the tolerance.
    """
    c = np.array(pooled, dtype=float)
    S = c.shape[0]
    if S < 2:
        return []
    tol = tie_tolerance(c.sum())
    pen = (c.shape[1] - 1) * log_n
    f = stage_loglik(c)
    D = np.full((S, S), np.inf)
    for i in range(S - 1):
        D[i, i + 1 :] = -pen - 2.0 * (stage_loglik(c[i] + c[i + 1 :]) - f[i] - f[i + 1 :])
    active = np.ones(S, dtype=bool)
    merges = []
    while True:
        best = D.min()
        if not best < -tol:
            break
        a, b = divmod(int(np.flatnonzero(D <= best + tol)[0]), S)
        merges.append((a, b))
        c[a] += c[b]
        f[a] = stage_loglik(c[a])
        active[b] = False
        D[b, :] = np.inf
        D[:, b] = np.inf
        after = np.flatnonzero(active[a + 1 :]) + a + 1
        before = np.flatnonzero(active[:a])
        D[a, after] = -pen - 2.0 * (stage_loglik(c[a] + c[after]) - f[a] - f[after])
        D[before, a] = -pen - 2.0 * (stage_loglik(c[before] + c[a]) - f[before] - f[a])
    return merges


def _result(forest: _StageForest) -> LearnResult:
    return LearnResult(forest.staged_tree(), forest.bic)


def learn_bhc(counts: CountTree) -> LearnResult:
    """Backward hill-climbing: each depth independently, from singleton stages."""
    forest = _StageForest(counts)
    for d in range(forest.p):
        forest.hill_climb(d)
    return _result(forest)


def learn_simplified_bhc(counts: CountTree) -> LearnResult:
    st = simplify(learn_bhc(counts).tree)
    return LearnResult(st, bic(st, counts))


def closure_propagate(st: StagedTree, depth: int) -> np.ndarray:
    """Finest depth+1 grouping forced by the stages at ``depth``.

    Children reached by the same level from same-stage vertices share a
    group.  Returns canonical group labels for the depth+1 vertices.
    """
    from .model import canonical_labels

    if not 0 <= depth < st.tree.p - 1:
        raise ValueError(f"no depth below {depth}")
    k = st.tree.cardinalities[depth]
    return canonical_labels((st.local(depth)[:, None] * k + np.arange(k)).ravel())


def learn_marginal(counts: CountTree) -> LearnResult:
    """Per-depth BIC hill climbing over closure-forced groups, then closure."""
    forest = _StageForest(counts)
    for d in range(forest.p):
        forest.hill_climb(d)
        if d + 1 < forest.p:
            forest.propagate(d)
    return _result(forest)


def learn_total(counts: CountTree) -> LearnResult:
    """Hill climbing over positions, each move merging whole subtrees."""
    forest = _StageForest(counts)
    for d in range(forest.p):
        while True:
            roots = forest.roots(d)
            best, best_delta = None, -forest.tol
            for i, a in enumerate(roots):
                for b in roots[i + 1 :]:
                    delta = forest.merge_delta(d, a, b, recursive=True)
                    if delta < best_delta - (forest.tol if best else 0.0):
                        best, best_delta = (a, b), delta
            if best is None:
                break
            forest.merge(d, *best, recursive=True)
    return _result(forest)


FIXED_ORDER_LEARNERS = {
    "bhc": learn_bhc,
    "simplified-bhc": learn_simplified_bhc,
    "marginal": learn_marginal,
    "total": learn_total,
}


def learn_fixed_order(counts: CountTree, algorithm: str) -> LearnResult:
    try:
        return FIXED_ORDER_LEARNERS[algorithm](counts)
    except KeyError:
        raise ValueError(f"{algorithm!r} is not a fixed-order algorithm") from None


def learn_greedy_order_marginal(data: Dataset) -> LearnResult:
    """Grow the variable order one variable at a time, keeping the best BIC.

    The marginal learner is depth-wise, so rerunning it on the extended
    prefix reproduces the committed prefix staging exactly.
    """
    remaining = sorted(data.names)
    prefix: list[str] = []
    best = None
    while remaining:
        best = None
        for name in remaining:
            cols = [data.index_of(n) for n in prefix + [name]]
            res = learn_marginal(count_paths(data.select(cols)))
            if best is None or res.bic < best[1].bic:
                best = (name, res)
        prefix.append(best[0])
        remaining.remove(best[0])
    return best[1]


def _run_order(args) -> tuple[tuple[str, ...], float, tuple[np.ndarray, ...]]:
    data, order, inner = args
    res = learn_fixed_order(count_paths(data, order), inner)
    return order, res.bic, res.tree.labels


def resolve_threads(threads: int | None) -> int:
    env = os.environ.get("STAGECRAFT_THREADS")
    if env:
        threads = int(env)
    if not threads:
        threads = os.cpu_count() or 1
    return max(1, int(threads))


def learn_exhaustive(
    data: Dataset,
    inner: str = "marginal",
    max_p: int = DEFAULT_MAX_EXHAUSTIVE_P,
    threads: int = 1,
) -> LearnResult:
    """Run ``inner`` under every variable order and keep the lowest BIC."""
    if inner not in ("marginal", "total"):
        raise ValueError(f"inner learner must be 'marginal' or 'total', not {inner!r}")
    p = len(data.variables)
    if p > max_p:
        raise ValueError(
            f"exhaustive search over {p}! orders exceeds the cap p <= {max_p}; raise the cap explicitly"
        )
    orders = list(itertools.permutations(sorted(data.names)))
    jobs = [(data, order, inner) for order in orders]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_order, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_run_order(job) for job in jobs]
    best = None
    for order, score, labels in results:
        if best is None or score < best[1]:
            best = (order, score, labels)
    order, score, labels = best
    tree = count_paths(data, order).tree
    return LearnResult(StagedTree(tree, labels), score)


def learn(data: Dataset, config: LearnConfig) -> LearnResult:
    """Dispatch on ``config.algorithm`` and fit stage parameters."""
    algo = config.algorithm
    if algo in FIXED_ORDER:
        order = config.order
        if order == "bn":
            from .bn import learn_bn_hc

            order = learn_bn_hc(data).order_names
        res = learn_fixed_order(count_paths(data, order), algo)
    elif algo == "greedy-marginal":
        res = learn_greedy_order_marginal(data)
    else:
        res = learn_exhaustive(
            data,
            algo.split("-", 1)[1],
            max_p=config.max_exhaustive_p,
            threads=resolve_threads(config.threads),
        )
    counts = count_paths(data, res.order)
    return LearnResult(fit(res.tree, counts, config.alpha), res.bic)
