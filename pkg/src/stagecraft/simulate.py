"""Random simple staged trees, sampling, and the normalised Hamming stage distance.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence``; a
study replicate for grid cell ``(q_index, n_index)`` and replicate ``r``
uses the child stream with spawn key ``(q_index, n_index, r)``, so results
do not depend on how replicates are scheduled.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .learn import learn_fixed_order
from .model import EventTree, StagedTree, VariableSpec, compute_positions, canonical_labels
from .scoring import Dataset, count_paths

# bump when the random joining scheme changes
GENERATOR_VERSION = "sequential-join/1"
STUDY_COLUMNS = ("q", "N", "replicate", "learner", "distance", "wall_ms")


@dataclass(frozen=True)
class SimConfig:
    p: int = 6
    levels: int | tuple[int, ...] = 2
    q: float = 0.5
    N: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        if self.N < 0:
            raise ValueError("N must be nonnegative")
        if isinstance(self.levels, int):
            object.__setattr__(self, "levels", (self.levels,) * self.p)
        else:
            object.__setattr__(self, "levels", tuple(int(k) for k in self.levels))
        if len(self.levels) != self.p:
            raise ValueError("need one cardinality per variable")

    def tree(self) -> EventTree:
        return EventTree(
            tuple(
                VariableSpec(f"X{i + 1}", tuple(str(x) for x in range(k)))
                for i, k in enumerate(self.levels)
            )
        )


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def random_simple_tree(cfg: SimConfig, rng: np.random.Generator | None = None) -> StagedTree:
    """Join closure-forced groups at random, depth by depth from the root.

    Groups are visited by smallest member rank.  The first group opens the
    list of formed groups; every later group joins a uniformly chosen formed
    group with probability ``q`` and otherwise opens a new one.  Children of
    joined vertices are then forced together level by level, so the result
    is simple.
    """
    rng = _rng(cfg.seed) if rng is None else rng
    tree = cfg.tree()
    labels = [np.zeros(1, dtype=np.int64)]
    for d in range(1, tree.p):
        k = tree.cardinalities[d - 1]
        forced = canonical_labels((labels[d - 1][:, None] * k + np.arange(k)).ravel())
        n_groups = int(forced.max()) + 1
        target = np.empty(n_groups, dtype=np.int64)
        formed = 0
        for g in range(n_groups):
            if formed and rng.random() < cfg.q:
                target[g] = rng.integers(formed)
            else:
                target[g] = formed
                formed += 1
        labels.append(canonical_labels(target[forced]))
    return StagedTree(tree, tuple(labels))


def random_parameters(st: StagedTree, rng: np.random.Generator | int | None = None) -> dict[int, np.ndarray]:
    """Flat-Dirichlet vector per stage, drawn in stage-id order."""
    rng = rng if isinstance(rng, np.random.Generator) else _rng(rng)
    params = {}
    for d in range(st.tree.p):
        k = st.tree.cardinalities[d]
        for s in st.stage_ids(d):
            params[s] = rng.dirichlet(np.ones(k))
    return params


def sample(st: StagedTree, N: int, rng: np.random.Generator | int | None = None) -> Dataset:
    """``N`` root-to-leaf walks; columns follow the tree's variable order."""
    if st.params is None:
        raise ValueError("staged tree has no parameters")
    rng = rng if isinstance(rng, np.random.Generator) else _rng(rng)
    tree = st.tree
    rows = np.zeros((N, tree.p), dtype=np.int64)
    rank = np.zeros(N, dtype=np.int64)
    for d in range(tree.p):
        theta = np.stack([st.params[s] for s in st.stage_ids(d)])
        cum = np.cumsum(theta, axis=1)
        cum[:, -1] = np.inf
        u = rng.random(N)
        x = (u[:, None] >= cum[st.local(d)[rank]]).sum(axis=1)
        rows[:, d] = x
        rank = rank * tree.cardinalities[d] + x
    return Dataset(tree.variables, rows)


def transfer_distance(a: np.ndarray, b: np.ndarray) -> int:
    """Fewest elements to move so partition ``a`` becomes partition ``b``.

    ``n`` minus the best total overlap over one-to-one block matchings.
    """
    a = canonical_labels(a)
    b = canonical_labels(b)
    if a.shape != b.shape:
        raise ValueError("partitions of different sets")
    overlap = np.zeros((int(a.max()) + 1, int(b.max()) + 1), dtype=np.int64)
    np.add.at(overlap, (a, b), 1)
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    return int(a.shape[0] - overlap[rows, cols].sum())


def hamming_stage_distance(a: StagedTree, b: StagedTree) -> float:
    """Sum over depths of the transfer distance divided by the depth's vertex count."""
    if a.tree != b.tree:
        raise ValueError("staged trees have different event trees")
    return math.fsum(
        transfer_distance(a.labels[d], b.labels[d]) / a.tree.n_vertices(d)
        for d in range(a.tree.p)
    )


def n_positions(st: StagedTree) -> int:
    return compute_positions(st).total_blocks()


@dataclass(frozen=True)
class StudyGrid:
    q: tuple[float, ...] = (0.2, 0.5, 0.7)
    N: tuple[int, ...] = (25, 50, 100, 250, 500, 1000, 2000)
    p: int = 6
    levels: int = 2
    learners: tuple[str, ...] = ("bhc", "simplified-bhc", "marginal", "total")
    seed: int = 0

    @classmethod
    def parse(cls, text: str) -> "StudyGrid":
        """Parse ``"q=0.5;N=25,250;p=6;levels=2;learners=total,marginal;seed=1"``."""
        kw = {}
        for part in filter(None, (s.strip() for s in text.split(";"))):
            key, _, value = part.partition("=")
            key = key.strip()
            values = [v.strip() for v in value.split(",") if v.strip()]
            if key == "q":
                kw["q"] = tuple(float(v) for v in values)
            elif key == "N":
                kw["N"] = tuple(int(v) for v in values)
            elif key in ("p", "levels", "seed"):
                kw[key] = int(values[0])
            elif key == "learners":
                kw["learners"] = tuple(values)
            else:
                raise ValueError(f"unknown grid key {key!r}")
        return cls(**kw)


@dataclass(frozen=True)
class StudyRow:
    q: float
    N: int
    replicate: int
    learner: str
    distance: float
    wall_ms: float


def _replicate(args) -> list[StudyRow]:
    grid, qi, ni, r, timing = args
    q, N = grid.q[qi], grid.N[ni]
    seq = np.random.SeedSequence(grid.seed, spawn_key=(qi, ni, r))
    rng = _rng(seq)
    cfg = SimConfig(p=grid.p, levels=grid.levels, q=q, N=N, seed=grid.seed)
    truth = random_simple_tree(cfg, rng)
    truth = truth.with_params(random_parameters(truth, rng))
    data = sample(truth, N, rng)
    counts = count_paths(data)
    rows = []
    for learner in grid.learners:
        t0 = time.perf_counter()
        est = learn_fixed_order(counts, learner).tree
        ms = (time.perf_counter() - t0) * 1000.0 if timing else 0.0
        rows.append(StudyRow(q, N, r, learner, hamming_stage_distance(est, truth), ms))
    return rows


def run_consistency_study(
    grid: StudyGrid, replicates: int, threads: int = 1, timing: bool = True
) -> list[StudyRow]:
    """One row per (q, N, replicate, learner), sorted by that key."""
    jobs = [
        (grid, qi, ni, r, timing)
        for qi in range(len(grid.q))
        for ni in range(len(grid.N))
        for r in range(replicates)
    ]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_replicate, jobs))
    else:
        chunks = [_replicate(job) for job in jobs]
    learner_rank = {name: i for i, name in enumerate(grid.learners)}
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda t: (t.q, t.N, t.replicate, learner_rank[t.learner]))
    return rows


def study_csv(rows: Sequence[StudyRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STUDY_COLUMNS)
    for r in rows:
        w.writerow([repr(r.q), r.N, r.replicate, r.learner, f"{r.distance:.9f}", f"{r.wall_ms:.3f}"])
    return buf.getvalue()


@dataclass(frozen=True)
class CellSummary:
    q: float
    N: int
    learner: str
    n: int
    mean: float
    lo: float
    hi: float


def summarize_study(rows: Sequence[StudyRow], z: float = 1.959963984540054) -> list[CellSummary]:
    """Mean distance and normal-approximation confidence interval per cell."""
    cells: dict[tuple[float, int, str], list[float]] = {}
    for r in rows:
        cells.setdefault((r.q, r.N, r.learner), []).append(r.distance)
    out = []
    for (q, N, learner), vals in cells.items():
        v = np.asarray(vals)
        mean = float(v.mean())
        half = z * float(v.std(ddof=1)) / math.sqrt(len(v)) if len(v) > 1 else 0.0
        out.append(CellSummary(q, N, learner, len(v), mean, mean - half, mean + half))
    return out


def summary_csv(cells: Sequence[CellSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("q", "N", "learner", "n", "mean", "ci_low", "ci_high"))
    for c in cells:
        w.writerow([repr(c.q), c.N, c.learner, c.n, f"{c.mean:.6f}", f"{c.lo:.6f}", f"{c.hi:.6f}"])
    return buf.getvalue()
