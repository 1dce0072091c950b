"""Command-line interface: ``stagecraft <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on data or model errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bn as bnmod
from .data_io import (
    FormatError,
    ModelDocument,
    align_dataset,
    ceg_to_dict,
    export_dot,
    read_csv,
    read_dag,
    read_model,
    write_csv,
    write_dag,
    write_model,
)
from .learn import ALGORITHMS, DEFAULT_MAX_EXHAUSTIVE_P, LearnConfig, learn, resolve_threads
from .model import StagedTree, VariableSpec, compute_positions, relevel, simplify, to_ceg
from .scoring import bic, count_paths, log_likelihood, n_free_params
from .simulate import (
    GENERATOR_VERSION,
    SimConfig,
    StudyGrid,
    hamming_stage_distance,
    random_parameters,
    random_simple_tree,
    run_consistency_study,
    sample,
    study_csv,
    summarize_study,
    summary_csv,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _f6(x: float) -> str:
    return f"{x:.6f}"


def _f9(x: float) -> str:
    return f"{x:.9f}"


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _read_data(args, variables=None):
    data = read_csv(args.data, discretize=args.discretize, bins=args.bins)
    if data.n_dropped:
        print(f"dropped {data.n_dropped} rows with missing cells", file=sys.stderr)
    if variables is not None:
        data = align_dataset(data, variables)
    return data


def _model_summary(st: StagedTree) -> tuple[list[int], int]:
    return st.block_sizes(), compute_positions(st).total_blocks()


def cmd_learn(args) -> int:
    if args.algorithm not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {args.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
    data = _read_data(args)
    order = args.order
    if order and order != "bn":
        order = tuple(s.strip() for s in order.split(","))
    cfg = LearnConfig(
        algorithm=args.algorithm,
        order=order or None,
        alpha=args.alpha,
        max_exhaustive_p=args.max_exhaustive_p,
        threads=resolve_threads(args.threads),
    )
    t0 = time.perf_counter()
    res = learn(data, cfg)
    ms = (time.perf_counter() - t0) * 1000.0 if args.timing else 0.0
    counts = count_paths(data, res.order)
    stages, positions = _model_summary(res.tree)
    meta = {
        "algorithm": args.algorithm,
        "bic": res.bic,
        "loglik": log_likelihood(res.tree, counts),
        "N": data.N,
        "alpha": args.alpha,
        "stages_per_depth": stages,
        "positions": positions,
        "wall_ms": round(ms, 3),
    }
    if args.out:
        write_model(ModelDocument(res.tree, meta), args.out)
    print(
        f"algo={args.algorithm} bic={_f9(res.bic)} stages={sum(stages)} "
        f"positions={positions} ms={_f6(ms)}"
    )
    return 0


def cmd_score(args) -> int:
    doc = read_model(args.model)
    st = doc.model
    data = _read_data(args, st.tree.variables)
    counts = count_paths(data)
    ll = log_likelihood(st, counts)
    print(f"loglik={_f9(ll)} nparams={n_free_params(st)} N={data.N} bic={_f9(bic(st, counts))}")
    return 0


def _levels_arg(text: str, p: int):
    vals = [int(v) for v in text.split(",")]
    if len(vals) == 1:
        return vals[0]
    if len(vals) != p:
        raise UsageError(f"--levels needs 1 or {p} values")
    return tuple(vals)


def cmd_simulate(args) -> int:
    if not 0.0 <= args.q <= 1.0:
        raise UsageError("--q must lie in [0, 1]")
    cfg = SimConfig(p=args.p, levels=_levels_arg(args.levels, args.p), q=args.q, N=args.n, seed=args.seed)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    st = random_simple_tree(cfg, rng)
    st = st.with_params(random_parameters(st, rng))
    data = sample(st, cfg.N, rng)
    stages, positions = _model_summary(st)
    meta = {"generator": GENERATOR_VERSION, "seed": args.seed, "q": args.q, "N": cfg.N}
    if args.out_model:
        write_model(ModelDocument(st, meta), args.out_model)
    if args.out_data:
        write_csv(data, args.out_data)
    print(f"stages={sum(stages)} positions={positions} N={cfg.N}")
    return 0


def cmd_study(args) -> int:
    grid_arg = args.grid
    if Path(grid_arg).is_file():
        obj = json.loads(Path(grid_arg).read_text(encoding="utf-8"))
        grid = StudyGrid(**{k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()})
    else:
        grid = StudyGrid.parse(grid_arg)
    if any(not 0.0 <= q <= 1.0 for q in grid.q):
        raise UsageError("grid q values must lie in [0, 1]")
    rows = run_consistency_study(
        grid, args.replicates, threads=resolve_threads(args.threads), timing=args.timing
    )
    _write_text(args.out, study_csv(rows))
    if args.summary:
        _write_text(args.summary, summary_csv(summarize_study(rows)))
    print(f"rows={len(rows)}", file=sys.stderr)
    return 0


def cmd_ceg(args) -> int:
    st = read_model(args.model).model
    ceg = to_ceg(st)
    _write_text(args.out, json.dumps(ceg_to_dict(ceg), indent=1) + "\n")
    print(f"positions={ceg.n_positions} edges={len(ceg.edges)}", file=sys.stderr)
    return 0


def cmd_simplify(args) -> int:
    doc = read_model(args.model)
    st = simplify(doc.model)
    meta = dict(doc.meta)
    meta["simplified"] = True
    write_model(ModelDocument(st, meta), args.out)
    stages, positions = _model_summary(st)
    print(f"stages={sum(stages)} positions={positions}")
    return 0


def cmd_distance(args) -> int:
    a = read_model(args.a).model
    b = read_model(args.b).model
    if a.tree != b.tree and a.tree.names == b.tree.names:
        b = relevel(b, a.tree.variables)
    print(_f6(hamming_stage_distance(a, b)))
    return 0


def cmd_export(args) -> int:
    st = read_model(args.model).model
    _write_text(args.out, export_dot(st, ceg=args.ceg))
    return 0


def _parse_order(text: str | None, g: bnmod.DAG):
    if not text:
        return None
    index = {n: i for i, n in enumerate(g.names)}
    try:
        return tuple(index[s.strip()] if s.strip() in index else int(s) for s in text.split(","))
    except ValueError:
        raise FormatError(f"order {text!r} names unknown vertices") from None


def cmd_bn_learn(args) -> int:
    data = _read_data(args)
    res = bnmod.learn_bn_hc(data)
    if args.out:
        write_dag(res.dag, args.out)
    print(
        f"edges={len(res.dag.edges)} order={','.join(res.order_names)} bic={_f9(res.bic)}"
    )
    return 0


def cmd_bn_simplify(args) -> int:
    g = read_dag(args.dag)
    out = bnmod.simplify_dag(g, _parse_order(args.order, g))
    write_dag(out, args.out)
    print(f"added={len(out.edges) - len(g.edges)} simple={bnmod.is_simple_dag(out)}")
    return 0


def cmd_bn_totree(args) -> int:
    g = read_dag(args.dag)
    if args.data:
        data = _read_data(args)
        variables = [data.variables[data.index_of(n)] for n in g.names]
    else:
        k = args.levels
        variables = [VariableSpec(n, tuple(str(x) for x in range(k))) for n in g.names]
    st = bnmod.bn_to_staged_tree(g, variables, _parse_order(args.order, g))
    write_model(ModelDocument(st, {"source": "bn"}), args.out)
    stages, positions = _model_summary(st)
    print(f"stages={sum(stages)} positions={positions}")
    return 0


def _data_flags(p: argparse.ArgumentParser, required=True):
    p.add_argument("--data", required=required, help="CSV file with a header row")
    p.add_argument("--discretize", action="store_true", help="bin numeric columns")
    p.add_argument("--bins", type=int, default=3, help="equal-frequency bins (default 3)")


def _timing_flag(p: argparse.ArgumentParser):
    p.add_argument(
        "--no-timing", dest="timing", action="store_false",
        help="record wall-clock times as 0 for byte-reproducible output",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stagecraft", description="Learn simple staged trees and CEGs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("learn", help="learn a staged tree from a CSV file")
    _data_flags(p)
    p.add_argument("--algorithm", required=True, help=f"one of {', '.join(ALGORITHMS)}")
    p.add_argument("--order", help="comma-separated variable order, or 'bn'")
    p.add_argument("--alpha", type=float, default=0.0, help="additive smoothing for parameters")
    p.add_argument("--max-exhaustive-p", type=int, default=DEFAULT_MAX_EXHAUSTIVE_P)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", help="model JSON output path")
    _timing_flag(p)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("score", help="log-likelihood and BIC of a model on data")
    p.add_argument("--model", required=True)
    _data_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("simulate", help="random simple staged tree and a sample from it")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--levels", default="2", help="cardinality, or one per variable")
    p.add_argument("--q", type=float, required=True, help="joining probability")
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-model")
    p.add_argument("--out-data")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="consistency study over a (q, N) grid")
    p.add_argument("--grid", required=True, help="'q=..;N=..;p=..;levels=..;learners=..;seed=..' or a JSON file")
    p.add_argument("--replicates", type=int, required=True)
    p.add_argument("--out", help="per-replicate CSV (default stdout)")
    p.add_argument("--summary", help="per-cell mean and 95%% CI CSV")
    p.add_argument("--threads", type=int, default=None)
    _timing_flag(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("ceg", help="chain event graph of a model as JSON")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ceg)

    p = sub.add_parser("simplify", help="replace stages by positions")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simplify)

    p = sub.add_parser("distance", help="normalised Hamming stage distance")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("export", help="Graphviz DOT export")
    p.add_argument("--model", required=True)
    p.add_argument("--format", choices=["dot"], default="dot")
    p.add_argument("--ceg", action="store_true", help="draw the CEG instead of the tree")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("bn", help="Bayesian-network utilities")
    bsub = p.add_subparsers(dest="bn_command", required=True, parser_class=_Parser)
    q = bsub.add_parser("learn", help="hill-climbing BN structure learning")
    _data_flags(q)
    q.add_argument("--out")
    q.set_defaults(func=cmd_bn_learn)
    q = bsub.add_parser("simplify", help="add edges to make a DAG simple")
    q.add_argument("--dag", required=True)
    q.add_argument("--order")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_bn_simplify)
    q = bsub.add_parser("totree", help="staged tree of a BN")
    q.add_argument("--dag", required=True)
    q.add_argument("--order")
    _data_flags(q, required=False)
    q.add_argument("--levels", type=int, default=2, help="cardinality when no --data is given")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_bn_totree)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"stagecraft: error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, ValueError, KeyError) as exc:
        print(f"stagecraft: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
