"""Consistency study over a (q, N) grid; writes per-replicate and per-cell CSVs.

    python scripts/run_study.py --replicates 100 --out results/
"""
import argparse
from dataclasses import replace
from pathlib import Path

from stagecraft.learn import resolve_threads
from stagecraft.simulate import StudyGrid, run_consistency_study, study_csv, summarize_study, summary_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", default="", help="overrides, e.g. 'q=0.5;N=25,250,2000'")
    ap.add_argument("--replicates", type=int, default=100)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--no-timing", dest="timing", action="store_false")
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()

    grid = StudyGrid()
    if args.grid:
        parsed = StudyGrid.parse(args.grid)
        given = {part.split("=")[0].strip() for part in args.grid.split(";") if "=" in part}
        grid = replace(grid, **{k: getattr(parsed, k) for k in given})
    rows = run_consistency_study(grid, args.replicates, resolve_threads(args.threads), args.timing)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "study.csv").write_text(study_csv(rows))
    cells = summarize_study(rows)
    (args.out / "summary.csv").write_text(summary_csv(cells))
    for c in cells:
        print(f"q={c.q:<4} N={c.N:<5} {c.learner:<15} {c.mean:.3f}  [{c.lo:.3f}, {c.hi:.3f}]")


if __name__ == "__main__":
    main()
