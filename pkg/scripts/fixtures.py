"""Print the hand-built reference models: stagings, positions, CEGs and DOT files.

    python scripts/fixtures.py --dot-dir dot/
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from helpers import diagonal_tree, hospital_tree, non_simple_tree, two_context_tree  # noqa: E402

from stagecraft.data_io import ceg_dot, staged_tree_dot  # noqa: E402
from stagecraft.model import compute_positions, is_simple, to_ceg  # noqa: E402

FIXTURES = {
    "two_context": two_context_tree,
    "diagonal": diagonal_tree,
    "non_simple": non_simple_tree,
    "hospital": hospital_tree,
}


def describe(st):
    t = st.tree
    bfs = lambda d, b: "{" + ",".join(f"v{t.bfs_index((d, int(r)))}" for r in b) + "}"
    stages = " ".join(bfs(d, b) for d in range(t.p) for b in st.blocks(d))
    pos = compute_positions(st)
    positions = " ".join(bfs(d, b) for d in range(t.p) for b in pos.blocks(d))
    ceg = to_ceg(st)
    return [
        f"  stages    {stages}",
        f"  positions {positions}",
        f"  simple={is_simple(st)} internal={t.n_internal} ceg={ceg.n_positions}+sink edges={len(ceg.edges)}",
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dot-dir", type=Path)
    args = ap.parse_args()
    for name, make in FIXTURES.items():
        st = make()
        print(f"{name} ({' > '.join(st.tree.names)})")
        print("\n".join(describe(st)))
        if args.dot_dir:
            args.dot_dir.mkdir(parents=True, exist_ok=True)
            (args.dot_dir / f"{name}.dot").write_text(staged_tree_dot(st))
            (args.dot_dir / f"{name}_ceg.dot").write_text(ceg_dot(st))


if __name__ == "__main__":
    main()
