"""CSV ingestion, JSON model/DAG documents, and Graphviz DOT export."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .bn import DAG
from .model import CEG, EventTree, StagedTree, VariableSpec, to_ceg
from .scoring import Dataset

MODEL_FORMAT = "stagedtree/1"
DAG_FORMAT = "dag/1"
CEG_FORMAT = "ceg/1"


class FormatError(ValueError):
    """A file that does not follow the expected document schema."""


def _is_number(s: str) -> bool:
    try:
        return math.isfinite(float(s))
    except ValueError:
        return False


def equal_frequency_bins(values: Sequence[float], k: int) -> np.ndarray:
    """Bin indices ``0..k-1``; ties at a cut point go to the lower bin.

    Cut ``j`` is the sorted value at position ``ceil(j * n / k) - 1``, so with
    distinct values the bin sizes differ by at most one.
    """
    if k < 2:
        raise ValueError("need at least 2 bins")
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    srt = np.sort(v)
    cuts = np.array([srt[math.ceil(j * n / k) - 1] for j in range(1, k)])
    return np.searchsorted(cuts, v, side="left").astype(np.int64)


def read_csv(
    path: str | Path,
    discretize: bool = False,
    bins: int = 3,
) -> Dataset:
    """Read a header-first CSV into a categorical dataset.

    Rows with an empty cell are dropped (``Dataset.n_dropped``).  Columns are
    factorised in first-appearance order; with ``discretize`` every all-numeric
    column is cut into ``bins`` equal-frequency bins labelled ``q1..qk``.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            records = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not records:
        raise FormatError(f"{path}: empty file")
    header = [h.strip() for h in records[0]]
    if len(set(header)) != len(header) or any(not h for h in header):
        raise FormatError(f"{path}: header names must be unique and nonempty")
    body = [r for r in records[1:] if r]
    kept, dropped = [], 0
    for lineno, rec in enumerate(body, start=2):
        if len(rec) != len(header):
            raise FormatError(f"{path}: line {lineno} has {len(rec)} cells, expected {len(header)}")
        cells = [c.strip() for c in rec]
        if any(c == "" for c in cells):
            dropped += 1
            continue
        kept.append(cells)
    if not kept:
        raise FormatError(f"{path}: no complete rows")
    variables, columns = [], []
    for j, name in enumerate(header):
        col = [r[j] for r in kept]
        if len(set(col)) < 2:
            raise FormatError(f"{path}: column {name!r} has a single distinct value")
        if discretize and all(_is_number(c) for c in col):
            idx = equal_frequency_bins([float(c) for c in col], bins)
            levels = tuple(f"q{i + 1}" for i in range(bins))
        else:
            levels = tuple(dict.fromkeys(col))
            lookup = {lev: i for i, lev in enumerate(levels)}
            idx = np.array([lookup[c] for c in col], dtype=np.int64)
        variables.append(VariableSpec(name, levels))
        columns.append(idx)
    return Dataset(tuple(variables), np.column_stack(columns), n_dropped=dropped)


def align_dataset(data: Dataset, variables: Sequence[VariableSpec]) -> Dataset:
    """Re-encode ``data`` against another set of variable specs, matching by label."""
    cols = []
    for var in variables:
        try:
            j = data.index_of(var.name)
        except KeyError:
            raise FormatError(f"data has no column {var.name!r}") from None
        src = data.variables[j]
        lookup = {lev: i for i, lev in enumerate(var.levels)}
        missing = [lev for lev in src.levels if lev not in lookup]
        used = set(np.unique(data.rows[:, j]).tolist())
        bad = [lev for lev in missing if src.levels.index(lev) in used]
        if bad:
            raise FormatError(f"column {var.name!r} has levels {bad} unknown to the model")
        remap = np.array([lookup.get(lev, -1) for lev in src.levels], dtype=np.int64)
        cols.append(remap[data.rows[:, j]])
    rows = np.column_stack(cols) if cols else np.zeros((data.N, 0), dtype=np.int64)
    return Dataset(tuple(variables), rows, n_dropped=data.n_dropped)


def write_csv(data: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.names)
        for row in data.rows:
            w.writerow([v.levels[x] for v, x in zip(data.variables, row)])


@dataclass(frozen=True)
class ModelDocument:
    model: StagedTree
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __eq__(self, other):
        return (
            isinstance(other, ModelDocument)
            and self.model == other.model
            and dict(self.meta) == dict(other.meta)
        )

    __hash__ = None


def model_to_dict(doc: ModelDocument) -> dict:
    st = doc.model
    staging = [[b.tolist() for b in st.blocks(d)] for d in range(st.tree.p)]
    params = None
    if st.params is not None:
        params = {str(s): [float(x) for x in st.params[s]] for s in st.stage_ids()}
    return {
        "format": MODEL_FORMAT,
        "variables": [{"name": v.name, "levels": list(v.levels)} for v in st.tree.variables],
        "order": list(st.tree.names),
        "staging": staging,
        "params": params,
        "meta": dict(doc.meta),
    }


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise FormatError(msg)


def model_from_dict(obj: Any) -> ModelDocument:
    _require(isinstance(obj, dict), "model document must be a JSON object")
    allowed = {"format", "variables", "order", "staging", "params", "meta"}
    unknown = set(obj) - allowed
    _require(not unknown, f"unknown fields {sorted(unknown)}")
    _require(obj.get("format") == MODEL_FORMAT, f"unsupported format {obj.get('format')!r}, expected {MODEL_FORMAT!r}")
    for key in ("variables", "order", "staging"):
        _require(key in obj, f"missing field {key!r}")
    try:
        specs = {v["name"]: VariableSpec(v["name"], tuple(v["levels"])) for v in obj["variables"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad variable list: {exc}") from exc
    _require(len(specs) == len(obj["variables"]), "duplicate variable names")
    order = obj["order"]
    _require(sorted(order) == sorted(specs), "order must list every variable exactly once")
    tree = EventTree(tuple(specs[n] for n in order))
    staging = obj["staging"]
    _require(isinstance(staging, list) and len(staging) == tree.p,
             f"staging must list {tree.p} depths")
    file_ids = []  # (depth, first member rank) for each stage in listing order
    try:
        for d, blocks in enumerate(staging):
            for b in blocks:
                _require(len(b) > 0, f"depth {d}: empty stage")
                file_ids.append((d, min(int(r) for r in b)))
        st = StagedTree.from_blocks(tree, staging)
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"invalid staging: {exc}") from exc
    params = obj.get("params")
    if params is not None:
        _require(isinstance(params, dict), "params must be an object or null")
        mapped = {}
        for key, vec in params.items():
            try:
                d, r = file_ids[int(key)]
            except (ValueError, IndexError):
                raise FormatError(f"params refer to unknown stage {key!r}") from None
            mapped[st.stage_of((d, r))] = np.array(vec, dtype=float)
        try:
            st = st.with_params(mapped)
        except ValueError as exc:
            raise FormatError(f"invalid parameters: {exc}") from exc
    meta = obj.get("meta") or {}
    _require(isinstance(meta, dict), "meta must be an object")
    return ModelDocument(st, meta)


def dumps_model(doc: ModelDocument) -> str:
    return json.dumps(model_to_dict(doc), indent=1) + "\n"


def write_model(doc: ModelDocument | StagedTree, path: str | Path) -> None:
    if isinstance(doc, StagedTree):
        doc = ModelDocument(doc)
    Path(path).write_text(dumps_model(doc), encoding="utf-8")


def read_model(path: str | Path) -> ModelDocument:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(obj)


def dag_to_dict(g: DAG) -> dict:
    return {
        "format": DAG_FORMAT,
        "vertices": list(g.names),
        "edges": [[g.names[u], g.names[v]] for u, v in g.edges],
    }


def dag_from_dict(obj: Any) -> DAG:
    _require(isinstance(obj, dict), "DAG document must be a JSON object")
    unknown = set(obj) - {"format", "vertices", "edges"}
    _require(not unknown, f"unknown fields {sorted(unknown)}")
    _require(obj.get("format") == DAG_FORMAT, f"unsupported format {obj.get('format')!r}, expected {DAG_FORMAT!r}")
    names = obj.get("vertices")
    _require(isinstance(names, list), "missing vertex list")
    try:
        return DAG.from_edges(names, [tuple(e) for e in obj.get("edges", [])])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"invalid DAG: {exc}") from exc


def write_dag(g: DAG, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dag_to_dict(g), indent=1) + "\n", encoding="utf-8")


def read_dag(path: str | Path) -> DAG:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    return dag_from_dict(obj)


def ceg_to_dict(ceg: CEG) -> dict:
    return {
        "format": CEG_FORMAT,
        "order": list(ceg.tree.names),
        "positions": [
            {"id": w, "depth": d, "stage": ceg.coloring[w], "members": list(m)}
            for w, (d, m) in enumerate(zip(ceg.depth_of, ceg.members))
        ],
        "sink": ceg.sink,
        "edges": [[s, t, ceg.edge_label((s, t, x))] for s, t, x in ceg.edges],
    }


PALETTE = (
    "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#ffff33",
    "#a65628", "#f781bf", "#66c2a5", "#fc8d62", "#8da0cb", "#a6d854",
)


def _colors(st: StagedTree) -> dict[int, str]:
    """Palette colour per non-singleton stage, cycling in stage-id order."""
    colors = {}
    for d in range(st.tree.p):
        sizes = np.bincount(st.local(d))
        for s, size in zip(st.stage_ids(d), sizes):
            if size > 1:
                colors[s] = PALETTE[len(colors) % len(PALETTE)]
    return colors


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _node(name: str, label: str, color: str | None) -> str:
    fill = color or "white"
    return f"  {name} [label={_quote(label)}, style=filled, fillcolor={_quote(fill)}];"


def staged_tree_dot(st: StagedTree, name: str = "staged_tree") -> str:
    tree = st.tree
    colors = _colors(st)
    lines = [f"digraph {name} {{", "  rankdir=LR;", "  node [shape=circle];"]
    for d in range(tree.p):
        for r in range(tree.n_vertices(d)):
            i = tree.bfs_index((d, r))
            lines.append(_node(f"v{i}", f"v{i}", colors.get(st.stage_of((d, r)))))
    for r in range(tree.n_leaves):
        i = tree.bfs_index((tree.p, r))
        lines.append(f"  v{i} [label=\"\", shape=point];")
    for d in range(tree.p):
        var = tree.variables[d]
        for r in range(tree.n_vertices(d)):
            src = tree.bfs_index((d, r))
            for x in range(var.k):
                dst = tree.bfs_index(tree.child((d, r), x))
                lines.append(f"  v{src} -> v{dst} [label={_quote(f'{var.name}={var.levels[x]}')}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def ceg_dot(st: StagedTree, name: str = "ceg") -> str:
    ceg = to_ceg(st)
    colors = _colors(st)
    lines = [f"digraph {name} {{", "  rankdir=LR;", "  node [shape=circle];"]
    for w in range(ceg.n_positions):
        lines.append(_node(f"w{w}", f"w{w}", colors.get(ceg.coloring[w])))
    lines.append("  winf [label=\"w_inf\", shape=doublecircle];")
    for s, t, x in ceg.edges:
        dst = "winf" if t == ceg.sink else f"w{t}"
        lines.append(f"  w{s} -> {dst} [label={_quote(ceg.edge_label((s, t, x)))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_dot(st: StagedTree, ceg: bool = False) -> str:
    return ceg_dot(st) if ceg else staged_tree_dot(st)
