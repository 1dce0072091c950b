import json
import re

import numpy as np
import pytest

from stagecraft.bn import DAG
from stagecraft.cli import main
from stagecraft.data_io import read_csv, read_dag, read_model, write_csv, write_dag, write_model
from stagecraft.model import (
    VariableSpec,
    compute_positions,
    full_staging,
    independence_staging,
    is_simple,
    relevel,
)
from stagecraft.scoring import Dataset, bic, count_paths, log_likelihood
from stagecraft.simulate import SimConfig, random_parameters, random_simple_tree, sample

from helpers import binary, non_simple_tree, two_context_tree


@pytest.fixture
def sim_data(tmp_path):
    truth = random_simple_tree(SimConfig(p=4, q=0.5, seed=11))
    data = sample(truth.with_params(random_parameters(truth, 11)), 400, 12)
    path = tmp_path / "data.csv"
    write_csv(data, path)
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


SUMMARY = re.compile(r"^algo=(\S+) bic=(-?\d+\.\d{9}) stages=(\d+) positions=(\d+) ms=\d+\.\d{6}$")


@pytest.mark.parametrize("algo", ["marginal", "total", "simplified-bhc", "greedy-marginal", "all-total"])
def test_learn_simple_algorithms(algo, sim_data, tmp_path, capsys):
    out = tmp_path / "m.json"
    code, stdout, _ = run(["learn", "--data", sim_data, "--algorithm", algo, "--out", out], capsys)
    assert code == 0
    m = SUMMARY.match(stdout.strip())
    assert m and m.group(1) == algo
    assert m.group(3) == m.group(4)
    doc = read_model(out)
    assert is_simple(doc.model)
    assert doc.meta["algorithm"] == algo
    assert doc.meta["positions"] == int(m.group(4))


def test_learn_bic_matches_library(sim_data, tmp_path, capsys):
    out = tmp_path / "m.json"
    _, stdout, _ = run(
        ["learn", "--data", sim_data, "--algorithm", "total", "--order", "X2,X1,X4,X3", "--out", out],
        capsys,
    )
    doc = read_model(out)
    assert doc.model.tree.names == ("X2", "X1", "X4", "X3")
    c = count_paths(read_csv(sim_data), doc.model.tree.names)
    printed = float(SUMMARY.match(stdout.strip()).group(2))
    assert f"{bic(doc.model, c):.9f}" == f"{printed:.9f}"
    assert doc.meta["loglik"] == pytest.approx(log_likelihood(doc.model, c), abs=1e-9)

    code, stdout, _ = run(["score", "--model", out, "--data", sim_data], capsys)
    assert code == 0
    assert stdout.strip().endswith(f"bic={bic(doc.model, c):.9f}")


def test_learn_bhc_then_simplified(sim_data, tmp_path, capsys):
    run(["learn", "--data", sim_data, "--algorithm", "bhc", "--out", tmp_path / "a.json"], capsys)
    run(["learn", "--data", sim_data, "--algorithm", "simplified-bhc", "--out", tmp_path / "b.json"], capsys)
    raw = read_model(tmp_path / "a.json").model
    simp = read_model(tmp_path / "b.json").model
    assert simp.n_stages == compute_positions(raw).total_blocks()


def test_learn_with_bn_order(sim_data, tmp_path, capsys):
    code, stdout, _ = run(["learn", "--data", sim_data, "--algorithm", "marginal", "--order", "bn"], capsys)
    assert code == 0 and stdout.startswith("algo=marginal")


def test_unknown_algorithm_is_usage_error(sim_data, capsys):
    code, _, err = run(["learn", "--data", sim_data, "--algorithm", "magic"], capsys)
    assert code == 1
    assert "usage:" in err


def test_bad_flags_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["learn"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_exhaustive_cap_is_data_error(sim_data, capsys):
    code, _, err = run(
        ["learn", "--data", sim_data, "--algorithm", "all-marginal", "--max-exhaustive-p", "3"], capsys
    )
    assert code == 2 and "stagecraft:" in err


def test_missing_data_file_exit_two(tmp_path, capsys):
    code, _, _ = run(["learn", "--data", tmp_path / "none.csv", "--algorithm", "bhc"], capsys)
    assert code == 2


@pytest.mark.parametrize(
    "rows, expected",
    [
        ([[0], [1]], "loglik=-1.386294361 nparams=1 N=2 bic=3.465735903"),
        ([[0], [1], [1], [1]], "loglik=-2.249340578 nparams=1 N=4 bic=5.884975518"),
    ],
)
def test_score_golden(rows, expected, tmp_path, capsys):
    v = binary("A")
    data = Dataset((v,), rows)
    write_csv(data, tmp_path / "d.csv")
    write_model(independence_staging(count_paths(Dataset((v,), [[0], [1]])).tree), tmp_path / "m.json")
    code, stdout, _ = run(["score", "--model", tmp_path / "m.json", "--data", tmp_path / "d.csv"], capsys)
    assert code == 0
    assert stdout.strip() == expected


def test_score_symmetric_data(tmp_path, capsys):
    ab = (binary("A"), binary("B"))
    rows = [[a, b] for a in (0, 1) for b in (0, 1) for _ in range(2)]
    write_csv(Dataset(ab, rows), tmp_path / "d.csv")
    tree = count_paths(Dataset(ab, rows)).tree
    results = []
    for st_ in (full_staging(tree), independence_staging(tree)):
        write_model(st_, tmp_path / "m.json")
        _, stdout, _ = run(["score", "--model", tmp_path / "m.json", "--data", tmp_path / "d.csv"], capsys)
        results.append(float(stdout.split("bic=")[1]))
    assert results[1] < results[0]


def test_score_variable_mismatch(tmp_path, capsys):
    write_csv(Dataset((binary("A"), binary("Z")), [[0, 1], [1, 0]]), tmp_path / "d.csv")
    write_model(two_context_tree(), tmp_path / "m.json")
    code, _, _ = run(["score", "--model", tmp_path / "m.json", "--data", tmp_path / "d.csv"], capsys)
    assert code == 2


def test_simulate(tmp_path, capsys):
    args = ["simulate", "--p", 4, "--q", 0, "--n", 30, "--seed", 5]
    code, stdout, _ = run(args + ["--out-model", tmp_path / "m.json", "--out-data", tmp_path / "d.csv"], capsys)
    assert code == 0
    m = read_model(tmp_path / "m.json")
    assert m.model.without_params() == full_staging(m.model.tree)
    assert m.meta["generator"].startswith("sequential-join")
    assert read_csv(tmp_path / "d.csv").N == 30
    assert stdout.strip() == "stages=15 positions=15 N=30"
    code, _, _ = run(["simulate", "--p", 4, "--q", 1.5, "--n", 3], capsys)
    assert code == 1


def test_simulate_mixed_levels(tmp_path, capsys):
    code, _, _ = run(
        ["simulate", "--p", 3, "--levels", "2,3,2", "--q", 0.5, "--n", 10, "--out-model", tmp_path / "m.json"],
        capsys,
    )
    assert code == 0
    assert read_model(tmp_path / "m.json").model.tree.cardinalities == (2, 3, 2)
    code, _, _ = run(["simulate", "--p", 3, "--levels", "2,3", "--q", 0.5, "--n", 10], capsys)
    assert code == 1


def test_study(tmp_path, capsys):
    grid = "q=0.5;N=30,60;p=3;learners=total,bhc;seed=2"
    code, _, _ = run(
        ["study", "--grid", grid, "--replicates", 2, "--out", tmp_path / "s.csv",
         "--summary", tmp_path / "c.csv", "--no-timing"],
        capsys,
    )
    assert code == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "q,N,replicate,learner,distance,wall_ms"
    assert len(lines) == 1 + 2 * 2 * 2
    assert all(line.endswith(",0.000") for line in lines[1:])
    assert len((tmp_path / "c.csv").read_text().splitlines()) == 1 + 4


def test_study_grid_from_json(tmp_path, capsys):
    (tmp_path / "g.json").write_text(json.dumps({"q": [0.5], "N": [20], "p": 3, "learners": ["marginal"]}))
    code, stdout, _ = run(["study", "--grid", tmp_path / "g.json", "--replicates", 1, "--no-timing"], capsys)
    assert code == 0
    assert len(stdout.splitlines()) == 2


def test_ceg_and_export(tmp_path, capsys):
    write_model(non_simple_tree(), tmp_path / "m.json")
    code, _, err = run(["ceg", "--model", tmp_path / "m.json", "--out", tmp_path / "c.json"], capsys)
    assert code == 0
    assert len(json.loads((tmp_path / "c.json").read_text())["positions"]) == 8
    assert "positions=8" in err
    code, stdout, _ = run(["export", "--model", tmp_path / "m.json", "--format", "dot"], capsys)
    assert code == 0 and stdout.startswith("digraph staged_tree {")
    code, stdout, _ = run(["export", "--model", tmp_path / "m.json", "--ceg"], capsys)
    assert "winf" in stdout
    with pytest.raises(SystemExit):
        main(["export", "--model", str(tmp_path / "m.json"), "--format", "png"])


def test_simplify_twice_is_stable(tmp_path, capsys):
    write_model(non_simple_tree(), tmp_path / "m.json")
    run(["simplify", "--model", tmp_path / "m.json", "--out", tmp_path / "s1.json"], capsys)
    code, stdout, _ = run(["simplify", "--model", tmp_path / "s1.json", "--out", tmp_path / "s2.json"], capsys)
    assert code == 0
    assert stdout.strip() == "stages=8 positions=8"
    assert (tmp_path / "s1.json").read_bytes() == (tmp_path / "s2.json").read_bytes()


def test_distance(tmp_path, capsys):
    write_model(two_context_tree(), tmp_path / "a.json")
    write_model(full_staging(two_context_tree().tree), tmp_path / "b.json")
    _, stdout, _ = run(["distance", "--a", tmp_path / "a.json", "--b", tmp_path / "a.json"], capsys)
    assert stdout.strip() == "0.000000"
    _, stdout, _ = run(["distance", "--a", tmp_path / "a.json", "--b", tmp_path / "b.json"], capsys)
    assert stdout.strip() == "0.500000"
    write_model(non_simple_tree(), tmp_path / "c.json")
    code, _, _ = run(["distance", "--a", tmp_path / "a.json", "--b", tmp_path / "c.json"], capsys)
    assert code == 2


def test_bn_subcommands(tmp_path, capsys):
    rows = np.random.default_rng(0).integers(0, 2, size=(5000, 2))
    write_csv(Dataset((binary("A"), binary("B")), rows), tmp_path / "coins.csv")
    code, stdout, _ = run(["bn", "learn", "--data", tmp_path / "coins.csv", "--out", tmp_path / "g.json"], capsys)
    assert code == 0 and stdout.startswith("edges=0 order=A,B")
    assert read_dag(tmp_path / "g.json").edges == []

    code, stdout, _ = run(["bn", "totree", "--dag", tmp_path / "g.json", "--out", tmp_path / "t.json"], capsys)
    assert code == 0 and stdout.strip() == "stages=2 positions=2"

    v = DAG.from_edges(("X1", "X2", "X3"), [(0, 2), (1, 2)])
    write_dag(v, tmp_path / "v.json")
    code, stdout, _ = run(
        ["bn", "simplify", "--dag", tmp_path / "v.json", "--order", "X1,X2,X3", "--out", tmp_path / "s.json"],
        capsys,
    )
    assert code == 0 and stdout.strip() == "added=1 simple=True"
    assert read_dag(tmp_path / "s.json").edges == [(0, 1), (0, 2), (1, 2)]

    code, _, _ = run(
        ["bn", "totree", "--dag", tmp_path / "v.json", "--order", "X3,X1,X2", "--out", tmp_path / "x.json"],
        capsys,
    )
    assert code == 2


def test_bn_totree_with_data_levels(tmp_path, capsys):
    g = DAG.from_edges(("X1", "X2", "X3"), [(0, 1), (0, 2)])
    write_dag(g, tmp_path / "g.json")
    code, _, _ = run(["bn", "totree", "--dag", tmp_path / "g.json", "--out", tmp_path / "t.json"], capsys)
    assert code == 0
    assert read_model(tmp_path / "t.json").model == two_context_tree()


def test_cyclic_dag_file(tmp_path, capsys):
    (tmp_path / "g.json").write_text(
        json.dumps({"format": "dag/1", "vertices": ["A", "B"], "edges": [["A", "B"], ["B", "A"]]})
    )
    code, _, _ = run(["bn", "simplify", "--dag", tmp_path / "g.json", "--out", tmp_path / "o.json"], capsys)
    assert code == 2


def test_threads_env_override(sim_data, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("STAGECRAFT_THREADS", "2")
    args = ["learn", "--data", sim_data, "--algorithm", "all-total", "--no-timing", "--threads", "1"]
    run(args + ["--out", tmp_path / "a.json"], capsys)
    monkeypatch.delenv("STAGECRAFT_THREADS")
    run(args + ["--out", tmp_path / "b.json"], capsys)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_distance_aligns_level_coding(tmp_path, capsys):
    st_ = two_context_tree()
    flipped = tuple(VariableSpec(v.name, v.levels[::-1]) for v in st_.tree.variables)
    write_model(st_, tmp_path / "a.json")
    write_model(relevel(st_, flipped), tmp_path / "b.json")
    _, stdout, _ = run(["distance", "--a", tmp_path / "a.json", "--b", tmp_path / "b.json"], capsys)
    assert stdout.strip() == "0.000000"
