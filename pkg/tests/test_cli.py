import json
import subprocess
import sys

import pytest

from dlelp.cli import main
from dlelp.graph_gen import make_planted_ontology
from dlelp.kc_graph import ConceptGraph, validate_graph

SMALL = {
    "graph": {"kind": "synthetic", "synthetic": {"concepts": 8, "layers": 3, "sim_clusters": 3}},
    "agent": {"batch_episodes": 8, "ppo_epochs": 2, "hidden": [16]},
    "steps": [3],
    "eval_episodes": 10,
    "train_episodes": 16,
    "permutation_resamples": 200,
}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "config.json"
    p.write_text(json.dumps(SMALL))
    return p


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["train", "--bogus"])
    assert info.value.code == 1


def test_gen_graph_needs_a_source(tmp_path):
    assert main(["gen-graph", "--out", str(tmp_path / "g.json")]) == 1


def test_gen_graph_synthetic(tmp_path):
    out = tmp_path / "g.json"
    assert main(["--seed", "4", "gen-graph", "--spec", "--out", str(out)]) == 0
    g = ConceptGraph.load(out)
    assert g.n == 50 and validate_graph(g) == []
    assert json.loads(out.with_suffix(".exercises.json").read_text())["exercises"]


def test_gen_graph_pipeline_and_explain(tmp_path, capsys):
    ont = make_planted_ontology(10, 12, 4, seed=1)
    ont_path = tmp_path / "ont.json"
    ont_path.write_text(json.dumps(ont.to_dict()))
    out = tmp_path / "g.json"
    assert main(["gen-graph", "--ontology", str(ont_path), "--backend", "stub", "--out", str(out)]) == 0
    g = ConceptGraph.load(out)
    assert len(g.prereq_edges) == 12 and len(g.sim_edges) == 4
    path = tmp_path / "path.json"
    path.write_text(json.dumps([[0, 1], [1, 2], [2, 3]]))
    capsys.readouterr()
    assert main(["explain", "--path-file", str(path), "--graph", str(out), "--backend", "stub"]) == 0
    lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert [x["concept_id"] for x in lines] == [1, 2, 3] and all(x["explanation"] for x in lines)


def test_http_backend_flags_required(tmp_path):
    names = tmp_path / "names.txt"
    names.write_text("a\nb\n")
    assert main(["gen-graph", "--names", str(names), "--backend", "http", "--out", str(tmp_path / "g.json")]) == 1


def test_train_then_eval(tmp_path, config):
    ck = tmp_path / "ck"
    assert main(["train", "--config", str(config), "--out", str(ck), "--seed", "2"]) == 0
    files = sorted(p.name for p in ck.iterdir())
    assert files == ["full_steps3_seed2.json", "no_s_steps3_seed2.json"]
    rep_dir = tmp_path / "rep"
    assert main(["eval", "--config", str(config), "--checkpoint", str(ck / files[0]), "--out", str(rep_dir)]) == 0
    rows = json.loads((rep_dir / "report.json").read_text())["rows"]
    assert len(rows) == 1 and rows[0]["n"] == 10 and rows[0]["seed"] == 2


def test_ablate_and_simulate(tmp_path, config):
    assert main(["ablate", "--config", str(config), "--out", str(tmp_path / "ab")]) == 0
    rows = json.loads((tmp_path / "ab" / "report.json").read_text())["rows"]
    assert sorted(r["method"] for r in rows) == ["full", "no_s"]
    assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "sim"), "--confusion-factors", "0.2", "1"]) == 0
    assert (tmp_path / "sim" / "cf_0.2" / "report.csv").exists()
    assert (tmp_path / "sim" / "cf_1" / "report.json").exists()


def test_data_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["ablate", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"steps": []}))
    assert main(["ablate", "--config", str(bad)]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.json")]) == 2
    graph = tmp_path / "dangling.json"
    graph.write_text(json.dumps({"concepts": [{"id": 0, "name": "a"}], "prerequisites": [{"from": 0, "to": 3}], "similarities": []}))
    path = tmp_path / "p.json"
    path.write_text("[0]")
    assert main(["explain", "--path-file", str(path), "--graph", str(graph)]) == 2


def test_runtime_errors_exit_3(tmp_path, config):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["ablate", "--config", str(config), "--out", str(blocker / "sub")]) == 3


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "dlelp.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("dlelp ")
