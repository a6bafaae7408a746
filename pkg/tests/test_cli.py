from __future__ import annotations

import json
import subprocess
import sys

import pytest

from invforge.cli import main


def run(capsys, *argv) -> tuple[int, dict]:
    code = main(list(argv))
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1, out
    return code, json.loads(out[0])


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    gen = root / "gen.json"
    gen.write_text(json.dumps({"n_projects": 2, "methods_per_project": 4, "tests_per_method": 12, "seed": 3}))
    assert main(["gen-corpus", "--config", str(gen), "--out", str(root / "corpus")]) == 0
    return root


# -- exit codes -----------------------------------------------------------------------------------


def test_missing_subcommand_is_usage_error(capsys):
    code, line = run(capsys)
    assert code == 2 and line["usage"] and not line["ok"]


def test_unknown_subcommand(capsys):
    code, line = run(capsys, "frobnicate")
    assert code == 2 and line["command"] is None


@pytest.mark.parametrize(
    "argv",
    [
        ["label", "--trace-dir", "x", "--out", "y", "--splits", "0"],
        ["label", "--trace-dir", "x", "--out", "y", "--seed", "-1"],
        ["train", "--graphs", "g", "--out", "o", "--model", "cnn"],
        ["eval", "--scores", "s", "--labels", "l", "--partial-fpr", "0.5,2"],
        ["run-tests", "prog.mini"],
        ["gen-corpus", "--out", "x", "--jobs", "0"],
    ],
)
def test_bad_flags_are_usage_errors(capsys, argv):
    code, line = run(capsys, *argv)
    assert code == 2 and line["ok"] is False


def test_domain_errors_exit_1(capsys, tmp_path):
    bad = tmp_path / "bad.mini"
    bad.write_text("fn f( {")
    code, line = run(capsys, "run-tests", str(bad), "--trace-out", str(tmp_path / "t"))
    assert code == 1 and line["error_type"] == "MiniSyntaxError" and line["command"] == "run-tests"
    code, line = run(capsys, "compose", "--trace-dir", str(tmp_path / "missing"), "--out", str(tmp_path / "o"))
    assert code == 1
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"paths": {}}))
    code, line = run(capsys, "pipeline", "--config", str(cfg))
    assert code == 1 and line["error_type"] == "ConfigError"
    code, line = run(capsys, "label", "--trace-dir", str(tmp_path), "--out", str(tmp_path / "l"), "--fraction", "1.5")
    assert code == 1


def test_bad_env_seed(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("FORGE_SEED", "banana")
    code, line = run(capsys, "gen-corpus", "--out", str(tmp_path / "c"))
    assert code == 1 and line["error_type"] == "ConfigError"


def test_env_seed_and_flag_precedence(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("FORGE_SEED", "41")
    gen = tmp_path / "gen.json"
    gen.write_text(json.dumps({"n_projects": 1, "methods_per_project": 1}))
    _, line = run(capsys, "gen-corpus", "--config", str(gen), "--out", str(tmp_path / "a"))
    assert line["config"]["seed"] == 41
    _, line = run(capsys, "gen-corpus", "--config", str(gen), "--out", str(tmp_path / "b"), "--seed", "9")
    assert line["config"]["seed"] == 9
    gen.write_text(json.dumps({"n_projects": 1, "methods_per_project": 1, "seed": 5}))
    _, line = run(capsys, "gen-corpus", "--config", str(gen), "--out", str(tmp_path / "c"))
    assert line["config"]["seed"] == 5


# -- stage by stage --------------------------------------------------------------------------------


def test_stages_end_to_end(capsys, small_corpus, tmp_path):
    corpus = small_corpus / "corpus"
    for project in ("project0", "project1"):
        code, line = run(capsys, "run-tests", str(corpus / project), "--trace-out", str(tmp_path / "traces" / project), "--seed", "1")
        assert code == 0 and line["passed"] == line["tests"] > 0 and line["failed"] == {}
        code, line = run(capsys, "label", "--trace-dir", str(tmp_path / "traces" / project), "--splits", "20", "--fraction", "0.25", "--min-splits", "5", "--out", str(tmp_path / f"{project}.labeled.jsonl"))
        assert code == 0 and line["labeled"] > 0 and line["settings"]["project"] == project

    code, line = run(capsys, "compose", "--trace-dir", str(tmp_path / "traces" / "project0"), "--out", str(tmp_path / "all.trace"))
    assert code == 0 and line["records"] > 0
    code, line = run(capsys, "infer", "--trace-dir", str(tmp_path / "traces" / "project0"), "--point", "pre", "--out", str(tmp_path / "inv.jsonl"))
    assert code == 0 and line["invariants"] > 0
    rows = [json.loads(r) for r in (tmp_path / "inv.jsonl").read_text().splitlines()]
    assert {r["point"] for r in rows} == {"pre"}
    code, _ = run(capsys, "infer", "--trace-dir", str(tmp_path / "traces" / "project0"), "--method", "nothing_*", "--out", str(tmp_path / "none.jsonl"))
    assert code == 1

    labeled = tmp_path / "labeled.jsonl"
    labeled.write_text((tmp_path / "project0.labeled.jsonl").read_text() + (tmp_path / "project1.labeled.jsonl").read_text())
    code, line = run(capsys, "graph", "--labeled", str(labeled), "--programs", str(corpus), "--out", str(tmp_path / "graphs"))
    assert code == 0 and set(line["graphs"]) == {"project0", "project1"}

    code, line = run(capsys, "train", "--graphs", str(tmp_path / "graphs"), "--projects", "project0", "--epochs", "1", "--hidden-dim", "8", "--seed", "2", "--out", str(tmp_path / "ckpt"))
    assert code == 0 and line["config"]["hidden_dim"] == 8 and len(line["epochs"]) == 1
    ckpt = line["checkpoints"]["1"]
    code, line = run(capsys, "rank", "--ckpt", ckpt, "--graphs", str(tmp_path / "graphs"), "--projects", "project1", "--out", str(tmp_path / "scores.jsonl"))
    assert code == 0 and line["scored"] > 0
    code, line = run(
        capsys, "eval", "--scores", str(tmp_path / "scores.jsonl"), "--labels", str(labeled),
        "--golden", str(corpus / "project1" / "ground_truth.jsonl"), "--per-method",
        "--roc-out", str(tmp_path / "roc.csv"), "--out", str(tmp_path / "report.json"),
    )
    assert code == 0 and line["ok"]
    assert "per_method" in line and "golden" in line
    assert (tmp_path / "roc.csv").read_text().startswith("fpr,tpr\n")


def test_pipeline_and_overrides(capsys, small_corpus, tmp_path):
    cfg = tmp_path / "pipe.json"
    cfg.write_text(json.dumps({
        "seed": 4,
        "paths": {"corpus": str(small_corpus / "corpus"), "work": "work"},
        "labeler": {"splits": 20, "fraction": 0.25, "min_splits": 5},
        "model": {"kind": "ggnn", "hidden_dim": 8, "head_hidden": 8, "epochs": 3},
    }))
    code, line = run(capsys, "pipeline", "--config", str(cfg), "--epochs", "1", "--seed", "6", "--model", "nocontext")
    assert code == 0
    assert line["config"]["seed"] == 6
    assert line["train_projects"] == ["project0"] and line["test_projects"] == ["project1"]
    assert len(line["epochs"]) == 1 and line["eval_epoch"] == 1
    work = tmp_path / "work"
    for name in ("labeled.jsonl", "scores.jsonl", "report.json"):
        assert (work / name).is_file()
    out = tmp_path / "elsewhere"
    code, line = run(capsys, "pipeline", "--config", str(cfg), "--epochs", "1", "--out", str(out))
    assert code == 0 and (out / "scores.jsonl").is_file()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "invforge", "gen-corpus", "--out", str(tmp_path / "c"), "--seed", "1"], capture_output=True, text=True)
    assert proc.returncode == 0
    line = json.loads(proc.stdout)
    assert line["ok"] and line["command"] == "gen-corpus"
    proc = subprocess.run([sys.executable, "-m", "invforge", "nope"], capture_output=True, text=True)
    assert proc.returncode == 2 and json.loads(proc.stdout)["usage"]
