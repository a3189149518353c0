import json
import os
import subprocess
import sys
from pathlib import Path

import pytest
from filelock import FileLock

from cohortstrat import workflow as wf
from cohortstrat.cli import main
from cohortstrat.textio import sha256_file

SMALL = {
    "synth": {"patients_per_class": [24] * 7},
    "preprocess": {"pheno_min": 5, "gene_min": 3},
    "walk": {"walks_per_node": 2, "walk_length": 8},
    "train": {"dim": 8, "epochs": 1, "window": 3},
    "linkpred": {"classifiers": [{"kind": "random_forest", "params": {"trees": 5}}]},
    "classify": {"models": ["logistic_regression", "gaussian_nb"], "folds": 3},
    "finetune": {"epochs": 20},
    "cluster": {"k_max": 6, "n_init": 2, "iterations": 300},
}

REPORT = ["table1_overall.csv", "table2_per_class.csv", "roc.csv", "auc.json", "purity.csv",
          "profiles.json", "tsne.csv", "tsne.svg", "roc.svg", "purity_scan.svg"]


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.json"
    p.write_text(json.dumps(SMALL))
    return p


@pytest.fixture(scope="module")
def run_a(tmp_path_factory, config_path):
    wd = tmp_path_factory.mktemp("a")
    assert main(["pipeline", "--workdir", str(wd), "--config", str(config_path)]) == 0
    return wd


def check_manifests(wd: Path, stages):
    owner = {}
    for stage in stages:
        man = json.loads((wd / "manifests" / f"{stage}.json").read_text())
        assert man["stage"] == stage and len(man["config_hash"]) == 64
        assert set(man["upstream"]) == set(wf.Workdir(wd, wf.load_config()).prerequisites(stage))
        for rel, digest in man["outputs"].items():
            assert rel not in owner, f"{rel} listed by {owner.get(rel)} and {stage}"
            owner[rel] = stage
            assert sha256_file(wd / rel) == digest
        for up, h in man["upstream"].items():
            assert json.loads((wd / "manifests" / f"{up}.json").read_text())["config_hash"] == h
    produced = {p.relative_to(wd).as_posix() for p in wd.rglob("*")
                if p.is_file() and p.parts[len(wd.parts)] != "manifests" and p.name != ".lock"}
    assert produced == set(owner)


def test_pipeline_outputs_and_manifests(run_a):
    for name in REPORT:
        assert (run_a / "report" / name).stat().st_size > 0
    check_manifests(run_a, wf.ORDER)
    purity = (run_a / "report" / "purity.csv").read_text().splitlines()
    assert purity[0] == "method,k,purity" and purity[1].startswith("CFEmb,")
    assert (run_a / "report" / "tsne.svg").read_text().lstrip().startswith("<?xml")


def test_rerun_byte_identical(tmp_path, run_a, config_path):
    assert main(["pipeline", "--workdir", str(tmp_path), "--config", str(config_path)]) == 0
    files = sorted(p.relative_to(run_a) for p in run_a.rglob("*") if p.is_file()
                   and p.name != ".lock")
    assert files == sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*") if p.is_file()
                           and p.name != ".lock")
    for rel in files:
        assert (run_a / rel).read_bytes() == (tmp_path / rel).read_bytes(), rel


def test_embed_before_graph(tmp_path, capsys):
    assert main(["embed", "--workdir", str(tmp_path)]) == 2
    assert "cohortstrat graph" in capsys.readouterr().err


def test_usage_error_exit_code(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["embed", "--workdir", str(tmp_path), "--no-such-flag"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_bad_setting_exit_code(tmp_path):
    assert main(["synth", "--workdir", str(tmp_path), "--signal-strength", "2"]) == 1


def test_precedence_and_env(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"synth": {"patients_per_class": [3] * 7, "noise_rate": 0.02,
                                         "signal_strength": 0.2}}))
    wd = tmp_path / "w"
    monkeypatch.setenv(wf.WORKDIR_ENV, str(wd))
    assert main(["synth", "--config", str(cfg), "--signal-strength", "0.3"]) == 0
    man = json.loads((wd / "manifests" / "synth.json").read_text())
    assert man["config"]["synth"]["signal_strength"] == 0.3
    assert man["config"]["synth"]["noise_rate"] == 0.02
    assert man["config"]["synth"]["pheno_pool"] == 239
    assert len((wd / "cohort.jsonl").read_text().splitlines()) == 21


def test_unknown_config_section(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": {}}))
    assert main(["synth", "--workdir", str(tmp_path), "--config", str(cfg)]) == 2


def test_stale_upstream_and_tampering(tmp_path, config_path, capsys):
    wd = str(tmp_path)
    base = ["--workdir", wd, "--config", str(config_path)]
    for stage in ("synth", "preprocess", "graph"):
        assert main([stage] + base) == 0
    assert main(["preprocess", "--pheno-min", "6"] + base) == 0
    assert main(["embed"] + base) == 2
    assert "config-hash mismatch" in capsys.readouterr().err
    assert main(["graph"] + base) == 0
    with open(tmp_path / "graph" / "graph.txt", "a") as fh:
        fh.write("P:x G:y-PATH\n")
    assert main(["embed"] + base) == 2
    assert "modified" in capsys.readouterr().err


def test_external_cohort(tmp_path, run_a):
    wd = tmp_path / "ext"
    src = run_a / "cohort.jsonl"
    assert main(["preprocess", "--workdir", str(wd), "--cohort", str(src),
                 "--pheno-min", "5", "--gene-min", "3"]) == 0
    man = json.loads((wd / "manifests" / "preprocess.json").read_text())
    assert man["upstream"] == {} and any(k.startswith("external:") for k in man["inputs"])
    assert (wd / "preprocess" / "matrix.csv").read_bytes() == \
        (run_a / "preprocess" / "matrix.csv").read_bytes()


def test_lock_held(tmp_path, capsys):
    lock = FileLock(str(tmp_path / ".lock"))
    with lock:
        assert main(["synth", "--workdir", str(tmp_path)]) == 2
    assert "locked" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "cohortstrat.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "pipeline" in out.stdout
    env = {**os.environ, wf.WORKDIR_ENV: str(tmp_path)}
    out = subprocess.run([sys.executable, "-m", "cohortstrat.cli", "graph"],
                         capture_output=True, text=True, env=env)
    assert out.returncode == 2 and "cohortstrat preprocess" in out.stderr


@pytest.mark.slow
def test_default_config_pipeline(tmp_path):
    """Full-size run (784 patients, d=100); takes a few minutes."""
    assert main(["pipeline", "--workdir", str(tmp_path)]) == 0
    for name in REPORT:
        assert (tmp_path / "report" / name).stat().st_size > 0
    check_manifests(tmp_path, wf.ORDER)
    rows = (tmp_path / "report" / "table1_overall.csv").read_text().splitlines()
    assert len(rows) == 6
    assert len((tmp_path / "report" / "tsne.csv").read_text().splitlines()) > 700
