import json
import subprocess
import sys

import pytest

from lodohar.cli import build_parser, main
from lodohar.harness import read_embeddings
from lodohar.metrics import read_results_csv


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "corpus"), "--datasets", "3", "--subjects", "4", "--seed", "1"]) == 0
    assert main(["prep", "--corpus", str(root / "corpus"), "--out", str(root / "prep")]) == 0
    assert main(["plan", "--windows", str(root / "prep" / "windows.harw"), "--out", str(root / "plans")]) == 0
    return root


def test_synth_prep_plan_outputs(work):
    assert (work / "corpus" / "synth_spec.json").exists()
    for name in ("windows.harw", "stats.json", "label_space.json", "pipeline.json", "summary.json",
                 "prep_config.json"):
        assert (work / "prep" / name).exists()
    plans = sorted(p.name for p in (work / "plans").glob("fold_*.json"))
    assert plans == ["fold_ds1.json", "fold_ds2.json", "fold_ds3.json"]
    cfg = json.loads((work / "prep" / "prep_config.json").read_text())
    assert cfg["window"] == 128 and cfg["overlap"] == 0.5


def test_validate(work, capsys):
    assert main(["validate", "--corpus", str(work / "corpus")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and all(": ok," in ln for ln in lines)


def test_prep_is_idempotent(work, tmp_path):
    assert main(["prep", "--corpus", str(work / "corpus"), "--out", str(tmp_path)]) == 0
    for name in ("windows.harw", "stats.json", "summary.json"):
        assert (tmp_path / name).read_bytes() == (work / "prep" / name).read_bytes()


def test_run_pretrain_finetune_report_embed(work):
    out = work / "runs"
    plan = str(work / "plans" / "fold_ds2.json")
    assert main(["run", "--plan", plan, "--phase", "pretrain", "--epochs", "2", "--out", str(out)]) == 0
    ckpt = out / "pretrain_ds2.lodc"
    assert ckpt.exists()
    for strat in ("rd", "PF", "pu"):
        assert main(["run", "--plan", plan, "--strategy", strat, "--ratio", "0.1", "--epochs", "2",
                     "--out", str(out), "--no-wall-time"]) == 0
    names = sorted(p.name for p in out.glob("result_*.csv"))
    assert names == ["result_ds2_PF_r0.1_s0.csv", "result_ds2_PU_r0.1_s0.csv", "result_ds2_Rd_r0.1_s0.csv"]
    first = (out / "result_ds2_PU_r0.1_s0.csv").read_bytes()
    assert main(["run", "--plan", plan, "--strategy", "PU", "--ratio", "0.1", "--epochs", "2",
                 "--out", str(out), "--no-wall-time"]) == 0
    assert (out / "result_ds2_PU_r0.1_s0.csv").read_bytes() == first

    assert main(["report", str(out), "--out", str(work / "report")]) == 0
    text = (work / "report" / "report.txt").read_text()
    assert "AVG" in text and "ds2" in text
    assert len(read_results_csv(work / "report" / "results_merged.csv")) == 3

    emb = work / "emb" / "e.csv"
    assert main(["embed", "--checkpoint", str(ckpt), "--windows", str(work / "prep" / "windows.harw"),
                 "--plan", plan, "--split", "val", "--out", str(emb)]) == 0
    ids, F = read_embeddings(emb)
    assert F.shape[1] == 128 and len(ids) > 0


def test_run_all_folds_and_jobs(work):
    args = ["run", "--all-folds", "--windows", str(work / "prep" / "windows.harw"), "--epochs", "1",
            "--ratios", "0,0.1", "--strategies", "Rd,PU", "--no-wall-time"]
    assert main(args + ["--out", str(work / "all1")]) == 0
    assert main(args + ["--out", str(work / "all2"), "--jobs", "2"]) == 0
    a = (work / "all1" / "results.csv").read_bytes()
    assert a == (work / "all2" / "results.csv").read_bytes()
    assert len(read_results_csv(work / "all1" / "results.csv")) == 9


def test_xmatrix(work):
    out = work / "xm"
    assert main(["xmatrix", "--windows", str(work / "prep" / "windows.harw"), "--out", str(out),
                 "--epochs", "1", "--seeds", "0,1"]) == 0
    for name in ("xmatrix.csv", "xmatrix_seed0.csv", "xmatrix_seed1.csv"):
        assert (out / name).exists()
    rows = (out / "xmatrix.csv").read_text().strip().splitlines()
    assert len(rows) == 4


def test_describe(capsys, tmp_path):
    assert main(["describe"]) == 0
    assert "params 53674  flops 4180480" in capsys.readouterr().out
    assert main(["describe", "--classes", "4", "--out", str(tmp_path / "d.json")]) == 0
    doc = json.loads((tmp_path / "d.json").read_text())
    assert doc["input_shape"] == [128, 6]


def test_user_errors_exit_1(work, tmp_path, capsys):
    plan = str(work / "plans" / "fold_ds1.json")
    assert main(["run", "--plan", plan, "--strategy", "XX", "--ratio", "0.1"]) == 1
    assert main(["run", "--plan", plan, "--strategy", "Rd", "--ratio", "0", "--out", str(tmp_path)]) == 1
    assert main(["run", "--plan", plan, "--strategy", "PF", "--ratio", "0.1", "--out", str(tmp_path)]) == 1
    assert main(["run", "--plan", plan]) == 1
    assert main(["nonsense"]) == 1
    assert main(["prep", "--corpus", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) in (1, 2)
    bad = tmp_path / "bad.lodc"
    bad.write_bytes(b"not a checkpoint")
    assert main(["describe", "--checkpoint", str(bad)]) == 1
    assert "error:" in capsys.readouterr().err


def test_runtime_error_exit_2(work, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["prep", "--corpus", str(work / "corpus"), "--out", str(blocker / "sub")]) == 2


def test_config_file_precedence(work, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"window": 64, "overlap": 0.25}))
    out = tmp_path / "p"
    assert main(["prep", "--config", str(cfg), "--corpus", str(work / "corpus"), "--out", str(out),
                 "--window", "32"]) == 0
    rec = json.loads((out / "prep_config.json").read_text())
    assert rec["window"] == 32 and rec["overlap"] == 0.25
    cfg.write_text(json.dumps({"no_such_flag": 1}))
    assert main(["prep", "--config", str(cfg), "--corpus", str(work / "corpus"), "--out", str(out)]) == 1


@pytest.mark.parametrize("cmd,defaults", [
    ("run", ["200", "0.0005"]),
    ("prep", ["50.0", "128", "0.5"]),
])
def test_help_shows_defaults(cmd, defaults):
    sub = build_parser()._subparsers._group_actions[0].choices[cmd]
    text = sub.format_help()
    for d in defaults:
        assert f"default: {d}" in text


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "lodohar.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "0.1.0" in r.stdout
