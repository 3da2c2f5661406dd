import csv
import subprocess
import sys

import pytest

from ssimrc.cli import build_parser, effective_config, main
from ssimrc.corpus import flat_sequence, pan_sequence
from ssimrc.media_io import write_y4m
from ssimrc.runlog import read_run


@pytest.fixture(scope="module")
def clip(tmp_path_factory):
    p = tmp_path_factory.mktemp("in") / "cam.y4m"
    write_y4m(p, pan_sequence("camera", 4, 128, 64))
    return p


@pytest.fixture(scope="module")
def fanout(clip, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    assert main(["encode", "--input", str(clip), "--scheme", "sosr", "--budget-from-anchor",
                 "qp=22,27,32,37", "--keep-anchor", "--out", str(out)]) == 0
    return out


def test_encode_fanout(fanout):
    names = sorted(p.name for p in fanout.glob("*.jsonl"))
    assert len([n for n in names if "_sosr_" in n]) == 4
    assert len([n for n in names if "_anchor_qp" in n]) == 4


def test_encode_without_keep_writes_scheme_logs_only(clip, tmp_path):
    assert main(["encode", "--input", str(clip), "--scheme", "sosr", "--budget-from-anchor",
                 "qp=27,32", "--out", str(tmp_path)]) == 0
    names = [p.name for p in tmp_path.iterdir()]
    assert len(names) == 2 and all(n.startswith("cam_sosr_") for n in names)


def test_encode_anchor_qp(clip, tmp_path, capsys):
    assert main(["encode", "--input", str(clip), "--scheme", "anchor", "--qp", "27", "--out", str(tmp_path)]) == 0
    (log,) = tmp_path.glob("*.jsonl")
    assert log.name == "cam_anchor_qp27.jsonl"
    run = read_run(log)
    assert run.summary["mean_bits"] > 0
    out = capsys.readouterr().out
    assert "qp=27" in out and "ctu_size=64" in out


def test_encode_explicit_budget(clip, tmp_path):
    assert main(["encode", "--input", str(clip), "--scheme", "somr,sosr", "--budget", "3000",
                 "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["cam_somr_3000.jsonl", "cam_sosr_3000.jsonl"]


def test_encode_errors(clip, tmp_path, capsys):
    assert main(["encode", "--input", str(tmp_path / "missing.y4m"), "--out", str(tmp_path)]) != 0
    assert "not found" in capsys.readouterr().err
    assert main(["encode", "--input", str(clip), "--scheme", "sosr", "--out", str(tmp_path)]) == 2
    assert main(["encode", "--input", str(clip), "--scheme", "sosr", "--budget", "5",
                 "--out", str(tmp_path)]) == 2
    assert "infeasible" in capsys.readouterr().err
    assert main(["encode", "--input", str(clip), "--scheme", "bogus", "--budget", "5000",
                 "--out", str(tmp_path)]) == 2


def test_report_bd_cell(fanout, tmp_path):
    assert main(["report", str(fanout), "--out", str(tmp_path), "--no-figures"]) == 0
    rows = list(csv.DictReader((tmp_path / "report.csv").open()))
    sosr = [r for r in rows if r["scheme"] == "sosr"][0]
    assert sosr["bdbr_ssim"] != "n/a"


def test_report_single_log(fanout, tmp_path):
    log = sorted(fanout.glob("*_sosr_*.jsonl"))[0]
    assert main(["report", str(log), "--out", str(tmp_path), "--no-figures"]) == 0
    rows = list(csv.DictReader((tmp_path / "report.csv").open()))
    assert rows[0]["bdbr_ssim"] == "n/a"


def test_report_corrupt_log(fanout, tmp_path, capsys):
    src = sorted(fanout.glob("*.jsonl"))[0]
    bad = tmp_path / src.name
    lines = src.read_text().splitlines()
    lines[2] = "{broken"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["report", str(bad), "--out", str(tmp_path / "r")]) == 2
    assert f"{bad.name}:3" in capsys.readouterr().err


def test_analyze_dd(clip, tmp_path):
    assert main(["analyze-dd", "--input", str(clip), "--qps", "22,27,32,37", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "dd_pcc.csv").open()))
    assert [r["variant"] for r in rows] == ["mse", "yeo", "satd"]
    assert all(r["degenerate"] == "false" for r in rows)
    err = list(csv.DictReader((tmp_path / "dd_error.csv").open()))
    assert len(err) == 1 and err[0]["p_local"] != "n/a"


def test_analyze_dd_flat_is_degenerate(tmp_path):
    p = tmp_path / "flat.y4m"
    write_y4m(p, flat_sequence(3, 64, 64))
    assert main(["analyze-dd", "--input", str(p), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.DictReader((tmp_path / "o" / "dd_pcc.csv").open()))
    assert all(r["degenerate"] == "true" for r in rows)
    assert main(["analyze-dd", "--input", str(p), "--out", str(tmp_path / "o"), "--assert-trends"]) == 1


def test_config_precedence(tmp_path, monkeypatch):
    cfgfile = tmp_path / "rc.cfg"
    cfgfile.write_text("qp = 30\nthreads = 3\ndelta_c = 0.2  # faster\n")
    monkeypatch.setenv("RC_THREADS", "5")
    ap = build_parser()
    args = ap.parse_args(["encode", "--input", "x", "--config", str(cfgfile), "--set", "qp=31"])
    cfg = effective_config(args)
    assert (cfg["qp"], cfg["threads"], cfg["delta_c"]) == (31, 3, 0.2)
    args = ap.parse_args(["encode", "--input", "x", "--config", str(cfgfile), "--qp", "33", "--threads", "2"])
    cfg = effective_config(args)
    assert (cfg["qp"], cfg["threads"]) == (33, 2)
    args = ap.parse_args(["encode", "--input", "x"])
    assert effective_config(args)["threads"] == 5


def test_bad_config_key(tmp_path, clip):
    cfgfile = tmp_path / "rc.cfg"
    cfgfile.write_text("nonsense = 1\n")
    assert main(["encode", "--input", str(clip), "--config", str(cfgfile)]) == 2


def test_make_corpus_and_module_entry(tmp_path):
    assert main(["make-corpus", "--out", str(tmp_path), "--frames", "2", "--width", "64", "--height", "64",
                 "--names", "camera"]) == 0
    assert (tmp_path / "camera.y4m").exists()
    r = subprocess.run([sys.executable, "-m", "ssimrc", "encode", "--input", str(tmp_path / "camera.y4m"),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "o" / "camera_anchor_qp27.jsonl").exists()
