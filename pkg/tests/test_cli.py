import csv
import filecmp
import json
import os

import pytest

from rptrellis.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_OK, main
from rptrellis.codec import SlidingBlockDecoder, read_bits


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_rd_gaussian(tmp_path):
    assert main(["rd", "--out", str(tmp_path), "--set", "rates=[1,2,3,4]"]) == EXIT_OK
    rows = _rows(tmp_path / "rd.csv")
    assert [float(r["distortion"]) for r in rows] == [4.0 ** -r for r in range(1, 5)]


def test_rd_uniform_with_reproduction(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"source": {"family": "uniform01"}, "rate": 1}))
    assert main(["rd", "--config", str(cfg), "--out", str(tmp_path), "--reproduction"]) == EXIT_OK
    row = _rows(tmp_path / "rd.csv")[0]
    assert float(row["distortion"]) == pytest.approx(0.01727, abs=5e-5)
    repro = json.loads((tmp_path / row["reproduction_file"]).read_text())
    assert len(repro["support"]) == 3


def test_design_writes_decoder(tmp_path):
    assert main(["design", "--out", str(tmp_path), "--set", "lengths=[6]"]) == EXIT_OK
    dec = SlidingBlockDecoder.from_json((tmp_path / "decoder.json").read_text())
    assert dec.L == 6 and dec.R == 1 and dec.permutation_seed == 1


def test_encode_and_bits(tmp_path):
    args = ["encode", "--out", str(tmp_path), "--set", "n=2000", "--set", "lengths=[4,6]",
            "--set", "write_bits=true", "--set", "max_L=4"]
    assert main(args) == EXIT_OK
    rows = _rows(tmp_path / "results.csv")
    assert [r["status"] for r in rows] == ["ok", "skipped: L > max_L=4"]
    assert float(rows[0]["mse"]) >= 0.25
    bits, R = read_bits(tmp_path / "bits_L4_s1.bin")
    assert R == 1 and bits.size == 2000


def test_simulate_and_curve(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "s"), "--set", "n=5000", "--set", "lengths=[6]"]) == EXIT_OK
    assert (tmp_path / "s" / "scatter.csv").exists()
    assert main(["curve", "--out", str(tmp_path / "c"), "--set", "n=3000", "--set", "lengths=[4,6]"]) == EXIT_OK
    assert len(_rows(tmp_path / "c" / "curve.csv")) == 2


def test_diagnose(tmp_path):
    assert main(["diagnose", "--out", str(tmp_path), "--set", "n=3000", "--set", "lengths=[6]"]) == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["diagnostics"][0]["report"]["marginal_t2"] >= 0


@pytest.mark.parametrize("args", [
    ["encode", "--set", "rate=5"],
    ["encode", "--set", "lengths=[1]"],
    ["encode", "--set", "bogus=1"],
    ["encode", "--set", "n=0"],
    ["encode", "--set", "noequals"],
    ["encode", "--threads", "0"],
    ["encode", "--config", "/nonexistent/cfg.json"],
    ["sweep-perm", "--set", "lengths=[4]"],
])
def test_config_errors(tmp_path, args):
    assert main(args + ["--out", str(tmp_path)]) == EXIT_CONFIG


def test_budget_exceeded(tmp_path):
    args = ["design", "--out", str(tmp_path), "--set", "lengths=[20]", "--set", "memory_budget=1000"]
    assert main(args) == EXIT_BUDGET


def test_nonconvergence(tmp_path):
    # an 8-point grid cannot carry 4 bits
    args = ["rd", "--out", str(tmp_path), "--set", 'source={"family": "uniform01"}',
            "--set", "rate=4", "--set", "grid_points=8"]
    assert main(args) == EXIT_CONVERGENCE


def test_rerun_is_byte_identical(tmp_path, monkeypatch):
    args = ["encode", "--out", "out", "--set", "n=3000", "--set", "lengths=[5,7]",
            "--set", "permutation_seeds=[1,2]", "--set", "write_bits=true"]
    for d in ("a", "b"):
        os.makedirs(tmp_path / d)
        monkeypatch.chdir(tmp_path / d)
        assert main(args) == EXIT_OK
    names = sorted(os.listdir(tmp_path / "a" / "out"))
    assert "report.json" in names and "bits_L7_s2.bin" in names
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a" / "out", tmp_path / "b" / "out", names,
                                               shallow=False)
    assert mismatch == [] and errors == []
