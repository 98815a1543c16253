"""Command line entry points."""

import json

import numpy as np
import pytest

from nfjcde.cli import main
from tests.conftest import TINY


def _tiny_args():
    return [f"--{k}={v}" for k, v in TINY.items() if k != "trials"] + ["--trials=1"]


def test_jcde_snr_sweep_writes_nine_points(tmp_path):
    out = tmp_path / "j.csv"
    code = main(["jcde", "--out", str(out), "--sweep", "snr", "-10:30:5",
                 "--sweep.methods", "jcde"] + _tiny_args())
    assert code == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 1 + 9
    man = json.loads(out.with_suffix(".manifest.json").read_text())
    assert man["command"] == "jcde" and man["config"]["sweep.values"] == "-10:30:5"


def test_rerun_from_manifest_is_byte_identical(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["initial-ce", "--out", str(out), "--sweep", "snr", "0,20"] + _tiny_args()) == 0
    man = json.loads(out.with_suffix(".manifest.json").read_text())
    cfg = tmp_path / "m.cfg"
    cfg.write_text("".join(f"{k} = {v}\n" for k, v in man["config"].items()))
    again = tmp_path / "b.csv"
    assert main(["initial-ce", "--config", str(cfg), "--out", str(again)]) == 0
    assert out.read_bytes() == again.read_bytes()


def test_leakage_demo_rows(tmp_path, capsys):
    out = tmp_path / "leak.csv"
    assert main(["leakage-demo", "--r", "5", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "bin,r=5" and len(rows) == 1 + 200
    amp = np.array([float(r.split(",")[1]) for r in rows[1:]])
    assert np.sum(amp**2) == pytest.approx(200.0, rel=1e-9)
    assert "beam bin(s)" in capsys.readouterr().out


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["jcde", "--jcde.C=3"],
    ["jcde", "--no.such.key", "1"],
    ["initial-ce", "--sweep", "snr"],
])
def test_bad_sweep_arguments_exit_two(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path / "x.csv")]) == 2


def test_selftest_rejects_extra_arguments():
    assert main(["selftest", "--extra"]) == 2


def test_unwritable_output_exits_two(tmp_path):
    code = main(["initial-ce", "--out", str(tmp_path / "missing" / "x.csv"),
                 "--sweep.values", "10", "--sweep.methods", "ls"] + _tiny_args())
    assert code == 2
