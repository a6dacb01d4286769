import subprocess
import sys

import pytest

from asindy.cli import main
from asindy.sindy import load_model

SHORT = ["--set", "trajectory.duration=8"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["collect", "--controller", "pid", "--out", str(root / "logs"), "--runs", "2", "--quiet", *SHORT]) == 0
    model = root / "model.txt"
    assert main(["identify", str(root / "logs"), "--model", str(model), "--quiet"]) == 0
    return root, model


def test_collect_and_identify(pipeline):
    root, model = pipeline
    assert len(list((root / "logs").glob("run_*.csv"))) == 2
    assert (root / "logs" / "manifest.json").exists()
    assert load_model(model).xi.shape[1] == 3


def test_evaluate_all_trajectories(pipeline, capsys):
    root, model = pipeline
    rc = main(["evaluate", "--model", str(model), "--out", str(root / "ev"), "--seeds", "3",
               "--trajectory", "all", *SHORT])
    assert rc == 0
    out = capsys.readouterr().out
    for kind in ("circle", "lemniscate", "spiral"):
        assert kind in out
        assert (root / "ev" / kind / "manifest.json").exists()


def test_sweep(pipeline):
    root, model = pipeline
    rc = main(["sweep", "--model", str(model), "--out", str(root / "sw"), "--runs", "1", "--quiet",
               "--grid", "asindy.lambda_leak=0,0.3", *SHORT])
    assert rc == 0
    lines = (root / "sw" / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 2


@pytest.mark.parametrize("argv, code", [
    (["evaluate", "--quiet"], 2),
    (["collect", "--set", "nosuchsection.x=1", "--quiet"], 2),
    (["collect", "--set", "bad", "--quiet"], 2),
    (["collect", "--seeds", "a,b", "--quiet"], 2),
    (["identify", "/nonexistent/dir/run_1.csv", "--quiet"], 3),
    (["sweep", "--quiet"], 2),
])
def test_exit_codes(argv, code, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path / "o")]) == code
    assert capsys.readouterr().err.startswith("asindy: ")


def test_corrupt_model_exit_code(tmp_path):
    bad = tmp_path / "model.txt"
    bad.write_text("not a model\n")
    assert main(["evaluate", "--model", str(bad), "--out", str(tmp_path / "o"), "--quiet"]) == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "asindy", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "collect" in res.stdout and "sweep" in res.stdout
