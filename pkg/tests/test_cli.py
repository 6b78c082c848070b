import math
import subprocess
import sys

import numpy as np
import pytest

from atscal import kvfile
from atscal.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from atscal.dataset import LogitDataset, write_logits


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def task(tmp_path, capsys):
    (tmp_path / "g.kv").write_text("k=5\nn_val=800\nn_test=600\ndistortion=global\nt_star=2.0\nseed=1\n")
    code, _, _ = run(capsys, "generate", "--config", str(tmp_path / "g.kv"), "--out", str(tmp_path / "task"))
    assert code == EXIT_OK
    return tmp_path / "task"


def test_evaluate_uniform_logits_prints_ln10(tmp_path, capsys):
    d = LogitDataset(np.zeros((7, 10)), [0, 1, 2, 3, 4, 5, 9])
    write_logits(d, tmp_path / "u.csv")
    code, out, _ = run(capsys, "evaluate", "--test", str(tmp_path / "u.csv"))
    assert code == EXIT_OK
    items = kvfile.loads(out)
    assert float(items["nll"]) == pytest.approx(math.log(10), abs=1e-5)
    assert list(items) == ["method", "n", "k", "ece_bins", "accuracy", "ece", "ece_pct", "nll", "brier"]
    assert float(items["ece_pct"]) == pytest.approx(100 * float(items["ece"]))


def test_fit_then_evaluate_never_worse_than_identity(task, tmp_path, capsys):
    params = tmp_path / "ts.kv"
    code, out, _ = run(capsys, "fit", "--method", "ts", "--val", str(task / "val.csv"), "--out", str(params))
    assert code == EXIT_OK and "method=ts" in out
    _, fitted, _ = run(capsys, "evaluate", "--params", str(params), "--test", str(task / "val.csv"))
    _, raw, _ = run(capsys, "evaluate", "--test", str(task / "val.csv"))
    assert float(kvfile.loads(fitted)["nll"]) <= float(kvfile.loads(raw)["nll"])


def test_fit_records_seed_and_objective(task, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CALIB_SEED", "17")
    out = tmp_path / "p.kv"
    code, _, _ = run(capsys, "fit", "--method", "pts", "--objective", "lece", "--val", str(task / "val.csv"),
                     "--out", str(out))
    assert code == EXIT_OK
    items = kvfile.read(out)
    assert items["method"] == "ptse" and items["fit.seed"] == "17" and items["fit.objective"] == "lece"
    code, _, _ = run(capsys, "fit", "--method", "ts", "--seed", "3", "--val", str(task / "val.csv"),
                     "--out", str(out))
    assert kvfile.read(out)["fit.seed"] == "3"


def test_benchmark_twice_is_byte_identical(tmp_path, capsys):
    cfg = tmp_path / "b.kv"
    cfg.write_text("name=cli\nmethods=ts,hts,ets\nval_sizes=40,200\nruns=2\n"
                   "task.x.k=3\ntask.x.n_val=200\ntask.x.n_test=200\ntask.x.t_star=1.5\n")
    for out in ("o1", "o2"):
        code, stdout, _ = run(capsys, "benchmark", "--config", str(cfg), "--out", str(tmp_path / out))
        assert code == EXIT_OK and "failed_cells=0" in stdout
    a = (tmp_path / "o1" / "cli.cells.csv").read_bytes()
    assert a == (tmp_path / "o2" / "cli.cells.csv").read_bytes()
    assert (tmp_path / "o1" / "cli.meta").read_bytes() == (tmp_path / "o2" / "cli.meta").read_bytes()
    code, _, _ = run(capsys, "benchmark", "--config", str(cfg), "--out", str(tmp_path / "o3"), "--workers", "2")
    assert (tmp_path / "o3" / "cli.cells.csv").read_bytes() == a


def test_analyze_tables(task, tmp_path, capsys):
    params = tmp_path / "hts.kv"
    run(capsys, "fit", "--method", "hts", "--val", str(task / "val.csv"), "--out", str(params))
    code, out, _ = run(capsys, "analyze", "--mode", "per-class", "--params", str(params),
                       "--test", str(task / "test.csv"))
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "class,count,predicted_t,optimal_t" and len(lines) == 6
    code, out, _ = run(capsys, "analyze", "--mode", "entropy-bins", "--bins", "4", "--params", str(params),
                       "--test", str(task / "test.csv"))
    assert code == EXIT_OK and len(out.splitlines()) == 5


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["fit", "--method", "ts"],
    ["fit", "--method", "magic", "--val", "v", "--out", "o"],
    ["evaluate", "--test", "t", "--bogus"],
    ["evaluate", "--test", "t", "--ece-bins", "0"],
])
def test_usage_errors_exit_1(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_USAGE
    assert err.startswith("error:")


def test_bad_seed_env_is_usage_error(task, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CALIB_SEED", "abc")
    code, _, err = run(capsys, "fit", "--method", "ts", "--val", str(task / "val.csv"), "--out", str(tmp_path / "x"))
    assert code == EXIT_USAGE and "CALIB_SEED" in err


def test_data_errors_exit_2_and_name_the_file(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("0,1,2\n7,1,2\n")
    code, _, err = run(capsys, "evaluate", "--test", str(bad))
    assert code == EXIT_DATA and f"{bad}:2" in err
    code, _, err = run(capsys, "evaluate", "--test", str(tmp_path / "missing.csv"))
    assert code == EXIT_DATA and "missing.csv" in err
    params = tmp_path / "p.kv"
    params.write_text("method=ts\n")
    good = tmp_path / "good.csv"
    good.write_text("0,1,2\n")
    code, _, err = run(capsys, "evaluate", "--params", str(params), "--test", str(good))
    assert code == EXIT_DATA and "p.kv" in err


def test_k_mismatch_is_data_error(task, tmp_path, capsys):
    params = tmp_path / "ts.kv"
    run(capsys, "fit", "--method", "ts", "--val", str(task / "val.csv"), "--out", str(params))
    other = tmp_path / "k3.csv"
    other.write_text("0,1,2,3\n")
    code, _, _ = run(capsys, "evaluate", "--params", str(params), "--test", str(other))
    assert code == EXIT_DATA


def test_console_entry_point(tmp_path):
    d = LogitDataset(np.zeros((3, 10)), [0, 1, 2])
    write_logits(d, tmp_path / "u.csv")
    proc = subprocess.run([sys.executable, "-m", "atscal.cli", "evaluate", "--test", str(tmp_path / "u.csv")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "nll=2.302585" in proc.stdout
