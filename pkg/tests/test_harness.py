import math

import numpy as np
import pytest

from atscal import kvfile
from atscal.calibrators import ETS, HTS, fit
from atscal.dataset import LogitDataset, TaskSplit, write_logits
from atscal.errors import FitError, InvalidInputError, ParseError, UnsupportedOperationError
from atscal.harness import (
    BenchmarkConfig,
    FileTask,
    aggregate,
    analyze_entropy_bins,
    analyze_per_class,
    average_relative,
    cells_csv,
    derive_seed,
    format_table,
    relative_cells,
    relative_metric,
    run_benchmark,
    summary_markdown,
    write_report,
)
from atscal.harness import runner
from atscal.mathkit import softplus
from atscal.synthgen import EntropyLinear, Global, SynthConfig, generate


def small_task(seed=0, dist=None):
    return SynthConfig(k=4, n_val=400, n_test=300, distortion=dist or Global(2.0), seed=seed)


def small_config(**changes):
    base = dict(tasks=[("a", small_task(0)), ("b", small_task(1))], methods=("ts", "hts", "bts", "ets"),
                val_sizes=(50, 400), runs=2, name="t")
    base.update(changes)
    return BenchmarkConfig(**base)


def test_relative_metric_examples():
    assert relative_metric(2.54, 2.54) == 1.0
    assert relative_metric(1.62, 2.54) == pytest.approx(0.6378, abs=1e-4)
    assert relative_metric(0.0, 3.0) == 0.0
    assert math.isnan(relative_metric(1.0, 0.0))
    assert math.isnan(relative_metric(1.0, -1.0))
    assert math.isnan(relative_metric(math.inf, 1.0))


def test_ts_only_grid_is_self_normalized():
    report = run_benchmark(small_config(methods=("ts",)))
    for metric in ("ece", "nll", "brier"):
        assert all(v == 1.0 for v in relative_cells(report, metric).values())
        assert all(v == (1.0, 0) for v in average_relative(report, metric).values())


def test_grid_is_complete_and_subsamples_are_shared():
    cfg = small_config()
    report = run_benchmark(cfg)
    assert len(report.cells) == 2 * 4 * 2 * 2
    keys = {(c.task, c.method, c.n_val, c.run) for c in report.cells}
    assert len(keys) == len(report.cells)
    by_job = {}
    for c in report.cells:
        by_job.setdefault((c.task, c.n_val, c.run), set()).add((c.index_hash, c.seed))
    assert all(len(v) == 1 for v in by_job.values())
    # distinct runs at a subsampled size draw distinct rows
    small = {c.index_hash for c in report.cells if c.n_val == 50 and c.task == "a"}
    assert len(small) == 2


def test_benchmark_is_reproducible_and_worker_independent(tmp_path):
    a = cells_csv(run_benchmark(small_config()))
    b = cells_csv(run_benchmark(small_config()))
    c = cells_csv(run_benchmark(small_config(workers=2)))
    assert a == b == c
    d = cells_csv(run_benchmark(small_config(seed0=1)))
    assert d != a


def test_seed_derivation_is_documented_hash():
    import hashlib

    expected = int.from_bytes(hashlib.sha256(b"7:task:200:3").digest()[:8], "big") & (2**63 - 1)
    assert derive_seed(7, "task", 200, 3) == expected


def test_aggregates_recompute_from_cells():
    report = run_benchmark(small_config())
    aggs = aggregate(report)
    for (task, method, n), agg in aggs.items():
        cells = report.select(task, method, n)
        vals = np.array([c.nll for c in cells if c.ok])
        assert agg.mean["nll"] == pytest.approx(vals.mean(), rel=1e-15)
        assert agg.std["nll"] == pytest.approx(vals.std(), abs=1e-15)
        assert agg.n_ok + agg.n_failed == 2


def test_failed_cells_are_recorded_not_fatal(monkeypatch):
    real_fit = runner.fit

    def flaky(method, train, cfg):
        if method == "hts":
            raise FitError("non-finite objective", 3)
        return real_fit(method, train, cfg)

    monkeypatch.setattr(runner, "fit", flaky)
    report = run_benchmark(small_config())
    failed = [c for c in report.cells if not c.ok]
    assert len(failed) == 8 and {c.method for c in failed} == {"hts"}
    assert all("epoch 3" in c.note for c in failed)
    agg = aggregate(report)[("a", "hts", 50)]
    assert agg.n_ok == 0 and agg.n_failed == 2 and math.isnan(agg.mean["nll"])
    assert "inf" in summary_markdown(report)


def test_global_task_ts_and_hts_agree():
    task = SynthConfig(k=10, n_val=10000, n_test=10000, distortion=Global(2.5), seed=3)
    report = run_benchmark(BenchmarkConfig(tasks=[("g", task)], methods=("ts", "hts"),
                                           val_sizes=(10000,), runs=1))
    aggs = aggregate(report)
    assert abs(aggs[("g", "ts", 10000)].mean["nll"] - aggs[("g", "hts", 10000)].mean["nll"]) < 0.01


def test_config_validation():
    with pytest.raises(InvalidInputError):
        small_config(val_sizes=(400, 50))
    with pytest.raises(InvalidInputError):
        small_config(val_sizes=(50, 500))
    with pytest.raises(InvalidInputError):
        small_config(runs=0)
    with pytest.raises(InvalidInputError):
        small_config(methods=("ts", "fancy"))
    with pytest.raises(InvalidInputError):
        small_config(tasks=[("a", small_task()), ("a", small_task())])
    with pytest.raises(InvalidInputError):
        small_config(tasks=[])


def test_config_file_round_trip(tmp_path):
    split, _ = generate(small_task(4))
    write_logits(split.validation, tmp_path / "v.csv")
    write_logits(split.test, tmp_path / "t.csv")
    text = (
        "name=demo\nmethods=ts,hts\nval_sizes=50,100\nruns=3\nece_bins=15\nseed0=5\n"
        "task.syn.distortion=global\ntask.syn.t_star=2\ntask.syn.k=3\ntask.syn.n_val=200\n"
        "task.real.kind=files\ntask.real.val=v.csv\ntask.real.test=t.csv\nfit.lr0=0.02\n"
    )
    (tmp_path / "b.kv").write_text(text)
    cfg = BenchmarkConfig.read(tmp_path / "b.kv")
    assert [n for n, _ in cfg.tasks] == ["syn", "real"]
    assert isinstance(cfg.tasks[1][1], FileTask)
    assert cfg.fit.lr0 == 0.02 and cfg.runs == 3 and cfg.seed0 == 5
    items = kvfile.loads(kvfile.dumps(cfg.as_items()))
    again = BenchmarkConfig.from_items(items)
    assert again.tasks[0] == cfg.tasks[0] and again.fit == cfg.fit
    (tmp_path / "bad.kv").write_text("colour=blue\n")
    with pytest.raises(ParseError):
        BenchmarkConfig.read(tmp_path / "bad.kv")


def test_report_files(tmp_path):
    report = run_benchmark(small_config())
    paths = write_report(report, tmp_path)
    lines = paths["cells"].read_text().splitlines()
    assert lines[0].startswith("task,method,n_val,run,seed,index_hash,status")
    assert len(lines) == 1 + len(report.cells)
    summary = paths["summary"].read_text()
    assert "## N = 50" in summary and "Avg. Relative" in summary and "ECE (×100)" in summary
    meta = kvfile.read(paths["meta"])
    assert meta["prng"] == "numpy.random.PCG64" and meta["cells"] == str(len(report.cells))


def test_per_class_analysis_ts_is_constant():
    split, _ = generate(small_task(2))
    p = fit("ts", split.validation)
    rows = analyze_per_class(split, p)
    assert len(rows) == 4
    for r in rows:
        assert r.predicted_t == pytest.approx(softplus(p.a), rel=1e-15)


def test_per_class_analysis_symmetric_task_gives_identical_rows():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(500, 2)) * 2
    y = rng.integers(0, 2, 500)
    mirrored = LogitDataset(np.vstack([z, z[:, ::-1]]), np.concatenate([y, 1 - y]))
    split = TaskSplit(mirrored, mirrored)
    rows = analyze_per_class(split, HTS(0.5, 0.3, 2))
    assert rows[0].count == rows[1].count
    assert rows[0].optimal_t == pytest.approx(rows[1].optimal_t, rel=1e-12)
    assert rows[0].predicted_t == pytest.approx(rows[1].predicted_t, rel=1e-12)


def test_per_class_analysis_marks_absent_class():
    d = LogitDataset(np.array([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), [0, 1])
    rows = analyze_per_class(TaskSplit(d, d), fit("ts", d))
    assert rows[2].count == 0 and math.isnan(rows[2].predicted_t) and math.isnan(rows[2].optimal_t)
    assert "nan" in format_table(rows, "per-class")


def test_entropy_bins_follow_oracle_curve():
    cfg = SynthConfig(k=10, n_val=10000, n_test=50000, dirichlet_alpha=0.1,
                      distortion=EntropyLinear(0.8, 0.5), seed=7)
    split, _ = generate(cfg)
    hts = fit("hts", split.validation)
    rows = analyze_entropy_bins(split, hts, bins=8)
    populated = [r for r in rows if r.count >= 1000]
    assert len(populated) >= 4
    for r in populated:
        mid = 0.5 * (r.lo + r.hi)
        assert r.optimal_t == pytest.approx(softplus(0.8 * mid + 0.5), rel=0.10)
        assert r.predicted_t == pytest.approx(r.optimal_t, rel=0.10)


def test_entropy_bins_constant_task_is_flat():
    split, _ = generate(SynthConfig(k=10, n_val=1000, n_test=50000, distortion=Global(2.0), seed=8))
    rows = analyze_entropy_bins(split, fit("ts", split.validation), bins=5)
    populated = [r.optimal_t for r in rows if r.count >= 500]
    assert len(populated) >= 3
    assert max(populated) / min(populated) < 1.1


def test_analysis_rejects_bad_input():
    split, _ = generate(small_task(3))
    with pytest.raises(InvalidInputError):
        analyze_entropy_bins(split, fit("ts", split.validation), bins=1)
    with pytest.raises(UnsupportedOperationError):
        analyze_per_class(split, ETS([0.4, 0.4, 0.2], 1.5, 4))
