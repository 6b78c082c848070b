"""Benchmark grid execution.

The grid is split into independent jobs, one per (task, n, run). A job draws
a single validation subsample and fits every method on it, so all methods of
a cell row see identical data. Jobs run in a process pool when
``workers > 1``; results are merged in grid order, so reports do not depend
on scheduling.
"""

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..calibrators import apply, fit
from ..dataset import TaskSplit, index_hash, subsample_indices
from ..errors import CalibrationError, FitError
from ..metrics import EceBinning, evaluate
from ..synthgen import SynthConfig, generate
from .config import FileTask

CELL_OK = "ok"
CELL_FAILED = "failed"
SEED_DERIVATION = "sha256('seed0:task:n:run') first 8 bytes, top bit cleared"


def derive_seed(seed0, task, n, run):
    """Seed for the (task, n, run) job: 63 bits of SHA-256 over ``seed0:task:n:run``."""
    digest = hashlib.sha256(f"{seed0}:{task}:{n}:{run}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


@dataclass(frozen=True)
class Cell:
    task: str
    method: str
    n_val: int
    run: int
    seed: int
    index_hash: str
    status: str
    accuracy: float = math.nan
    ece: float = math.nan
    nll: float = math.nan
    brier: float = math.nan
    note: str = ""

    @property
    def ok(self):
        return self.status == CELL_OK


@dataclass(frozen=True)
class BenchmarkReport:
    config: object
    cells: tuple

    def select(self, task=None, method=None, n_val=None):
        return [c for c in self.cells
                if (task is None or c.task == task)
                and (method is None or c.method == method)
                and (n_val is None or c.n_val == n_val)]


def resolve_tasks(cfg):
    """Materialize every task of ``cfg`` as ``(name, TaskSplit)``."""
    out = []
    for name, task in cfg.tasks:
        if isinstance(task, SynthConfig):
            split, _ = generate(task, name)
        elif isinstance(task, FileTask):
            split = task.load(name)
        else:
            split = task
        if cfg.val_sizes[-1] > split.validation.n:
            raise CalibrationError(
                f"task {name!r}: val size {cfg.val_sizes[-1]} exceeds {split.validation.n} validation rows")
        out.append((name, split))
    return out


def _run_method(method, train, test, fit_cfg, bins):
    p = fit(method, train, fit_cfg)
    note = "degenerate" if getattr(p, "degenerate", False) else ""
    with np.errstate(all="ignore"):
        report = evaluate(apply(p, test), bins, method=method, n_val=train.n)
    return report, note


def run_job(job):
    """Fit and evaluate every method on one (task, n, run) subsample."""
    name, split, n, run, seed, methods, fit_cfg, ece_bins = job
    rows = subsample_indices(split.validation.n, n, seed)
    train = split.validation.take(rows)
    digest = index_hash(rows)
    bins = EceBinning(ece_bins)
    cfg = fit_cfg.with_(seed=seed)
    cells = []
    for method in methods:
        base = dict(task=name, method=method, n_val=n, run=run, seed=seed, index_hash=digest)
        try:
            report, note = _run_method(method, train, split.test, cfg, bins)
        except (FitError, FloatingPointError) as exc:
            cells.append(Cell(status=CELL_FAILED, note=str(exc), **base))
            continue
        metrics = (report.accuracy, report.ece, report.nll, report.brier)
        if not all(math.isfinite(v) for v in metrics):
            cells.append(Cell(status=CELL_FAILED, note="non-finite metric", **base))
            continue
        cells.append(Cell(status=CELL_OK, accuracy=report.accuracy, ece=report.ece, nll=report.nll,
                          brier=report.brier, note=note, **base))
    return cells


def build_jobs(cfg, tasks):
    jobs = []
    for name, split in tasks:
        for n in cfg.val_sizes:
            for run in range(cfg.runs):
                seed = derive_seed(cfg.seed0, name, n, run)
                jobs.append((name, split, n, run, seed, cfg.methods, cfg.fit, cfg.ece_bins))
    return jobs


def run_benchmark(cfg, tasks=None):
    """Run the full grid of ``cfg``; ``tasks`` may pass pre-resolved splits."""
    tasks = resolve_tasks(cfg) if tasks is None else tasks
    for _, split in tasks:
        if not isinstance(split, TaskSplit):
            raise CalibrationError("resolved tasks must be TaskSplit instances")
    jobs = build_jobs(cfg, tasks)
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
            results = list(pool.map(run_job, jobs))
    else:
        results = [run_job(job) for job in jobs]
    return BenchmarkReport(cfg, tuple(c for cells in results for c in cells))
