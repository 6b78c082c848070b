"""Aggregates, TS-relative ratios and report files of a benchmark run."""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__, kvfile
from ..dataset import PRNG_ID
from .runner import CELL_OK, SEED_DERIVATION

METRICS = ("ece", "nll", "brier", "accuracy")
RELATIVE_METRICS = ("ece", "nll", "brier")
CELL_COLUMNS = ("task", "method", "n_val", "run", "seed", "index_hash", "status",
                "accuracy", "ece", "nll", "brier", "note")
UNDEFINED = math.nan


def relative_metric(value, ts_value):
    """``value / ts_value``; :data:`UNDEFINED` (NaN) when ``ts_value <= 0`` or either is non-finite."""
    if not (math.isfinite(value) and math.isfinite(ts_value)) or ts_value <= 0:
        return UNDEFINED
    return value / ts_value


@dataclass(frozen=True)
class Aggregate:
    """Mean and population standard deviation over the successful runs of one grid cell."""

    mean: dict
    std: dict
    n_ok: int
    n_failed: int


def _stats(values):
    if not values:
        return math.nan, math.nan
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std())


def aggregate(report):
    """``{(task, method, n_val): Aggregate}``; failed cells are counted, not averaged."""
    groups = {}
    for c in report.cells:
        groups.setdefault((c.task, c.method, c.n_val), []).append(c)
    out = {}
    for key, cells in groups.items():
        ok = [c for c in cells if c.status == CELL_OK]
        mean, std = {}, {}
        for m in METRICS:
            mean[m], std[m] = _stats([getattr(c, m) for c in ok])
        out[key] = Aggregate(mean, std, len(ok), len(cells) - len(ok))
    return out


def relative_cells(report, metric):
    """TS-relative value of every non-TS-missing cell: ``{(task, method, n, run): ratio}``."""
    ts = {(c.task, c.n_val, c.run): c for c in report.cells if c.method == "ts"}
    out = {}
    for c in report.cells:
        ref = ts.get((c.task, c.n_val, c.run))
        if ref is None:
            continue
        out[(c.task, c.method, c.n_val, c.run)] = relative_metric(getattr(c, metric), getattr(ref, metric))
    return out


def average_relative(report, metric):
    """``{(method, n_val): (mean ratio, undefined count)}`` averaged over tasks and runs."""
    groups = {}
    for (task, method, n, run), r in relative_cells(report, metric).items():
        groups.setdefault((method, n), []).append(r)
    out = {}
    for key, values in groups.items():
        good = [v for v in values if not math.isnan(v)]
        out[key] = (float(np.mean(good)) if good else math.nan, len(values) - len(good))
    return out


def _fmt(x):
    return "" if isinstance(x, float) and math.isnan(x) else kvfile.format_value(x)


def cells_csv(report):
    lines = [",".join(CELL_COLUMNS)]
    for c in report.cells:
        lines.append(",".join(_fmt(getattr(c, col)).replace(",", ";") for col in CELL_COLUMNS))
    return "\n".join(lines) + "\n"


def _entry(agg, metric, scale):
    if agg.n_ok == 0:
        return "inf"
    text = f"{scale * agg.mean[metric]:.4f} ± {scale * agg.std[metric]:.4f}"
    return text + (f" ({agg.n_failed} failed)" if agg.n_failed else "")


def summary_markdown(report):
    cfg = report.config
    aggs = aggregate(report)
    tasks = list(dict.fromkeys(c.task for c in report.cells))
    methods = list(cfg.methods)
    out = [f"# {cfg.name}", "",
           f"{len(tasks)} task(s), {cfg.runs} run(s) per validation size, ECE with {cfg.ece_bins} bins.",
           "Entries are mean ± std over runs on the test split; ECE is shown ×100.",
           "Avg. Relative divides each cell by TS on the same task, size and run, then averages "
           "across tasks and runs.", ""]
    titles = {"ece": ("ECE (×100)", 100.0), "nll": ("NLL", 1.0), "brier": ("Brier", 1.0),
              "accuracy": ("Accuracy", 1.0)}
    for n in cfg.val_sizes:
        out.append(f"## N = {n}")
        out.append("")
        for metric in METRICS:
            title, scale = titles[metric]
            out.append(f"### {title}")
            out.append("")
            out.append("| task | " + " | ".join(m.upper() for m in methods) + " |")
            out.append("|---" * (len(methods) + 1) + "|")
            for task in tasks:
                row = [_entry(aggs[(task, m, n)], metric, scale) for m in methods]
                out.append(f"| {task} | " + " | ".join(row) + " |")
            if metric in RELATIVE_METRICS and "ts" in methods:
                rel = average_relative(report, metric)
                row = []
                for m in methods:
                    value, undefined = rel.get((m, n), (math.nan, 0))
                    text = "n/a" if math.isnan(value) else f"{value:.4f}"
                    row.append(text + (f" ({undefined} undefined)" if undefined else ""))
                out.append("| Avg. Relative | " + " | ".join(row) + " |")
            out.append("")
    return "\n".join(out)


def meta_items(report):
    failed = sum(1 for c in report.cells if c.status != CELL_OK)
    return {
        "version": __version__,
        "prng": PRNG_ID,
        "seed_derivation": SEED_DERIVATION,
        "cells": len(report.cells),
        "failed_cells": failed,
        **report.config.as_items(),
    }


def write_report(report, out_dir):
    """Write ``<name>.cells.csv``, ``<name>.summary.md`` and ``<name>.meta`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = report.config.name
    paths = {
        "cells": out / f"{name}.cells.csv",
        "summary": out / f"{name}.summary.md",
        "meta": out / f"{name}.meta",
    }
    paths["cells"].write_text(cells_csv(report), encoding="utf-8")
    paths["summary"].write_text(summary_markdown(report), encoding="utf-8")
    kvfile.write(paths["meta"], meta_items(report))
    return paths
