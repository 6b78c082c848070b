"""Tables comparing a fitted temperature function with group-wise optimal temperatures."""

from dataclasses import dataclass

import numpy as np

from ..calibrators import Calibrator, optimal_temperature_per_group
from ..errors import InvalidInputError, UnsupportedOperationError
from ..mathkit import log_normalized_entropy


@dataclass(frozen=True)
class GroupRow:
    """One table row. ``count == 0`` marks an empty group, whose temperatures are NaN."""

    label: str
    count: int
    predicted_t: float
    optimal_t: float
    lo: float = np.nan
    hi: float = np.nan


def _predicted(fitted, d):
    if not isinstance(fitted, Calibrator):
        raise InvalidInputError("expected fitted calibrator parameters")
    try:
        return np.asarray(fitted.temperature(d.logits), dtype=np.float64)
    except UnsupportedOperationError:
        raise UnsupportedOperationError(
            f"{fitted.method} has no per-row temperature; analysis needs an ATS-family method") from None


def _rows(d, t, groups, labels, bounds=None):
    optimal = optimal_temperature_per_group(d, groups)
    out = []
    for i, rows in enumerate(groups):
        lo, hi = bounds[i] if bounds is not None else (np.nan, np.nan)
        mean = float(t[rows].mean()) if rows.size else np.nan
        out.append(GroupRow(labels[i], int(rows.size), mean, float(optimal[i]), lo, hi))
    return out


def analyze_per_class(split, fitted):
    """Per true class of the test split: mean fitted temperature and TS-optimal temperature."""
    d = split.test
    t = _predicted(fitted, d)
    groups = [np.flatnonzero(d.labels == c) for c in range(d.k)]
    return _rows(d, t, groups, [str(c) for c in range(d.k)])


def analyze_entropy_bins(split, fitted, bins=10):
    """Equal-width bins over the observed log normalized entropy of the test split."""
    if bins < 2:
        raise InvalidInputError("entropy analysis needs at least 2 bins")
    d = split.test
    t = _predicted(fitted, d)
    x = log_normalized_entropy(d.logits)
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        hi = lo + 1e-12
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
    groups = [np.flatnonzero(idx == j) for j in range(bins)]
    bounds = [(float(edges[j]), float(edges[j + 1])) for j in range(bins)]
    return _rows(d, t, groups, [str(j) for j in range(bins)], bounds)


def format_table(rows, mode):
    """Comma-separated table text with a header line."""
    if mode == "per-class":
        header = "class,count,predicted_t,optimal_t"
        body = [f"{r.label},{r.count},{r.predicted_t:.6f},{r.optimal_t:.6f}" for r in rows]
    else:
        header = "bin,log_entropy_lo,log_entropy_hi,count,predicted_t,optimal_t"
        body = [f"{r.label},{r.lo:.6f},{r.hi:.6f},{r.count},{r.predicted_t:.6f},{r.optimal_t:.6f}"
                for r in rows]
    return "\n".join([header, *body]) + "\n"
