"""Calibration metrics (ECE), proper scoring rules (NLL, Brier) and the L_ECE loss."""

from dataclasses import dataclass

import numpy as np

from .dataset import accuracy, predictions
from .errors import InvalidInputError
from .mathkit import log_softmax, softmax

DEFAULT_ECE_BINS = 50


@dataclass(frozen=True)
class EceBinning:
    """M equal-width confidence bins; bin i covers ((i-1)/M, i/M], the first one closed at 0."""

    m: int = DEFAULT_ECE_BINS

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise InvalidInputError(f"bin count must be a positive integer, got {self.m}")

    @property
    def upper_edges(self):
        return np.arange(1, self.m + 1) / self.m

    def assign(self, confidence):
        """0-based bin index of each confidence value."""
        idx = np.searchsorted(self.upper_edges, confidence, side="left")
        return np.minimum(idx, self.m - 1)


@dataclass(frozen=True)
class MetricReport:
    ece: float
    nll: float
    brier: float
    accuracy: float
    method: str = ""
    n_val: int = 0
    run_id: int = 0

    def as_items(self):
        return {
            "method": self.method,
            "n_val": self.n_val,
            "run_id": self.run_id,
            "accuracy": self.accuracy,
            "ece": self.ece,
            "ece_pct": 100.0 * self.ece,
            "nll": self.nll,
            "brier": self.brier,
        }


def _binning(binning):
    if binning is None:
        return EceBinning()
    if isinstance(binning, EceBinning):
        return binning
    return EceBinning(int(binning))


def bin_statistics(logits, labels, binning=None):
    """Per-bin counts, accuracies and mean confidences of the top-label predictions.

    Returns ``(bin_of_row, counts, acc, conf, top_conf)``; empty bins carry
    zero accuracy and confidence.
    """
    binning = _binning(binning)
    q = softmax(logits)
    top = q.max(axis=-1)
    correct = (predictions(logits) == labels).astype(np.float64)
    rows_bin = binning.assign(top)
    counts = np.bincount(rows_bin, minlength=binning.m).astype(np.float64)
    safe = np.maximum(counts, 1.0)
    acc = np.bincount(rows_bin, weights=correct, minlength=binning.m) / safe
    conf = np.bincount(rows_bin, weights=top, minlength=binning.m) / safe
    return rows_bin, counts, acc, conf, top


def ece(d, binning=None):
    _, counts, acc, conf, _ = bin_statistics(d.logits, d.labels, binning)
    return float(np.sum(counts / d.n * np.abs(acc - conf)))


def l_ece(d, binning=None):
    """ECE-shaped training loss; bins are recomputed on every call.

    The per-bin gap is a scalar, so its 2-norm is its absolute value and the
    value coincides with :func:`ece` on identical binning.
    """
    _, counts, acc, conf, _ = bin_statistics(d.logits, d.labels, binning)
    gaps = (acc - conf)[:, None]
    return float(np.sum(counts / d.n * np.linalg.norm(gaps, axis=1)))


def nll(d):
    lq = log_softmax(d.logits)
    return float(-np.mean(lq[np.arange(d.n), d.labels]))


def brier(d):
    q = softmax(d.logits)
    q[np.arange(d.n), d.labels] -= 1.0
    return float(np.mean(np.sum(q * q, axis=1)))


def evaluate(d, binning=None, method="", n_val=0, run_id=0):
    return MetricReport(
        ece=ece(d, binning),
        nll=nll(d),
        brier=brier(d),
        accuracy=accuracy(d),
        method=method,
        n_val=n_val,
        run_id=run_id,
    )
