"""Objectives of temperature-scaled logits and their derivatives in the temperature.

All functions take logits ``z`` (N, K), labels ``y`` (N,) and per-row
temperatures ``t`` (N,), and return ``(loss, dloss_dt)`` with ``dloss_dt``
of shape (N,). Losses are means over rows.
"""

import numpy as np

from ..errors import InvalidInputError, UnsupportedOperationError
from ..metrics import EceBinning
from .core import GRADIENT_METHODS, SoftplusTemperature, clamp_temperature


def _log_softmax(x):
    s = x - x.max(axis=1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def shift_logits(z, y):
    """Row-max-shifted logits and their label column.

    Since ``T > 0``, ``max(z / T) = max(z) / T``, so the stabilizing shift of
    the scaled logits can be taken once on ``z`` and reused for every ``T``.
    """
    zc = z - z.max(axis=1, keepdims=True)
    return zc, zc[np.arange(z.shape[0]), y]


def nll_shifted(zc, zy, t, grad=True):
    """Mean NLL of ``zc / t`` (and its derivative in ``t``) from :func:`shift_logits` output."""
    e = np.exp(zc / t[:, None])
    total = e.sum(axis=1)
    loss = np.mean(np.log(total) - zy / t)
    if not grad:
        return loss
    # d(loss_i)/dt = (z_y - sum_j q_j z_j) / t^2, invariant to the shift
    dt = (zy - (e * zc).sum(axis=1) / total) / (t * t) / zc.shape[0]
    return loss, dt


def nll_at_temperature(z, y, t):
    return nll_shifted(*shift_logits(z, y), t)


def nll_value(z, y, t):
    return nll_shifted(*shift_logits(z, y), np.broadcast_to(t, (z.shape[0],)), grad=False)


def lece_at_temperature(z, y, t, binning):
    """L_ECE with bins recomputed from the scaled confidences.

    Bin membership and per-bin accuracy are piecewise constant, so the
    derivative flows only through the mean confidence of each bin.
    """
    n = z.shape[0]
    rows = np.arange(n)
    lq = _log_softmax(z / t[:, None])
    q = np.exp(lq)
    top_idx = q.argmax(axis=1)
    top = q[rows, top_idx]
    correct = (top_idx == y).astype(np.float64)
    bins = binning.assign(top)
    counts = np.bincount(bins, minlength=binning.m).astype(np.float64)
    safe = np.maximum(counts, 1.0)
    acc = np.bincount(bins, weights=correct, minlength=binning.m) / safe
    conf = np.bincount(bins, weights=top, minlength=binning.m) / safe
    loss = np.sum(counts / n * np.abs(acc - conf))
    # d(loss)/d(top_r) = sign(conf - acc)/n for the row's bin
    s = np.sign(conf - acc)[bins] / n
    # d(top)/dt = -top * (z_top - q.z) / t^2
    dtop_dt = -top * (z[rows, top_idx] - (q * z).sum(axis=1)) / (t * t)
    return loss, s * dtop_dt


class Objective:
    """Loss and flat-parameter gradient of a softplus-temperature calibrator on fixed data.

    Features are computed once; ``__call__(theta, rows)`` evaluates on a row
    subset (``None`` for all rows) in the format expected by ``sgd_minimize``.
    With ``standardize`` the features are centered and scaled and ``theta``
    lives in the matching reparametrized space (see ``to_internal``).
    """

    def __init__(self, template, z, y, objective="nll", bins=50, standardize=False):
        if not isinstance(template, SoftplusTemperature):
            raise UnsupportedOperationError(
                f"{template.method} is not fitted by gradient descent; use fit()")
        if objective not in ("nll", "lece"):
            raise InvalidInputError(f"unknown objective {objective!r}")
        self.template = template
        self.z = np.asarray(z, dtype=np.float64)
        self.y = np.asarray(y)
        self.x = template.features(self.z)
        self.mu = self.sd = None
        if standardize and self.x.shape[1]:
            self.mu = self.x.mean(axis=0)
            sd = self.x.std(axis=0)
            self.sd = np.where(sd > 1e-12, sd, 1.0)
            self.x = (self.x - self.mu) / self.sd
        self.objective = objective
        self.binning = EceBinning(bins)
        self.zc, self.zy = shift_logits(self.z, self.y)

    def to_internal(self, theta):
        if self.mu is None:
            return np.array(theta, dtype=np.float64)
        return self.template.to_standardized(theta, self.mu, self.sd)

    def from_internal(self, theta):
        if self.mu is None:
            return np.array(theta, dtype=np.float64)
        return self.template.from_standardized(theta, self.mu, self.sd)

    @property
    def n_rows(self):
        return self.z.shape[0]

    def __call__(self, theta, rows=None):
        if rows is None:
            rows = slice(None)
        x = self.x[rows]
        u, cache = self.template.forward(theta, x)
        t, dt_du = clamp_temperature(u)
        if self.objective == "nll":
            loss, dl_dt = nll_shifted(self.zc[rows], self.zy[rows], t)
        else:
            loss, dl_dt = lece_at_temperature(self.z[rows], self.y[rows], t, self.binning)
        grad = self.template.backward(theta, x, cache, dl_dt * dt_du)
        return float(loss), grad

    def value(self, theta):
        """Objective over all rows, without the gradient."""
        u, _ = self.template.forward(theta, self.x)
        t, _ = clamp_temperature(u)
        if self.objective == "nll":
            return float(nll_shifted(self.zc, self.zy, t, grad=False))
        return float(lece_at_temperature(self.z, self.y, t, self.binning)[0])


def nll_gradient(p, batch):
    """Gradient of the mean NLL over ``batch`` with respect to ``p.vector()``."""
    if p.method not in GRADIENT_METHODS:
        raise UnsupportedOperationError(f"no analytic NLL gradient for {p.method}")
    _, grad = Objective(p, batch.logits, batch.labels, "nll")(p.vector())
    return grad


def lece_gradient(p, batch, bins=50):
    if p.method not in GRADIENT_METHODS:
        raise UnsupportedOperationError(f"no L_ECE gradient for {p.method}")
    _, grad = Objective(p, batch.logits, batch.labels, "lece", bins)(p.vector())
    return grad
