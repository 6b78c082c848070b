"""Fitting entry points for every calibrator."""

import numpy as np

from ..dataset import make_rng
from ..errors import InvalidInputError
from ..mathkit import softmax, softplus, softplus_inverse
from ..optim import FitConfig, scalar_minimize, sgd_minimize
from .core import BTS, BTS_HIGH_EDGE, ETS, METHODS, PTS, TS, T_MIN, identity
from .losses import Objective, nll_value

TS_T_LO = 1e-2
TS_T_HI = 1e2
TS_TOL = 1e-10

ETS_MAX_ITER = 500


def fit_temperature(z, y):
    """NLL-optimal scalar temperature of ``z`` (bounded Brent over the pre-softplus variable)."""
    z = np.asarray(z, dtype=np.float64)
    lo, hi = softplus_inverse(TS_T_LO), softplus_inverse(TS_T_HI)

    def f(a):
        return nll_value(z, y, max(softplus(a), T_MIN))

    return scalar_minimize(f, lo, hi, tol=TS_TOL)


def fit_ts(val):
    return TS(fit_temperature(val.logits, val.labels), val.k)


def fit_sgd(template, val, cfg, init_internal=None):
    """SGD in the standardized-feature parametrization, mapped back on return.

    ``init_internal`` overrides the starting point in that parametrization.
    """
    obj = Objective(template, val.logits, val.labels, cfg.objective, cfg.lece_bins, standardize=True)
    start = obj.to_internal(template.vector()) if init_internal is None else init_internal
    theta = sgd_minimize(obj, start, val.n, cfg)
    return template.with_vector(obj.from_internal(theta))


def bts_edges(confidence, n_bins):
    """Cut points: equal-mass bins below 0.999 plus the forced ``[0.999, 1]`` bin."""
    low = np.sort(confidence[confidence < BTS_HIGH_EDGE])
    n_low = n_bins - 1
    m = low.size
    cuts = []
    for j in range(1, n_low):
        if m == 0:
            cuts.append(BTS_HIGH_EDGE * j / n_low)
            continue
        pos = int(round(j * m / n_low))
        if pos <= 0:
            cuts.append(low[0])
        elif pos >= m:
            cuts.append(low[-1])
        else:
            cuts.append(0.5 * (low[pos - 1] + low[pos]))
    edges = np.maximum.accumulate(np.array(cuts + [BTS_HIGH_EDGE], dtype=np.float64))
    return np.minimum(edges, BTS_HIGH_EDGE)


def fit_bts(val, cfg):
    """One NLL-optimal temperature per confidence bin; empty bins get the global TS one."""
    conf = softmax(val.logits).max(axis=1)
    edges = bts_edges(conf, cfg.bts_bins)
    template = BTS(edges, np.ones(edges.size + 1), val.k)
    rows_bin = template.bin_of(conf)
    global_t = softplus(fit_temperature(val.logits, val.labels))
    temps = np.full(edges.size + 1, max(global_t, T_MIN))
    for j in range(temps.size):
        rows = np.flatnonzero(rows_bin == j)
        if rows.size:
            a = fit_temperature(val.logits[rows], val.labels[rows])
            temps[j] = max(softplus(a), T_MIN)
    return BTS(edges, temps, val.k)


def fit_ets(val, cfg):
    """Two stages: the TS temperature first, then the simplex weights.

    Weights are ``softmax(s)`` and ``s`` follows gradient descent with a
    backtracking step on the validation NLL.
    """
    z, y = val.logits, val.labels
    t = max(softplus(fit_temperature(z, y)), T_MIN)
    n = val.n
    rows = np.arange(n)

    def loss_grad(s):
        w = np.exp(s - s.max())
        w /= w.sum()
        c = w[0] / t + w[1]
        lq = c * z
        lq = lq - lq.max(axis=1, keepdims=True)
        lq = lq - np.log(np.exp(lq).sum(axis=1, keepdims=True))
        loss = -lq[rows, y].mean()
        g = np.exp(lq)
        g[rows, y] -= 1.0
        dc = (g * z).sum() / n
        dw = np.array([dc / t, dc, 0.0])
        ds = w * (dw - w @ dw)
        return loss, ds, w

    # start close to the TS solution
    s = np.array([0.0, -4.0, -4.0])
    loss, grad, w = loss_grad(s)
    best = (loss, w)
    step = 1.0
    for _ in range(ETS_MAX_ITER):
        g2 = grad @ grad
        if g2 < 1e-24:
            break
        while step > 1e-12:
            s_new = s - step * grad
            loss_new, grad_new, w_new = loss_grad(s_new)
            if loss_new <= loss - 0.5 * step * g2:
                break
            step *= 0.5
        else:
            break
        improvement = loss - loss_new
        s, loss, grad, w = s_new, loss_new, grad_new, w_new
        if loss < best[0]:
            best = (loss, w)
        step *= 2.0
        if improvement < 1e-15:
            break
    weights = best[1]
    return ETS(weights / weights.sum(), t, val.k)


def initial_params(method, k, cfg):
    if method in ("pts", "ptse"):
        return PTS.initial(k, make_rng([cfg.seed, 0x505453]), "lece" if method == "ptse" else "nll")
    return identity(method, k)


def _initial_internal(method, template):
    # PTS weights are drawn directly in the standardized input space
    return template.vector() if method in ("pts", "ptse") else None


def fit(method, val, cfg=None):
    """Fit ``method`` on the validation dataset ``val``.

    ``ptse`` (or ``pts`` with ``cfg.objective == "lece"``) trains PTS on the
    L_ECE loss; the softplus-temperature methods other than TS use SGD per
    ``cfg``; TS, BTS and ETS use deterministic scalar searches.
    """
    cfg = cfg or FitConfig()
    method = method.lower()
    if method not in METHODS:
        raise InvalidInputError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    if method == "pts" and cfg.objective == "lece":
        method = "ptse"
    if method == "ptse":
        cfg = cfg.with_(objective="lece")
    elif method in ("lts", "hts", "hnlts", "pts") and cfg.objective != "nll":
        raise InvalidInputError(f"{method} is trained on NLL only")

    if method == "ts":
        return fit_ts(val)
    if method == "bts":
        return fit_bts(val, cfg)
    if method == "ets":
        return fit_ets(val, cfg)
    template = initial_params(method, val.k, cfg)
    return fit_sgd(template, val, cfg, _initial_internal(method, template))


def optimal_temperature_per_group(d, groups):
    """TS-optimal temperature of each row group; empty groups yield NaN."""
    out = np.full(len(groups), np.nan)
    for i, rows in enumerate(groups):
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size:
            out[i] = max(softplus(fit_temperature(d.logits[rows], d.labels[rows])), T_MIN)
    return out


__all__ = [
    "fit", "fit_bts", "fit_ets", "fit_sgd", "fit_temperature", "fit_ts", "initial_params",
    "optimal_temperature_per_group", "bts_edges",
]
