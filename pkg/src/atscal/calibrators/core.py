"""Calibration maps and their parameters.

Every map is accuracy-preserving. The adaptive-temperature maps divide the
logits by a per-row temperature, ``z_hat = z / T(z)``. TS, LTS, HTS and
HnLTS use ``T(z) = softplus(theta . phi(z) + b)`` for a fixed feature map
``phi``. PTS runs a small MLP on the sorted logits. BTS is a lookup table
keyed on the top-label confidence. ETS is a convex combination of scaled,
raw and constant logits and has no scalar temperature.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import kvfile
from ..dataset import PRNG_ID
from ..errors import InvalidInputError, ParseError, UnsupportedOperationError
from ..mathkit import log_normalized_entropy, sigmoid, softmax, softplus, softplus_inverse

#: Temperatures are clamped below by this value so ``z / T`` stays bounded.
T_MIN = 1e-4

PTS_HIDDEN = 5
PTS_MAX_INPUT = 10
PTS_ACTIVATION = "relu"

#: High-confidence bin forced by BTS.
BTS_HIGH_EDGE = 0.999

METHODS = ("ts", "lts", "hts", "hnlts", "pts", "ptse", "bts", "ets")
GRADIENT_METHODS = ("ts", "lts", "hts", "hnlts", "pts", "ptse")
FORMAT_VERSION = 1


def _as_batch(z, k=None):
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    z2 = z[None, :] if single else z
    if z2.ndim != 2:
        raise InvalidInputError(f"expected logits of shape (K,) or (N, K), got {z.shape}")
    if k is not None and z2.shape[1] != k:
        raise InvalidInputError(f"calibrator expects K={k} logits, got {z2.shape[1]}")
    if not np.all(np.isfinite(z2)):
        raise InvalidInputError("logits must be finite")
    return z2, single


def clamp_temperature(u):
    """``max(softplus(u), T_MIN)`` and its derivative with respect to ``u``."""
    t = softplus(u)
    active = t > T_MIN
    return np.where(active, t, T_MIN), np.where(active, sigmoid(u), 0.0)


class Calibrator:
    """Common evaluation surface; subclasses fill in :meth:`temperature`."""

    method = ""
    k = 0

    def temperature(self, z):
        raise UnsupportedOperationError(f"{self.method} has no scalar temperature function")

    def calibrate(self, z):
        z2, single = _as_batch(z, self.k)
        out = z2 / self.temperature(z2)[:, None]
        return out[0] if single else out

    def as_items(self):
        return {"format": FORMAT_VERSION, "method": self.method, "k": self.k, "prng": PRNG_ID}


class SoftplusTemperature(Calibrator):
    """Temperature ``softplus(u(z; theta))`` with a differentiable pre-activation.

    Subclasses supply ``features(z)`` and, for non-linear maps, their own
    ``forward``/``backward``. The flat parameter ordering is ``vector()``.
    """

    def features(self, z):
        raise NotImplementedError

    def vector(self):
        raise NotImplementedError

    def with_vector(self, theta):
        raise NotImplementedError

    # linear default: u = X @ w + b with theta = (w, b)
    @staticmethod
    def forward(theta, x):
        return x @ theta[:-1] + theta[-1], None

    @staticmethod
    def backward(theta, x, cache, du):
        return np.concatenate([x.T @ du, [du.sum()]])

    # Reparametrization for features standardized as (x - mu) / sd; both
    # parameter vectors describe the same temperature function.
    @staticmethod
    def to_standardized(theta, mu, sd):
        w = theta[:-1]
        return np.concatenate([w * sd, [theta[-1] + w @ mu]])

    @staticmethod
    def from_standardized(theta, mu, sd):
        w = theta[:-1] / sd
        return np.concatenate([w, [theta[-1] - w @ mu]])

    def temperature(self, z):
        z2, single = _as_batch(z, self.k)
        u, _ = self.forward(self.vector(), self.features(z2))
        t, _ = clamp_temperature(u)
        return float(t[0]) if single else t


@dataclass(frozen=True, eq=False)
class TS(SoftplusTemperature):
    a: float
    k: int
    method = "ts"

    @property
    def t0(self):
        return max(softplus(self.a), T_MIN)

    def features(self, z):
        return np.zeros((z.shape[0], 0))

    def vector(self):
        return np.array([self.a], dtype=np.float64)

    def with_vector(self, theta):
        return TS(float(theta[0]), self.k)

    @classmethod
    def from_temperature(cls, t, k):
        return cls(float(softplus_inverse(t)), k)

    def as_items(self):
        return {**super().as_items(), "a": self.a, "temperature": self.t0}


@dataclass(frozen=True, eq=False)
class LTS(SoftplusTemperature):
    w_l: np.ndarray
    b: float
    method = "lts"

    def __post_init__(self):
        w = np.array(self.w_l, dtype=np.float64).ravel()
        object.__setattr__(self, "w_l", w)

    @property
    def k(self):
        return self.w_l.size

    def features(self, z):
        return z

    def vector(self):
        return np.concatenate([self.w_l, [self.b]])

    def with_vector(self, theta):
        return LTS(theta[:-1].copy(), float(theta[-1]))

    def as_items(self):
        return {**super().as_items(), "w_l": self.w_l, "b": self.b}


@dataclass(frozen=True, eq=False)
class HTS(SoftplusTemperature):
    w_h: float
    b: float
    k: int
    method = "hts"

    def features(self, z):
        return log_normalized_entropy(z)[:, None]

    def vector(self):
        return np.array([self.w_h, self.b], dtype=np.float64)

    def with_vector(self, theta):
        return HTS(float(theta[0]), float(theta[1]), self.k)

    def as_items(self):
        return {**super().as_items(), "w_h": self.w_h, "b": self.b}


@dataclass(frozen=True, eq=False)
class HnLTS(SoftplusTemperature):
    w_l: np.ndarray
    w_h: float
    b: float
    method = "hnlts"

    def __post_init__(self):
        object.__setattr__(self, "w_l", np.array(self.w_l, dtype=np.float64).ravel())

    @property
    def k(self):
        return self.w_l.size

    def features(self, z):
        return np.concatenate([z, log_normalized_entropy(z)[:, None]], axis=1)

    def vector(self):
        return np.concatenate([self.w_l, [self.w_h, self.b]])

    def with_vector(self, theta):
        return HnLTS(theta[:-2].copy(), float(theta[-2]), float(theta[-1]))

    def as_items(self):
        return {**super().as_items(), "w_l": self.w_l, "w_h": self.w_h, "b": self.b}


def pts_input_dim(k):
    return min(k, PTS_MAX_INPUT)


def _pts_shapes(d):
    h = PTS_HIDDEN
    return [("w1", (h, d)), ("b1", (h,)), ("w2", (h, h)), ("b2", (h,)), ("w3", (h,)), ("b3", ())]


@lru_cache(maxsize=None)
def _pts_layout(d):
    layout, i = [], 0
    for name, shape in _pts_shapes(d):
        size = math.prod(shape)
        layout.append((name, i, i + size, shape))
        i += size
    return tuple(layout)


def _pts_unpack(theta, d):
    return {name: theta[lo:hi].reshape(shape) for name, lo, hi, shape in _pts_layout(d)}


@dataclass(frozen=True, eq=False)
class PTS(SoftplusTemperature):
    """MLP temperature on the logits sorted in decreasing order.

    Input is the top ``min(K, 10)`` sorted logits; two rectified 5-unit
    hidden layers; the scalar output goes through softplus.
    """

    theta: np.ndarray
    k: int
    objective: str = "nll"

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).ravel()
        expected = self.n_params(self.k)
        if theta.size != expected:
            raise InvalidInputError(f"PTS with K={self.k} needs {expected} parameters, got {theta.size}")
        object.__setattr__(self, "theta", theta)

    @property
    def method(self):
        return "ptse" if self.objective == "lece" else "pts"

    @staticmethod
    def n_params(k):
        return sum(int(np.prod(s)) for _, s in _pts_shapes(pts_input_dim(k)))

    @classmethod
    def initial(cls, k, rng, objective="nll"):
        """Hidden weights uniform(-0.1, 0.1); output weights zero and output bias
        at the identity temperature, so training starts from ``T(z) = 1``."""
        d = pts_input_dim(k)
        theta = rng.uniform(-0.1, 0.1, size=cls.n_params(k))
        p = _pts_unpack(theta, d)
        p["w3"][:] = 0.0
        p["b3"][...] = softplus_inverse(1.0)
        return cls(theta, k, objective)

    @property
    def layers(self):
        return _pts_unpack(self.theta, pts_input_dim(self.k))

    def features(self, z):
        return -np.sort(-z, axis=1)[:, : pts_input_dim(self.k)]

    def vector(self):
        return self.theta.copy()

    def with_vector(self, theta):
        return PTS(theta.copy(), self.k, self.objective)

    @staticmethod
    def forward(theta, x):
        p = _pts_unpack(theta, x.shape[1])
        a1 = x @ p["w1"].T + p["b1"]
        h1 = np.maximum(a1, 0.0)
        a2 = h1 @ p["w2"].T + p["b2"]
        h2 = np.maximum(a2, 0.0)
        return h2 @ p["w3"] + p["b3"], (a1, h1, a2, h2)

    @staticmethod
    def backward(theta, x, cache, du):
        p = _pts_unpack(theta, x.shape[1])
        a1, h1, a2, h2 = cache
        g_w3 = h2.T @ du
        g_b3 = du.sum()
        d2 = np.outer(du, p["w3"]) * (a2 > 0)
        g_w2 = d2.T @ h1
        g_b2 = d2.sum(axis=0)
        d1 = (d2 @ p["w2"]) * (a1 > 0)
        g_w1 = d1.T @ x
        g_b1 = d1.sum(axis=0)
        return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2, g_w3, [g_b3]])

    @staticmethod
    def to_standardized(theta, mu, sd):
        theta = theta.copy()
        p = _pts_unpack(theta, mu.size)
        p["b1"] += p["w1"] @ mu
        p["w1"] *= sd
        return theta

    @staticmethod
    def from_standardized(theta, mu, sd):
        theta = theta.copy()
        p = _pts_unpack(theta, mu.size)
        p["w1"] /= sd
        p["b1"] -= p["w1"] @ mu
        return theta

    def as_items(self):
        items = {**super().as_items(), "objective": self.objective, "activation": PTS_ACTIVATION,
                 "input_dim": pts_input_dim(self.k), "hidden": f"{PTS_HIDDEN},{PTS_HIDDEN}"}
        for name, value in self.layers.items():
            items[name] = np.atleast_1d(value)
        return items


@dataclass(frozen=True, eq=False)
class BTS(Calibrator):
    """Per-bin temperatures keyed on the top-label confidence.

    ``edges`` are the non-decreasing inner cut points, the last one being the
    forced 0.999 boundary. Bin 0 is ``(0, edges[0])``, bin j is
    ``[edges[j-1], edges[j])`` and the last bin is ``[0.999, 1]``.
    """

    edges: np.ndarray
    temps: np.ndarray
    k: int
    method = "bts"

    def __post_init__(self):
        edges = np.array(self.edges, dtype=np.float64).ravel()
        temps = np.array(self.temps, dtype=np.float64).ravel()
        if temps.size != edges.size + 1:
            raise InvalidInputError("BTS needs one more temperature than cut points")
        if np.any(np.diff(edges) < 0):
            raise InvalidInputError("BTS cut points must be non-decreasing")
        if np.any(~(temps >= T_MIN)):
            raise InvalidInputError(f"BTS temperatures must be >= {T_MIN}")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "temps", temps)

    def bin_of(self, confidence):
        return np.searchsorted(self.edges, confidence, side="right")

    def temperature(self, z):
        z2, single = _as_batch(z, self.k)
        t = self.temps[self.bin_of(softmax(z2).max(axis=1))]
        return float(t[0]) if single else t

    def as_items(self):
        return {**super().as_items(), "n_bins": self.temps.size, "edges": self.edges, "temps": self.temps}


@dataclass(frozen=True, eq=False)
class ETS(Calibrator):
    """``w1 * z / t_ets + w2 * z + w3 / K`` with ``w`` on the probability simplex."""

    weights: np.ndarray
    t_ets: float
    k: int
    method = "ets"

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()
        if w.size != 3 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidInputError("ETS weights must be three non-negative reals summing to 1")
        if not self.t_ets > 0:
            raise InvalidInputError("ETS temperature must be positive")
        object.__setattr__(self, "weights", w)

    @property
    def degenerate(self):
        """True when the raw and scaled components vanish (argmax no longer defined)."""
        return self.weights[0] + self.weights[1] <= 1e-12

    @property
    def logit_scale(self):
        w1, w2, _ = self.weights
        return w1 / self.t_ets + w2

    def calibrate(self, z):
        z2, single = _as_batch(z, self.k)
        w1, w2, w3 = self.weights
        out = w1 * z2 / self.t_ets + w2 * z2 + w3 / self.k
        return out[0] if single else out

    def as_items(self):
        return {**super().as_items(), "weights": self.weights, "t_ets": self.t_ets}


def temperature(p, z):
    return p.temperature(z)


def calibrate(p, z):
    return p.calibrate(z)


def apply(p, d):
    """Calibrated copy of a :class:`~atscal.dataset.LogitDataset`."""
    return d.with_logits(p.calibrate(d.logits))


# serialization

def to_items(p, fit_config=None):
    items = p.as_items()
    if fit_config is not None:
        items.update(fit_config.as_items())
    return items


def save_params(p, path, fit_config=None):
    kvfile.write(path, to_items(p, fit_config))


def from_items(items, source=None):
    method = kvfile.get_str(items, "method", source=source)
    k = kvfile.get_int(items, "k", source=source)
    g = lambda key: kvfile.get_float(items, key, source=source)  # noqa: E731
    v = lambda key: kvfile.get_floats(items, key, source=source)  # noqa: E731
    try:
        if method == "ts":
            return TS(g("a"), k)
        if method == "lts":
            return LTS(v("w_l"), g("b"))
        if method == "hts":
            return HTS(g("w_h"), g("b"), k)
        if method == "hnlts":
            return HnLTS(v("w_l"), g("w_h"), g("b"))
        if method in ("pts", "ptse"):
            theta = np.concatenate([v(name) for name, _ in _pts_shapes(pts_input_dim(k))])
            return PTS(theta, k, kvfile.get_str(items, "objective", "nll"))
        if method == "bts":
            return BTS(v("edges"), v("temps"), k)
        if method == "ets":
            return ETS(v("weights"), g("t_ets"), k)
    except InvalidInputError as exc:
        raise ParseError(str(exc), source) from None
    raise ParseError(f"unknown method {method!r}", source)


def load_params(path):
    return from_items(kvfile.read(path), source=path)


def identity(method, k, rng=None):
    """Parameters of ``method`` that realize the identity map (``T = 1``)."""
    b = float(softplus_inverse(1.0))
    if method == "ts":
        return TS(b, k)
    if method == "lts":
        return LTS(np.zeros(k), b)
    if method == "hts":
        return HTS(0.0, b, k)
    if method == "hnlts":
        return HnLTS(np.zeros(k), 0.0, b)
    if method in ("pts", "ptse"):
        rng = rng if rng is not None else np.random.default_rng(0)
        return PTS.initial(k, rng, "lece" if method == "ptse" else "nll")
    if method == "bts":
        return BTS([BTS_HIGH_EDGE], [1.0, 1.0], k)
    if method == "ets":
        return ETS([0.0, 1.0, 0.0], 1.0, k)
    raise InvalidInputError(f"unknown method {method!r}")


__all__ = [
    "BTS", "ETS", "HTS", "HnLTS", "LTS", "PTS", "TS", "T_MIN", "METHODS", "Calibrator",
    "SoftplusTemperature", "apply", "calibrate", "clamp_temperature", "from_items", "identity",
    "load_params", "save_params", "temperature", "to_items",
]
