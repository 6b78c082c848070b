"""Synthetic miscalibrated logit tasks with known ground-truth distortion.

Each row draws a calibrated posterior ``q*`` from a symmetric Dirichlet and a
label from ``q*``. The calibrated logits ``z* = ln q*`` are then multiplied
by a per-row temperature ``T``, so dividing the emitted logits by ``T``
recovers a perfectly calibrated predictor.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kvfile
from .calibrators.core import T_MIN
from .dataset import PRNG_ID, LogitDataset, TaskSplit, make_rng, write_logits
from .errors import InvalidInputError, ParseError
from .mathkit import ENT_MIN, softplus

_BISECT_ITERS = 200


@dataclass(frozen=True)
class Global:
    t_star: float
    kind = "global"


@dataclass(frozen=True)
class PerClass:
    """Temperature chosen by the predicted class."""

    t_star: tuple
    kind = "per_class"

    def __post_init__(self):
        object.__setattr__(self, "t_star", tuple(float(t) for t in self.t_star))


@dataclass(frozen=True)
class EntropyLinear:
    """``T = softplus(w_star * ln Hn(z) + b_star)`` with ``Hn`` the normalized
    entropy of the *emitted* logits ``z = T z*``.

    The equation is solved per row, so an entropy-based temperature function
    evaluated on the emitted logits can invert the distortion exactly.
    """

    w_star: float
    b_star: float
    kind = "entropy_linear"


@dataclass(frozen=True)
class SynthConfig:
    k: int = 10
    n_val: int = 10_000
    n_test: int = 10_000
    dirichlet_alpha: float = 1.0
    distortion: object = field(default_factory=lambda: Global(1.0))
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise InvalidInputError("K must be at least 2")
        if self.n_val < 1 or self.n_test < 1:
            raise InvalidInputError("n_val and n_test must be >= 1")
        if not self.dirichlet_alpha > 0:
            raise InvalidInputError("dirichlet_alpha must be positive")
        d = self.distortion
        if isinstance(d, Global):
            if not d.t_star >= T_MIN:
                raise InvalidInputError(f"t_star must be >= {T_MIN}")
        elif isinstance(d, PerClass):
            if len(d.t_star) != self.k:
                raise InvalidInputError(f"per-class distortion needs {self.k} temperatures")
            if not all(t >= T_MIN for t in d.t_star):
                raise InvalidInputError(f"every t_star must be >= {T_MIN}")
        elif isinstance(d, EntropyLinear):
            if not (np.isfinite(d.w_star) and np.isfinite(d.b_star)):
                raise InvalidInputError("w_star and b_star must be finite")
        else:
            raise InvalidInputError(f"unknown distortion {d!r}")

    def as_items(self):
        items = {
            "k": self.k,
            "n_val": self.n_val,
            "n_test": self.n_test,
            "alpha": self.dirichlet_alpha,
            "distortion": self.distortion.kind,
            "seed": self.seed,
        }
        d = self.distortion
        if isinstance(d, EntropyLinear):
            items.update(w_star=d.w_star, b_star=d.b_star)
        else:
            items["t_star"] = list(d.t_star) if isinstance(d, PerClass) else d.t_star
        return items

    @classmethod
    def from_items(cls, items, source=None):
        kind = kvfile.get_str(items, "distortion", "global", source)
        k = kvfile.get_int(items, "k", 10, source)
        if kind == "global":
            dist = Global(kvfile.get_float(items, "t_star", source=source))
        elif kind == "per_class":
            ts = kvfile.get_floats(items, "t_star", source)
            if ts.size < k:
                # a short list repeats cyclically, e.g. "1.5,3.0" alternates
                ts = np.resize(ts, k)
            dist = PerClass(tuple(ts))
        elif kind == "entropy_linear":
            dist = EntropyLinear(kvfile.get_float(items, "w_star", source=source),
                                 kvfile.get_float(items, "b_star", source=source))
        else:
            raise ParseError(f"unknown distortion {kind!r}", source)
        try:
            return cls(
                k=k,
                n_val=kvfile.get_int(items, "n_val", 10_000, source),
                n_test=kvfile.get_int(items, "n_test", 10_000, source),
                dirichlet_alpha=kvfile.get_float(items, "alpha", 1.0, source),
                distortion=dist,
                seed=kvfile.get_int(items, "seed", 0, source),
            )
        except InvalidInputError as exc:
            raise ParseError(str(exc), source) from None


@dataclass(frozen=True)
class SynthOracle:
    config: SynthConfig
    generator: str = PRNG_ID
    calibrated_logits: str = "ln_dirichlet"

    def as_items(self):
        return {**self.config.as_items(), "prng": self.generator, "calibrated_logits": self.calibrated_logits}

    @classmethod
    def from_items(cls, items, source=None):
        return cls(
            SynthConfig.from_items(items, source),
            kvfile.get_str(items, "prng", PRNG_ID, source),
            kvfile.get_str(items, "calibrated_logits", "ln_dirichlet", source),
        )


def _log_norm_entropy_scaled(zstar, t):
    """ln of the clamped normalized entropy of ``softmax(t * zstar)``, row-wise."""
    x = zstar * t[:, None]
    x = x - x.max(axis=1, keepdims=True)
    lq = x - np.log(np.exp(x).sum(axis=1, keepdims=True))
    h = -(np.exp(lq) * lq).sum(axis=1) / np.log(zstar.shape[1])
    return np.log(np.clip(h, ENT_MIN, 1.0))


def entropy_linear_temperature(zstar, w_star, b_star):
    """Per-row root of ``T = softplus(w ln Hn(T z*) + b)`` by bisection.

    For ``w >= 0`` the right side is non-increasing in ``T`` and the root is
    unique. The bracket is ``[T_MIN, softplus(|w| * ln(1/ENT_MIN) + |b|)]``.
    """
    n = zstar.shape[0]
    lo = np.full(n, T_MIN)
    hi = np.full(n, softplus(abs(w_star) * -np.log(ENT_MIN) + abs(b_star)) + 1.0)

    def gap(t):
        return t - softplus(w_star * _log_norm_entropy_scaled(zstar, t) + b_star)

    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        pos = gap(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
        if np.all(hi - lo <= 1e-15 * hi):
            break
    return 0.5 * (lo + hi)


def distortion_temperature(zstar, distortion):
    if isinstance(distortion, Global):
        return np.full(zstar.shape[0], distortion.t_star)
    if isinstance(distortion, PerClass):
        return np.asarray(distortion.t_star)[np.argmax(zstar, axis=1)]
    return entropy_linear_temperature(zstar, distortion.w_star, distortion.b_star)


def sample_calibrated(rng, n, k, alpha):
    """Calibrated logits ``ln q*`` with ``q* ~ Dirichlet(alpha)`` and labels ``~ q*``."""
    g = np.maximum(rng.gamma(alpha, size=(n, k)), np.finfo(np.float64).tiny)
    zstar = np.log(g) - np.log(g.sum(axis=1, keepdims=True))
    cdf = np.cumsum(np.exp(zstar), axis=1)
    u = rng.random(n) * cdf[:, -1]
    labels = np.minimum((cdf < u[:, None]).sum(axis=1), k - 1)
    return zstar, labels


def generate(cfg, name="synth"):
    """Build a validation/test split from ``cfg``; returns ``(TaskSplit, SynthOracle)``."""
    rng = make_rng(cfg.seed)
    n = cfg.n_val + cfg.n_test
    zstar, labels = sample_calibrated(rng, n, cfg.k, cfg.dirichlet_alpha)
    t = distortion_temperature(zstar, cfg.distortion)
    z = zstar * t[:, None]
    val = LogitDataset(z[: cfg.n_val], labels[: cfg.n_val], f"{name}-val")
    test = LogitDataset(z[cfg.n_val:], labels[cfg.n_val:], f"{name}-test")
    return TaskSplit(val, test), SynthOracle(cfg)


def oracle_temperature(oracle, z):
    """Ground-truth temperature of emitted logits ``z`` (the map that recalibrates them)."""
    d = oracle.config.distortion
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if isinstance(d, Global):
        return np.full(z.shape[0], d.t_star)
    if isinstance(d, PerClass):
        return np.asarray(d.t_star)[np.argmax(z, axis=1)]
    return softplus(d.w_star * _log_norm_entropy_scaled(z, np.ones(z.shape[0])) + d.b_star)


def write_task(split, oracle, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_logits(split.validation, out / "val.csv")
    write_logits(split.test, out / "test.csv")
    kvfile.write(out / "oracle.kv", oracle.as_items())
    return out
