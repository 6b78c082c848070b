"""Optimizers: minibatch SGD with Nesterov momentum and a plateau schedule,
bounded Brent minimization for scalar problems, and a finite-difference
gradient checker.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import make_rng
from .errors import FitError, InvalidInputError

OBJECTIVES = ("nll", "lece")


@dataclass(frozen=True)
class FitConfig:
    """Optimizer hyperparameters for the gradient-trained calibrators.

    Nesterov momentum 0.9, batches of 1000 rows, and the learning rate divided
    by 10 on plateau over three decades. Calibrators are trained on
    standardized features, which lets the schedule start at 1e-2;
    :meth:`reference` gives the 1e-4 to 1e-7 schedule instead.
    """

    objective: str = "nll"
    lr0: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 1000
    plateau_factor: float = 10.0
    lr_floor: float = 1e-5
    plateau_patience: int = 10
    plateau_threshold: float = 1e-6
    seed: int = 0
    max_epochs: int = 100_000
    lece_bins: int = 50
    bts_bins: int = 50

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise InvalidInputError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if not self.lr0 > self.lr_floor > 0:
            raise InvalidInputError("need lr0 > lr_floor > 0")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if self.plateau_factor <= 1:
            raise InvalidInputError("plateau_factor must exceed 1")
        if self.plateau_patience < 1 or self.max_epochs < 1:
            raise InvalidInputError("plateau_patience and max_epochs must be >= 1")
        if self.lece_bins < 1 or self.bts_bins < 2:
            raise InvalidInputError("lece_bins must be >= 1 and bts_bins >= 2")

    @classmethod
    def reference(cls, **changes):
        return cls(**{"lr0": 1e-4, "lr_floor": 1e-7, **changes})

    def with_(self, **changes):
        return replace(self, **changes)

    def as_items(self, prefix="fit."):
        return {prefix + k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_items(cls, items, prefix="fit.", **overrides):
        kwargs = {}
        for name, f in cls.__dataclass_fields__.items():
            key = prefix + name
            if key in items:
                kind = type(f.default)
                raw = items[key]
                try:
                    kwargs[name] = kind(raw) if kind is not int else int(raw)
                except ValueError:
                    if kind is not int:
                        raise InvalidInputError(f"{key}: bad value {raw!r}") from None
                    kwargs[name] = int(float(raw))
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass
class SgdState:
    params: np.ndarray
    velocity: np.ndarray
    lr: float
    epochs_since_improvement: int = 0
    best_objective: float = math.inf


@dataclass
class SgdResult:
    params: np.ndarray
    objective: float
    epochs: int
    plateau_events: int
    history: list = field(default_factory=list)
    lr_history: list = field(default_factory=list)


def _check_finite(value, grad, epoch):
    if not math.isfinite(value):
        raise FitError("non-finite objective", epoch)
    if grad is not None and not np.all(np.isfinite(grad)):
        raise FitError("non-finite gradient", epoch)


def sgd_minimize(oracle, init, n_rows, cfg, return_result=False):
    """Minimize a finite-sum objective with minibatch Nesterov SGD.

    ``oracle(theta, rows)`` returns ``(value, gradient)`` of the objective
    averaged over ``rows``; ``rows=None`` means the full set of ``n_rows``.
    After every epoch the full objective is evaluated. When it has not
    improved on the scheduler's best by ``cfg.plateau_threshold`` for
    ``cfg.plateau_patience`` epochs, the learning rate is divided by
    ``cfg.plateau_factor``; training stops once it reaches ``cfg.lr_floor``.
    The best parameters seen (including ``init``) are returned. If the oracle
    has a ``value(theta)`` method it is used for the full-set evaluations.
    """
    full_value = getattr(oracle, "value", None) or (lambda th: oracle(th, None)[0])
    theta = np.array(init, dtype=np.float64)
    state = SgdState(params=theta, velocity=np.zeros_like(theta), lr=cfg.lr0)
    value = full_value(theta)
    _check_finite(value, None, 0)
    state.best_objective = value
    best_value, best_theta = value, theta.copy()
    history, lr_history = [value], [cfg.lr0]
    plateau_events = 0
    mu = cfg.momentum
    full_batch = cfg.batch_size >= n_rows
    floor = cfg.lr_floor * (1.0 + 1e-9)

    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        if full_batch:
            batches = (None,)
        else:
            order = make_rng([cfg.seed, epoch]).permutation(n_rows)
            batches = [order[i:i + cfg.batch_size] for i in range(0, n_rows, cfg.batch_size)]
        for rows in batches:
            _, grad = oracle(state.params + mu * state.velocity, rows)
            _check_finite(0.0, grad, epoch)
            state.velocity = mu * state.velocity - state.lr * grad
            state.params = state.params + state.velocity

        value = full_value(state.params)
        _check_finite(value, None, epoch)
        history.append(value)
        if value < best_value:
            best_value, best_theta = value, state.params.copy()
        if value < state.best_objective - cfg.plateau_threshold:
            state.best_objective = value
            state.epochs_since_improvement = 0
        else:
            state.epochs_since_improvement += 1
            if state.epochs_since_improvement >= cfg.plateau_patience:
                state.lr /= cfg.plateau_factor
                state.epochs_since_improvement = 0
                plateau_events += 1
                if state.lr <= floor:
                    lr_history.append(state.lr)
                    break
        lr_history.append(state.lr)

    if return_result:
        return SgdResult(best_theta, best_value, epoch, plateau_events, history, lr_history)
    return best_theta


_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))
_SQRT_EPS = math.sqrt(np.finfo(np.float64).eps)


def scalar_minimize(f, lo, hi, tol=1e-10, max_iter=200):
    """Bounded Brent minimization (golden section with parabolic steps).

    Converges to a local minimizer of ``f`` on ``[lo, hi]``. The stopping
    tolerance is ``tol`` plus ``sqrt(eps)*|x|``, the resolution limit of a
    smooth minimum. Endpoints are compared last, so a monotone ``f`` returns
    the lower-valued endpoint exactly.
    """
    if not lo < hi:
        raise InvalidInputError(f"need lo < hi, got [{lo}, {hi}]")

    def fx_checked(x):
        v = float(f(x))
        if not math.isfinite(v):
            raise FitError(f"non-finite objective at x={x!r}")
        return v

    a, b = float(lo), float(hi)
    x = w = v = a + _GOLDEN * (b - a)
    fx = fw = fv = fx_checked(x)
    d = e = 0.0
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        tol1 = _SQRT_EPS * abs(x) + tol / 3.0
        tol2 = 2.0 * tol1
        if abs(x - m) <= tol2 - 0.5 * (b - a):
            break
        golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0:
                p = -p
            q = abs(q)
            e_prev, e = e, d
            if abs(p) < abs(0.5 * q * e_prev) and q * (a - x) < p < q * (b - x):
                d = p / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = tol1 if x < m else -tol1
                golden = False
        if golden:
            e = (b - x) if x < m else (a - x)
            d = _GOLDEN * e
        u = x + (d if abs(d) >= tol1 else math.copysign(tol1, d))
        fu = fx_checked(u)
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            v, fv, w, fw, x, fx = w, fw, x, fx, u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv, w, fw = w, fw, u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu

    f_lo, f_hi = fx_checked(lo), fx_checked(hi)
    if f_lo < fx and f_lo <= f_hi:
        return float(lo)
    if f_hi < fx:
        return float(hi)
    return x


def grad_check(oracle, point, step=1e-5):
    """Maximum relative error between ``oracle``'s gradient and central differences.

    ``oracle(theta)`` returns ``(value, gradient)``. Per coordinate the error
    is ``|g - g_fd| / max(1e-8, |g| + |g_fd|)``.
    """
    if not step > 0:
        raise InvalidInputError("step must be positive")
    point = np.array(point, dtype=np.float64)
    _, grad = oracle(point)
    grad = np.asarray(grad, dtype=np.float64)
    fd = np.empty_like(point)
    for i in range(point.size):
        hi = point.copy()
        lo = point.copy()
        hi[i] += step
        lo[i] -= step
        fd[i] = (oracle(hi)[0] - oracle(lo)[0]) / (2.0 * step)
    err = np.abs(grad - fd) / np.maximum(1e-8, np.abs(grad) + np.abs(fd))
    return float(err.max()) if err.size else 0.0
