"""Numerically stable kernels shared by the rest of the package.

Every function accepts a single logit vector of shape ``(K,)`` or a batch of
shape ``(N, K)``; reductions run over the last axis. All arithmetic is float64.
"""

import numpy as np

from .errors import InvalidInputError

#: Lower clamp for the normalized entropy so that its logarithm stays finite.
ENT_MIN = 1e-12

_SOFTPLUS_LINEAR_ABOVE = 30.0


def _as_logits(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim not in (1, 2):
        raise InvalidInputError(f"expected a (K,) or (N, K) array, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite")
    return z


def logsumexp(z):
    z = _as_logits(z)
    m = z.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True)))[..., 0]


def log_softmax(z):
    z = _as_logits(z)
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z):
    z = _as_logits(z)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def normalized_entropy(z):
    """Shannon entropy of ``softmax(z)`` divided by ``ln K``.

    The result is clamped to ``[ENT_MIN, 1]``; one-hot-like predictions
    would otherwise produce an entropy of exactly zero.
    """
    z = _as_logits(z)
    k = z.shape[-1]
    if k < 2:
        raise InvalidInputError("normalized entropy needs at least two classes")
    lq = log_softmax(z)
    h = -(np.exp(lq) * lq).sum(axis=-1) / np.log(k)
    return np.clip(h, ENT_MIN, 1.0)


def log_normalized_entropy(z):
    return np.log(normalized_entropy(z))


def softplus(a):
    """``ln(1 + e^a)`` without overflow; strictly positive for finite input."""
    a = np.asarray(a, dtype=np.float64)
    out = np.where(
        a > _SOFTPLUS_LINEAR_ABOVE,
        a + np.log1p(np.exp(-np.abs(a))),
        np.log1p(np.exp(np.minimum(a, _SOFTPLUS_LINEAR_ABOVE))),
    )
    return out if out.ndim else float(out)


def sigmoid(a):
    """Derivative of :func:`softplus`."""
    a = np.asarray(a, dtype=np.float64)
    e = np.exp(-np.abs(a))
    out = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def softplus_inverse(t):
    """Return ``a`` with ``softplus(a) == t``; ``t`` must be positive."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(~(t > 0)) or np.any(~np.isfinite(t)):
        raise InvalidInputError("softplus_inverse needs finite t > 0")
    # ln(e^t - 1) = t + ln(1 - e^-t)
    out = t + np.log(-np.expm1(-t))
    return out if out.ndim else float(out)
