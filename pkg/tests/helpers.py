"""Shared builders for random calibrators and datasets."""

import numpy as np

from atscal.calibrators import BTS, ETS, HTS, LTS, PTS, TS, HnLTS
from atscal.dataset import LogitDataset

GRADIENT_FAMILY = ("ts", "lts", "hts", "hnlts", "pts")


def random_dataset(rng, n, k, scale=None):
    scale = rng.uniform(0.5, 4.0) if scale is None else scale
    return LogitDataset(rng.normal(size=(n, k)) * scale, rng.integers(0, k, n))


def random_params(method, k, rng):
    """A random, valid calibrator of ``method`` for ``k`` classes."""
    if method == "ts":
        return TS(rng.normal(), k)
    if method == "lts":
        return LTS(rng.normal(size=k) * 0.3, rng.normal())
    if method == "hts":
        return HTS(rng.normal(), rng.normal(), k)
    if method == "hnlts":
        return HnLTS(rng.normal(size=k) * 0.3, rng.normal(), rng.normal())
    if method in ("pts", "ptse"):
        theta = rng.normal(size=PTS.n_params(k)) * 0.5
        return PTS(theta, k, "lece" if method == "ptse" else "nll")
    if method == "bts":
        edges = np.sort(rng.uniform(0, 0.999, size=6))
        return BTS(np.append(edges, 0.999), rng.uniform(0.3, 3.0, size=8), k)
    if method == "ets":
        w = rng.dirichlet([1.0, 1.0, 1.0])
        return ETS(w, rng.uniform(0.5, 3.0), k)
    raise ValueError(method)


KINK_MARGIN = 1e-3
T_RANGE = (0.05, 20.0)


def gradient_instance(method, rng, k, batch):
    """Random parameters plus a value oracle for a finite-difference check.

    For PTS the draw is repeated until every rectifier pre-activation sits at
    least ``KINK_MARGIN`` from zero and every temperature lies in ``T_RANGE``;
    at a kink the NLL has no derivative and central differences straddle it.
    The PTS value is computed in extended precision by an independent forward
    pass so tiny gradient coordinates are not lost to rounding.
    """
    from atscal.calibrators import apply
    from atscal.metrics import nll

    from .oracles import mlp_temperature_nll

    if method != "pts":
        p = random_params(method, k, rng)
        return p, lambda theta: nll(apply(p.with_vector(theta), batch))
    while True:
        p = random_params(method, k, rng)
        _, (a1, a2, t) = mlp_temperature_nll(p.vector(), batch.logits, batch.labels)
        far = min(np.abs(a1).min(), np.abs(a2).min()) > KINK_MARGIN
        if far and T_RANGE[0] < t.min() and t.max() < T_RANGE[1]:
            return p, lambda theta: mlp_temperature_nll(theta, batch.logits, batch.labels)[0]
