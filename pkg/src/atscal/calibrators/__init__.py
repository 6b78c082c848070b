"""Accuracy-preserving calibration maps: TS, LTS, HTS, HnLTS, PTS, BTS and ETS."""

from ..optim import FitConfig
from .core import (
    BTS,
    ETS,
    HTS,
    LTS,
    METHODS,
    PTS,
    T_MIN,
    TS,
    Calibrator,
    HnLTS,
    SoftplusTemperature,
    apply,
    calibrate,
    from_items,
    identity,
    load_params,
    save_params,
    temperature,
    to_items,
)
from .fitting import fit, fit_temperature, optimal_temperature_per_group
from .losses import Objective, lece_gradient, nll_gradient

__all__ = [
    "BTS", "ETS", "HTS", "LTS", "METHODS", "PTS", "T_MIN", "TS", "Calibrator", "FitConfig",
    "HnLTS", "Objective", "SoftplusTemperature", "apply", "calibrate", "fit", "fit_temperature",
    "from_items", "identity", "lece_gradient", "load_params", "nll_gradient",
    "optimal_temperature_per_group", "save_params", "temperature", "to_items",
]
