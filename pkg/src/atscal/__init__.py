"""Post-hoc calibration of classifier logits with the adaptive temperature scaling family."""

__version__ = "0.1.0"
