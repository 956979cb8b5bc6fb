"""Cooperative distributed sequential spectrum sensing (DualSPRT and GLR-SPRT)."""

from dualsprt.stats import (
    ExponentialSpec,
    GaussianSpec,
    Hypothesis,
    RandomSource,
    gaussian_llr,
    kl_balance_point,
    kl_number,
    llr_drift_and_variance,
)

__version__ = "0.1.0"

__all__ = [
    "ExponentialSpec",
    "GaussianSpec",
    "Hypothesis",
    "RandomSource",
    "gaussian_llr",
    "kl_balance_point",
    "kl_number",
    "llr_drift_and_variance",
]
