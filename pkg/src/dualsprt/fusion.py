"""Fusion center: physical-layer MAC combining and the fusion SPRT."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dualsprt.stats import GaussianSpec


class Decision(enum.Enum):
    PENDING = "pending"
    H1 = "H1"
    H0 = "H0"


@dataclass(frozen=True)
class FusionConfig:
    """Fusion SPRT thresholds and design densities ``g_i = N(mu_i, var(Z))``."""

    beta1: float
    beta0: float
    mu1: float = 1.0
    mu0: float = -1.0
    mac_noise: GaussianSpec = GaussianSpec(0.0, 1.0)

    def __post_init__(self):
        if not self.beta0 < 0 < self.beta1:
            raise ValueError(f"need beta0 < 0 < beta1, got {self.beta0}, {self.beta1}")
        if not self.mu0 < self.mu1:
            raise ValueError(f"need mu0 < mu1, got {self.mu0}, {self.mu1}")
        if self.mac_noise.mean != 0:
            raise ValueError("MAC noise must be zero mean")

    @classmethod
    def symmetric(cls, beta: float, mu: float = 1.0, noise_variance: float = 1.0):
        return cls(beta, -beta, mu, -mu, GaussianSpec(0.0, noise_variance))

    @property
    def is_symmetric(self) -> bool:
        return self.beta1 == -self.beta0 and self.mu1 == -self.mu0

    @property
    def llr_slope(self) -> float:
        return (self.mu1 - self.mu0) / self.mac_noise.variance

    @property
    def llr_offset(self) -> float:
        return -(self.mu1 - self.mu0) * (self.mu1 + self.mu0) / (2 * self.mac_noise.variance)


@dataclass(frozen=True)
class FusionState:
    f: float = 0.0
    k: int = 0
    decision: Decision = Decision.PENDING


def mac_combine(transmissions: Sequence[float], noise_draw: float) -> float:
    """Received MAC sample: superposition of node transmissions plus receiver noise."""
    return float(np.sum(transmissions)) + noise_draw


def fusion_llr(y, cfg: FusionConfig):
    """``log g1(y)/g0(y) = (mu1-mu0)(2y - mu1 - mu0) / (2 var)``."""
    out = cfg.llr_slope * np.asarray(y, dtype=float) + cfg.llr_offset
    return float(out) if out.ndim == 0 else out


def fusion_step(state: FusionState, y: float, cfg: FusionConfig) -> FusionState:
    if state.decision is not Decision.PENDING:
        raise RuntimeError(f"fusion already decided {state.decision.value} at slot {state.k}")
    f = state.f + fusion_llr(y, cfg)
    k = state.k + 1
    if f >= cfg.beta1:
        return FusionState(f, k, Decision.H1)
    if f <= cfg.beta0:
        return FusionState(f, k, Decision.H0)
    return FusionState(f, k, Decision.PENDING)
