"""Secondary-node sequential detectors.

Two detectors feed the multiple access channel with the same transmit
alphabet ``{b0, 0, b1}``:

* :func:`sprt_step` - Wald SPRT on a known Gaussian pair (DualSPRT nodes).
* :func:`glr_step` - Lai's sequential GLR test with a time-varying boundary,
  used when the received power is unknown (GLR-SPRT nodes).

Both latch their decision at the first boundary crossing and keep
transmitting the corresponding level in every later slot.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from dualsprt.stats import ExponentialSpec, GaussianSpec, gaussian_llr, kl_balance_point


class Latch(enum.Enum):
    NONE = "none"
    H1 = "H1"
    H0 = "H0"


@dataclass(frozen=True)
class SprtNodeConfig:
    gamma1: float
    gamma0: float
    f0: GaussianSpec
    f1: GaussianSpec
    b1: float = 1.0
    b0: float = -1.0

    def __post_init__(self):
        if not self.gamma0 < 0 < self.gamma1:
            raise ValueError(f"need gamma0 < 0 < gamma1, got {self.gamma0}, {self.gamma1}")
        if self.b1 == self.b0:
            raise ValueError("b1 and b0 must differ")

    @classmethod
    def symmetric(cls, gamma: float, f0: GaussianSpec, f1: GaussianSpec, b: float = 1.0):
        return cls(gamma1=gamma, gamma0=-gamma, f0=f0, f1=f1, b1=b, b0=-b)


@dataclass(frozen=True)
class SprtNodeState:
    w: float = 0.0
    latch: Latch = Latch.NONE


def _latched_level(latch: Latch, b1: float, b0: float) -> float:
    if latch is Latch.H1:
        return b1
    if latch is Latch.H0:
        return b0
    return 0.0


def sprt_step(state: SprtNodeState, x: float, cfg: SprtNodeConfig) -> tuple[SprtNodeState, float]:
    """Advance one node SPRT by one observation; returns ``(state, transmit)``."""
    if not math.isfinite(x):
        raise ValueError("observation must be finite")
    if state.latch is not Latch.NONE:
        return state, _latched_level(state.latch, cfg.b1, cfg.b0)
    w = state.w + gaussian_llr(x, cfg.f0, cfg.f1)
    if w >= cfg.gamma1:
        return SprtNodeState(w, Latch.H1), cfg.b1
    if w <= cfg.gamma0:
        return SprtNodeState(w, Latch.H0), cfg.b0
    return SprtNodeState(w, Latch.NONE), 0.0


def lai_boundary(t):
    """Leading-order form of Lai's boundary: ``log(1/t)`` on (0, 1), 0 beyond."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(t < 1.0, -np.log(np.minimum(t, 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GlrNodeConfig:
    """Lai's GLR node for ``H0: theta = theta0`` against ``H1: theta >= theta1``.

    ``theta_star`` defaults to the KL balance point of ``theta0`` and
    ``theta1``; ``threshold_fn`` maps ``n*c`` to the stopping boundary.
    """

    theta0: float
    theta1: float
    noise_variance: float
    cost: float
    clip_lo: float
    clip_hi: float
    theta_star: float | None = None
    threshold_fn: Callable = field(default=lai_boundary, compare=False)
    b1: float = 1.0
    b0: float = -1.0

    def __post_init__(self):
        if self.theta_star is None:
            object.__setattr__(
                self, "theta_star", kl_balance_point(self.theta0, self.theta1, self.noise_variance)
            )
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be positive")
        if not self.cost > 0:
            raise ValueError("cost must be positive")
        if not self.clip_lo <= self.theta0 < self.theta_star < self.theta1 <= self.clip_hi:
            raise ValueError(
                "need clip_lo <= theta0 < theta_star < theta1 <= clip_hi, got "
                f"{self.clip_lo}, {self.theta0}, {self.theta_star}, {self.theta1}, {self.clip_hi}"
            )
        if self.b1 == self.b0:
            raise ValueError("b1 and b0 must differ")


@dataclass(frozen=True)
class GlrNodeState:
    n: int = 0
    s: float = 0.0
    latch: Latch = Latch.NONE

    @property
    def theta_hat(self) -> float:
        return self.s / self.n if self.n else float("nan")


def clipped_estimate(n, s, lo: float, hi: float):
    return np.clip(np.asarray(s, dtype=float) / n, lo, hi)


def glr_statistic(n, s, cfg: GlrNodeConfig):
    """GLR statistic ``W_n`` from the slot count and running sum.

    Uses the general form ``sum log f_th(x)/f_ref(x) = (th-ref)/v * s - n (th^2-ref^2)/(2v)``,
    which reduces to ``n (th-ref)^2 / 2v`` whenever the clipped estimate is interior.
    Vectorises over array-valued ``n``/``s``.
    """
    if np.any(np.asarray(n) < 1):
        raise ValueError("glr_statistic needs n >= 1")
    th = clipped_estimate(n, s, cfg.clip_lo, cfg.clip_hi)
    v = cfg.noise_variance
    s = np.asarray(s, dtype=float)

    def log_ratio(ref):
        return (th - ref) / v * s - n * (th * th - ref * ref) / (2 * v)

    out = np.maximum(log_ratio(cfg.theta0), log_ratio(cfg.theta1))
    return float(out) if out.ndim == 0 else out


def glr_step(state: GlrNodeState, x: float, cfg: GlrNodeConfig) -> tuple[GlrNodeState, float]:
    if state.latch is not Latch.NONE:
        return state, _latched_level(state.latch, cfg.b1, cfg.b0)
    if not math.isfinite(x):
        raise ValueError("observation must be finite")
    n, s = state.n + 1, state.s + x
    if glr_statistic(n, s, cfg) >= cfg.threshold_fn(n * cfg.cost):
        theta_hat = float(clipped_estimate(n, s, cfg.clip_lo, cfg.clip_hi))
        # ties go to H1: missing an active primary is the costlier error
        latch = Latch.H1 if theta_hat >= cfg.theta_star else Latch.H0
        return replace(state, n=n, s=s, latch=latch), _latched_level(latch, cfg.b1, cfg.b0)
    return replace(state, n=n, s=s), 0.0


def choose_theta1_known_range(p_low: float, p_high: float) -> float:
    """Alternative-hypothesis level for a received power known to lie in [p_low, p_high].

    Returns ``(p_high - p_low) / 2``; this is the half-width of the range,
    not its midpoint. Pass an explicit ``theta1`` to the node config to override.
    """
    if not 0 <= p_low < p_high:
        raise ValueError(f"need 0 <= p_low < p_high, got {p_low}, {p_high}")
    return (p_high - p_low) / 2.0


def choose_theta1_fading(power_dist: ExponentialSpec) -> float:
    """Median received power under Rayleigh fading, so that P(theta >= theta1) = 1/2."""
    return power_dist.median
