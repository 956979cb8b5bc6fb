"""Observation model at the secondary nodes.

Observations are modelled at the statistic level: the primary signal's
contribution ``h_l S_k`` is folded into the post-change mean of each node's
statistic. Three received-power models are supported:

``equal``
    every node sees the same mean shift;
``fixed_gains``
    per-node path gains in dB, mean shift scaled by ``10**(gain_db/20)``;
``fading``
    slow Rayleigh fading, received power exponential, drawn once per trial.

Two statistic families are supported: ``direct`` Gaussian observations
``N(P_l, noise_variance)`` and the centred ``energy`` detector statistic
(sum of ``N`` squared samples minus the noise power).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from dualsprt.stats import ExponentialSpec, GaussianSpec, Hypothesis, RandomSource, db_to_amplitude

SNR_MODELS = ("equal", "fixed_gains", "fading")
OBSERVATIONS = ("direct", "energy")
KNOWLEDGE = ("known", "unknown")


@dataclass(frozen=True)
class ScenarioSpec:
    hypothesis: Hypothesis
    n_nodes: int
    snr_model: str = "equal"
    mean_shift: float = 1.0
    gains_db: tuple[float, ...] = ()
    fading: ExponentialSpec | None = None
    observation: str = "direct"
    noise_variance: float = 1.0
    samples_per_stat: int | None = None
    knowledge: str = "known"

    def __post_init__(self):
        object.__setattr__(self, "hypothesis", Hypothesis.parse(self.hypothesis))
        object.__setattr__(self, "gains_db", tuple(float(g) for g in self.gains_db))
        if self.n_nodes < 1:
            raise ValueError("need at least one node")
        if self.snr_model not in SNR_MODELS:
            raise ValueError(f"snr_model must be one of {SNR_MODELS}, got {self.snr_model!r}")
        if self.observation not in OBSERVATIONS:
            raise ValueError(f"observation must be one of {OBSERVATIONS}, got {self.observation!r}")
        if self.knowledge not in KNOWLEDGE:
            raise ValueError(f"knowledge must be one of {KNOWLEDGE}, got {self.knowledge!r}")
        if self.snr_model == "fixed_gains" and len(self.gains_db) != self.n_nodes:
            raise ValueError(
                f"fixed_gains needs {self.n_nodes} gains, got {len(self.gains_db)}"
            )
        if self.snr_model == "fading" and self.fading is None:
            raise ValueError("fading model needs an ExponentialSpec")
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be positive")
        if self.observation == "energy" and (self.samples_per_stat is None or self.samples_per_stat < 1):
            raise ValueError("energy observation needs samples_per_stat >= 1")

    def with_hypothesis(self, hypothesis) -> "ScenarioSpec":
        from dataclasses import replace

        return replace(self, hypothesis=Hypothesis.parse(hypothesis))

    def fixed_powers(self) -> np.ndarray:
        """Per-node received power for the non-random SNR models."""
        if self.snr_model == "equal":
            return np.full(self.n_nodes, float(self.mean_shift))
        if self.snr_model == "fixed_gains":
            return self.mean_shift * db_to_amplitude(self.gains_db)
        raise ValueError("received power is random under fading")

    def power_range(self) -> tuple[float, float]:
        p = self.fixed_powers()
        return float(p.min()), float(p.max())


@dataclass(frozen=True)
class NodeObservationParams:
    f0: GaussianSpec
    f1: GaussianSpec
    received_power: float = field(default=0.0)

    def __post_init__(self):
        if self.received_power < 0:
            raise ValueError("received power must be nonnegative")


class EnergyStatistic(NamedTuple):
    f0: GaussianSpec
    f1: GaussianSpec
    low_snr_ok: bool


def energy_statistic_params(
    P: float, sigma2: float, N: int, tolerance: float = 0.25
) -> EnergyStatistic:
    """Gaussian approximation of an ``N``-sample energy statistic.

    ``low_snr_ok`` is true when the post-change variance exceeds the
    pre-change one by at most ``tolerance`` (relative), i.e. when treating
    both hypotheses as equal-variance is reasonable.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    if N < 1:
        raise ValueError("N must be >= 1")
    f0 = GaussianSpec(sigma2, 2 * sigma2**2 / N)
    f1 = GaussianSpec(P + sigma2, 2 * (P + sigma2) ** 2 / N)
    ratio = (P + sigma2) ** 2 / sigma2**2
    return EnergyStatistic(f0, f1, bool(ratio - 1.0 <= tolerance))


def observation_arrays(spec: ScenarioSpec, powers):
    """``(m0, v0, m1, v1)`` of the centred node statistic, broadcast over ``powers``."""
    p = np.asarray(powers, dtype=float)
    if spec.observation == "direct":
        v = np.full_like(p, spec.noise_variance)
        return np.zeros_like(p), v, p, v.copy()
    s2, n = spec.noise_variance, spec.samples_per_stat
    v0 = np.full_like(p, 2 * s2**2 / n)
    v1 = 2 * (p + s2) ** 2 / n
    return np.zeros_like(p), v0, (p + s2) - s2, v1


def observation_params(spec: ScenarioSpec, power: float) -> NodeObservationParams:
    """Pre/post-change laws of the (centred) node statistic for a given power."""
    m0, v0, m1, v1 = (float(t) for t in observation_arrays(spec, power))
    f0, f1 = GaussianSpec(m0, v0), GaussianSpec(m1, v1)
    return NodeObservationParams(f0, f1, float(power))


def detector_noise_variance(spec: ScenarioSpec) -> float:
    """Equal-variance model used by GLR nodes (low-SNR reduction for energy data)."""
    if spec.observation == "direct":
        return spec.noise_variance
    return 2 * spec.noise_variance**2 / spec.samples_per_stat


def draw_powers(spec: ScenarioSpec, rng: np.random.Generator, n_trials: int) -> np.ndarray:
    """Received powers, shape ``(n_trials, n_nodes)``; consumes draws only under fading."""
    if spec.snr_model == "fading":
        return rng.exponential(spec.fading.mean, size=(n_trials, spec.n_nodes))
    return np.broadcast_to(spec.fixed_powers(), (n_trials, spec.n_nodes)).copy()


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RandomSource):
        return rng.generator()
    return rng


def draw_channel_gains(spec: ScenarioSpec, rng) -> list[NodeObservationParams]:
    """Per-node observation laws for one trial (fading powers held for the whole trial)."""
    powers = draw_powers(spec, _as_generator(rng), 1)[0]
    return [observation_params(spec, p) for p in powers]


def generate_observation(params: NodeObservationParams, hypothesis, rng) -> float:
    dist = params.f1 if Hypothesis.parse(hypothesis) is Hypothesis.H1 else params.f0
    return float(dist.mean + dist.sd * _as_generator(rng).standard_normal())
