"""Probability primitives shared by the detectors, the simulator and the analysis."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Hypothesis(enum.Enum):
    H0 = 0
    H1 = 1

    @classmethod
    def parse(cls, value: "Hypothesis | str | int") -> "Hypothesis":
        if isinstance(value, Hypothesis):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown hypothesis {value!r}") from None
        return cls(int(value))

    @property
    def other(self) -> "Hypothesis":
        return Hypothesis.H1 if self is Hypothesis.H0 else Hypothesis.H0


@dataclass(frozen=True)
class GaussianSpec:
    mean: float
    variance: float

    def __post_init__(self):
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise ValueError(f"variance must be positive and finite, got {self.variance}")
        if not math.isfinite(self.mean):
            raise ValueError(f"mean must be finite, got {self.mean}")

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def logpdf(self, x):
        return -0.5 * np.log(2 * np.pi * self.variance) - (x - self.mean) ** 2 / (2 * self.variance)


@dataclass(frozen=True)
class ExponentialSpec:
    rate: float

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be positive and finite, got {self.rate}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def median(self) -> float:
        return math.log(2.0) / self.rate


def llr_coefficients(f0: GaussianSpec, f1: GaussianSpec) -> tuple[float, float, float]:
    """Coefficients ``(a, b, c)`` with ``log f1(x) - log f0(x) = a*x**2 + b*x + c``.

    Expanding the quadratic keeps the ratio finite for arbitrarily large ``|x|``
    (no density quotient is ever formed).
    """
    a, b, c = llr_coefficient_arrays(f0.mean, f0.variance, f1.mean, f1.variance)
    return float(a), float(b), float(c)


def llr_coefficient_arrays(m0, v0, m1, v1):
    """Array form of :func:`llr_coefficients`, broadcasting over parameters."""
    m0, v0, m1, v1 = (np.asarray(t, dtype=float) for t in (m0, v0, m1, v1))
    a = 0.5 / v0 - 0.5 / v1
    b = m1 / v1 - m0 / v0
    c = m0 * m0 / (2 * v0) - m1 * m1 / (2 * v1) + 0.5 * np.log(v0 / v1)
    return a, b, c


def gaussian_llr(x, f0: GaussianSpec, f1: GaussianSpec):
    """Log-likelihood ratio ``log f1(x) / f0(x)`` in closed form.

    Accepts scalars or arrays; non-finite inputs raise ``ValueError``.
    """
    if not np.all(np.isfinite(x)):
        raise ValueError("observation must be finite")
    a, b, c = llr_coefficients(f0, f1)
    out = (a * x + b) * x + c
    return float(out) if np.ndim(out) == 0 else out


def llr_drift_and_variance(
    f0: GaussianSpec, f1: GaussianSpec, under: Hypothesis | str
) -> tuple[float, float]:
    """Mean and variance of one LLR increment when data follow ``f0`` or ``f1``.

    For ``L = a X^2 + b X + c`` with ``X ~ N(m, v)``::

        E[L]   = a (m^2 + v) + b m + c
        Var[L] = 2 a^2 v^2 + v (2 a m + b)^2
    """
    under = Hypothesis.parse(under)
    a, b, c = llr_coefficients(f0, f1)
    dist = f1 if under is Hypothesis.H1 else f0
    m, v = dist.mean, dist.variance
    mean = a * (m * m + v) + b * m + c
    var = 2 * a * a * v * v + v * (2 * a * m + b) ** 2
    return mean, var


def kl_number(theta: float, lam: float, variance: float) -> float:
    """Kullback-Leibler number I(theta, lam) for N(., variance) location family."""
    if not variance > 0:
        raise ValueError("variance must be positive")
    return (theta - lam) ** 2 / (2.0 * variance)


def kl_balance_point(theta0: float, theta1: float, variance: float) -> float:
    """Parameter equidistant in KL from ``theta0`` and ``theta1``.

    With a common variance the two KL numbers are quadratics with the same
    curvature, so the balance point is the midpoint.
    """
    if theta0 == theta1:
        raise ValueError("theta0 and theta1 must differ")
    if not variance > 0:
        raise ValueError("variance must be positive")
    return 0.5 * (theta0 + theta1)


def db_to_amplitude(gain_db):
    return 10.0 ** (np.asarray(gain_db, dtype=float) / 20.0)


def amplitude_to_db(amplitude):
    return 20.0 * np.log10(np.asarray(amplitude, dtype=float))


@dataclass(frozen=True)
class RandomSource:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    ``stream_id`` may be an int or a tuple of ints; the stream is derived via
    :class:`numpy.random.SeedSequence` spawn keys, so distinct ids give
    statistically independent streams and equal ids give identical draws.
    """

    seed: int
    stream_id: int | tuple[int, ...] = 0

    def generator(self) -> np.random.Generator:
        key = self.stream_id if isinstance(self.stream_id, tuple) else (self.stream_id,)
        ss = np.random.SeedSequence(self.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *key: int) -> "RandomSource":
        base = self.stream_id if isinstance(self.stream_id, tuple) else (self.stream_id,)
        return RandomSource(self.seed, base + tuple(key))
