"""Analytical approximations of detection delay and false-alarm probability.

The local SPRT first-passage time is approximated by a Gaussian (CLT), the
fusion statistic by a random walk whose drift steps up each time another
node latches, and the false-alarm probability by the contribution of the
interval before the first local latch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate, special
from scipy.stats import norm

from dualsprt.channel import ScenarioSpec, observation_params
from dualsprt.fusion import FusionConfig
from dualsprt.stats import Hypothesis, llr_drift_and_variance


class AnalysisScopeError(ValueError):
    """Configuration outside what the analytical model covers."""


class NoPositiveDriftError(AnalysisScopeError):
    """No number of latched nodes gives the fusion walk a drift toward the truth."""


@dataclass(frozen=True)
class FirstPassageSpec:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("first-passage variance must be positive")

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def cdf(self, t):
        return norm.cdf(t, self.mean, self.sd)

    def sf(self, t):
        return norm.sf(t, self.mean, self.sd)

    def pdf(self, t):
        return norm.pdf(t, self.mean, self.sd)


@dataclass(frozen=True)
class DriftProfile:
    deltas: tuple[float, ...]
    order_stat_means: tuple[float, ...]
    fbar: tuple[float, ...]


@dataclass(frozen=True)
class EddPrediction:
    j_star: int
    predicted_edd: float
    method: str = "iid"
    alternative_edd: float | None = None
    profile: DriftProfile | None = None

    @property
    def disagreement(self) -> float:
        """Relative gap between the printed heterogeneous formula and the mean-path variant."""
        if self.alternative_edd is None:
            return 0.0
        return abs(self.predicted_edd - self.alternative_edd) / abs(self.alternative_edd)

    @property
    def flagged(self) -> bool:
        return self.disagreement > 0.10


@dataclass(frozen=True)
class PfaBound:
    lower: float
    upper: float
    terms_used: int

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.upper <= 1.0:
            raise ValueError(f"invalid bound pair {self.lower}, {self.upper}")


def tau_gamma_distribution(gamma: float, delta: float, sigma2: float) -> FirstPassageSpec:
    """Gaussian approximation ``N(gamma/delta, sigma2*gamma/delta**3)`` of the passage time."""
    if not delta > 0:
        raise AnalysisScopeError("first-passage approximation needs positive drift")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return FirstPassageSpec(gamma / delta, sigma2 * gamma / delta**3)


def wald_threshold(target_error: float) -> float:
    """Symmetric SPRT threshold ``log((1-p)/p)`` for per-hypothesis error ``p``."""
    if not 0 < target_error < 1:
        raise ValueError("target_error must lie in (0, 1)")
    return math.log((1 - target_error) / target_error)


def fusion_drift(j: int, b1: float, cfg: FusionConfig, under: Hypothesis | str = Hypothesis.H1) -> float:
    """Mean fusion LLR increment with ``j`` nodes transmitting ``b1``.

    Under H0 pass the H0 level (``b0``) as ``b1``; the result is then negative.
    """
    if j < 0:
        raise ValueError("j must be nonnegative")
    return cfg.llr_slope * (j * b1) + cfg.llr_offset


@lru_cache(maxsize=64)
def _std_order_stat_means(L: int) -> tuple[float, ...]:
    out = []
    for i in range(1, L + 1):
        logc = special.gammaln(L + 1) - special.gammaln(i) - special.gammaln(L - i + 1)

        def integrand(z, i=i, logc=logc):
            return z * math.exp(
                logc + (i - 1) * special.log_ndtr(z) + (L - i) * special.log_ndtr(-z)
            ) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

        val, _ = integrate.quad(integrand, -12, 12, epsabs=1e-13, epsrel=1e-12, limit=200)
        out.append(val)
    return tuple(out)


def order_stat_means_iid(L: int, fp: FirstPassageSpec) -> list[float]:
    """``E[t_i]``, i = 1..L, for the order statistics of L iid ``fp`` passage times."""
    if L < 1:
        raise ValueError("L must be >= 1")
    return [fp.mean + fp.sd * e for e in _std_order_stat_means(L)]


def _count_pmf(p: np.ndarray) -> np.ndarray:
    """Poisson-binomial pmf of the number of successes, rows over x."""
    p = np.atleast_2d(p)
    pmf = np.zeros((p.shape[0], p.shape[1] + 1))
    pmf[:, 0] = 1.0
    for l in range(p.shape[1]):
        q = p[:, l : l + 1]
        pmf[:, 1:] = pmf[:, 1:] * (1 - q) + pmf[:, :-1] * q
        pmf[:, 0] *= 1 - q[:, 0]
    return pmf


def order_stat_sf(fps: Sequence[FirstPassageSpec], i: int, x) -> np.ndarray:
    """``P(t_(i) > x)``: fewer than ``i`` of the independent passage times are ``<= x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = np.stack([fp.cdf(x) for fp in fps], axis=1)
    return _count_pmf(p)[:, :i].sum(axis=1)


def order_stat_mean_heterogeneous(fps: Sequence[FirstPassageSpec], i: int) -> float:
    """``E[t_(i)]`` for independent, non-identical Gaussian passage times."""
    if not 1 <= i <= len(fps):
        raise ValueError(f"order index {i} out of range 1..{len(fps)}")
    lo = min(fp.mean - 12 * fp.sd for fp in fps)
    hi = max(fp.mean + 12 * fp.sd for fp in fps)
    pts = sorted({fp.mean for fp in fps})

    def sf(x):
        return float(order_stat_sf(fps, i, x)[0])

    val, _ = integrate.quad(sf, lo, hi, points=pts, epsabs=1e-11, epsrel=1e-11, limit=400)
    return lo + val


def first_latch_sf(fps: Sequence[FirstPassageSpec], k) -> np.ndarray:
    """``1 - Phi_{t1}(k)`` for the earliest of the independent passage times."""
    k = np.asarray(k, dtype=float)
    out = np.ones_like(k)
    for fp in fps:
        out = out * fp.sf(k)
    return out


def _require_symmetric(local, fusion: FusionConfig) -> None:
    if not (local.is_symmetric and fusion.is_symmetric):
        raise AnalysisScopeError(
            "analysis covers symmetric settings only (gamma1=-gamma0, beta1=-beta0, mu1=-mu0, b1=-b0)"
        )


def node_passage_specs(scenario: ScenarioSpec, local) -> list[FirstPassageSpec]:
    """CLT passage-time law of each node toward the boundary of the true hypothesis."""
    if scenario.snr_model == "fading":
        raise AnalysisScopeError("analysis needs fixed received powers")
    h = scenario.hypothesis
    gamma = local.gamma1 if h is Hypothesis.H1 else -local.gamma0
    out = []
    for p in scenario.fixed_powers():
        prm = observation_params(scenario, p)
        d, s2 = llr_drift_and_variance(prm.f0, prm.f1, h)
        out.append(tau_gamma_distribution(gamma, abs(d), s2))
    return out


def _fusion_drifts(scenario: ScenarioSpec, local, fusion: FusionConfig) -> list[float]:
    """Drifts toward the correct fusion boundary, j = 0..L (sign-normalised)."""
    h = scenario.hypothesis
    level = local.b1 if h is Hypothesis.H1 else local.b0
    sign = 1.0 if h is Hypothesis.H1 else -1.0
    return [sign * fusion_drift(j, level, fusion, h) for j in range(scenario.n_nodes + 1)]


def drift_profile(scenario: ScenarioSpec, local, fusion: FusionConfig) -> DriftProfile:
    deltas = _fusion_drifts(scenario, local, fusion)
    fps = node_passage_specs(scenario, local)
    if all(fp == fps[0] for fp in fps):
        et = [0.0] + order_stat_means_iid(len(fps), fps[0])
    else:
        et = [0.0] + [order_stat_mean_heterogeneous(fps, i) for i in range(1, len(fps) + 1)]
    fbar = [0.0]
    for j in range(1, len(et)):
        fbar.append(fbar[-1] + deltas[j - 1] * (et[j] - et[j - 1]))
    return DriftProfile(tuple(deltas), tuple(et), tuple(fbar))


def predict_edd_iid(scenario: ScenarioSpec, local, fusion: FusionConfig) -> EddPrediction:
    """Drift-change approximation ``E[t_j] + (beta - Fbar_j) / delta_j``.

    ``j`` is the first index with positive drift whose remaining distance is
    covered before the next node is expected to latch.
    """
    _require_symmetric(local, fusion)
    prof = drift_profile(scenario, local, fusion)
    beta = fusion.beta1 if scenario.hypothesis is Hypothesis.H1 else -fusion.beta0
    et, d, fb = prof.order_stat_means, prof.deltas, prof.fbar
    L = scenario.n_nodes
    chosen = None
    for i in range(1, L + 1):
        if d[i] <= 0:
            continue
        gap = et[i + 1] - et[i] if i < L else math.inf
        if (beta - fb[i]) / d[i] < gap:
            chosen = i
            break
    if chosen is None:
        raise NoPositiveDriftError("no latch count gives the fusion walk positive drift")
    return EddPrediction(chosen, et[chosen] + (beta - fb[chosen]) / d[chosen], "iid", profile=prof)


def predict_edd_heterogeneous(scenario: ScenarioSpec, local, fusion: FusionConfig) -> EddPrediction:
    """Heterogeneous-SNR delay: ``E[t_i*] + (beta - corr) / delta_i*``.

    ``i*`` is the smallest latch count with positive fusion drift. The
    correction is ``(E[t_i*] - E[t_{i*-1}]) / delta_{i*-1}`` as printed; the
    mean-path form ``delta_{i*-1} (E[t_i*] - E[t_{i*-1}])`` is returned as
    ``alternative_edd``. With ``i* = 1`` the walk has not moved on average
    before the first latch and both reduce to ``E[t_1] + beta/delta_1``.
    """
    _require_symmetric(local, fusion)
    prof = drift_profile(scenario, local, fusion)
    beta = fusion.beta1 if scenario.hypothesis is Hypothesis.H1 else -fusion.beta0
    et, d = prof.order_stat_means, prof.deltas
    positive = [i for i in range(1, scenario.n_nodes + 1) if d[i] > 0]
    if not positive:
        raise NoPositiveDriftError("no latch count gives the fusion walk positive drift")
    i = positive[0]
    if i == 1 or d[i - 1] == 0:
        edd = et[i] + beta / d[i]
        return EddPrediction(i, edd, "heterogeneous", edd, prof)
    step = et[i] - et[i - 1]
    printed = et[i] + (beta - step / d[i - 1]) / d[i]
    mean_path = et[i] + (beta - d[i - 1] * step) / d[i]
    return EddPrediction(i, printed, "heterogeneous", mean_path, prof)


def _pre_latch_terms(beta: float, step_var: float, sf_t1, max_terms: int, eps: float,
                     drift: float = 0.0, start_var: float = 0.0):
    """Per-slot lower/upper false-alarm terms of a Gaussian walk started near 0.

    ``G_m`` (m >= 1) has mean ``m*drift`` and variance ``start_var + m*step_var``;
    the boundary sits at ``-beta`` and the opposite one at ``+beta``.
    """
    s = math.sqrt(step_var)
    lower = upper = 0.0
    used = 0
    for m in range(1, max_terms + 1):
        surv = float(sf_t1(m))
        if m > 1 and surv < eps:
            break
        used = m
        prev_var = start_var + (m - 1) * step_var
        prev_mean = (m - 1) * drift
        if prev_var == 0:
            joint = norm.cdf((-beta - drift - prev_mean) / s)
            refl, plain = 1.0, 1.0
        else:
            psd = math.sqrt(prev_var)

            def integrand(c):
                return norm.cdf((-c - drift) / s) * norm.pdf(-beta + c, prev_mean, psd)

            joint, _ = integrate.quad(integrand, 0.0, 2 * beta, epsabs=1e-14, epsrel=1e-6, limit=200)
            below = norm.cdf(-beta, prev_mean, psd)
            refl = max(0.0, 1.0 - 2.0 * below)
            plain = 1.0 - below
        lower += joint * refl * surv
        upper += joint * plain * surv
    return lower, upper, used


def spacing_sf(fps: Sequence[FirstPassageSpec], m: float) -> float:
    """``P(t_2 - t_1 > m)`` for independent passage times."""
    lo = min(fp.mean - 12 * fp.sd for fp in fps)
    hi = max(fp.mean + 12 * fp.sd for fp in fps)

    def integrand(x):
        tot = 0.0
        for l, fp in enumerate(fps):
            rest = 1.0
            for j, other in enumerate(fps):
                if j != l:
                    rest *= float(other.sf(x + m))
            tot += float(fp.pdf(x)) * rest
        return tot

    val, _ = integrate.quad(integrand, lo, hi, points=sorted({fp.mean for fp in fps}), limit=200)
    return min(1.0, max(0.0, val))


def pfa_bounds(
    scenario: ScenarioSpec,
    local,
    fusion: FusionConfig,
    truncation_eps: float = 1e-6,
    second_term: bool = False,
    max_terms: int = 100_000,
) -> PfaBound:
    """Lower/upper approximations of P(false alarm before the first local latch).

    Before any node latches the MAC carries only receiver noise, so the fusion
    LLR is a driftless Gaussian walk with step variance ``(mu1-mu0)^2/var``.
    Slot ``k`` contributes ``P[S_k < -c]`` integrated against the density of
    ``F_{k-1}`` on ``(-beta, beta)``, times ``P(t_1 > k)``, times a survival
    factor: ``1 - 2 P[F_{k-1} < -beta]`` (reflection) for the lower value and
    ``P[F_{k-1} > -beta]`` for the upper one. With ``second_term`` the same
    construction is added for the stretch between the first and second
    latches, using drift ``delta_1`` and the law of ``t_2 - t_1``.
    """
    _require_symmetric(local, fusion)
    if not 0 < truncation_eps < 1:
        raise ValueError("truncation_eps must lie in (0, 1)")
    fps = node_passage_specs(scenario, local)
    beta = fusion.beta1
    step_var = fusion.llr_slope**2 * fusion.mac_noise.variance
    lower, upper, terms = _pre_latch_terms(
        beta, step_var, lambda k: first_latch_sf(fps, k), max_terms, truncation_eps
    )
    if second_term and len(fps) > 1:
        d1 = _fusion_drifts(scenario, local, fusion)[1]
        t1_mean = order_stat_mean_heterogeneous(fps, 1)
        lo2, up2, m2 = _pre_latch_terms(
            beta, step_var, lambda m: spacing_sf(fps, m), max_terms, truncation_eps,
            drift=d1, start_var=max(t1_mean, 0.0) * step_var,
        )
        lower, upper, terms = lower + lo2, upper + up2, terms + m2
    lower = min(lower, 1.0)
    return PfaBound(lower, max(lower, min(upper, 1.0)), terms)
