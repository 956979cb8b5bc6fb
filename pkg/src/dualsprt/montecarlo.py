"""End-to-end trial execution, performance estimation and threshold calibration.

Randomness layout
-----------------
Trials are grouped in fixed blocks of :data:`BLOCK_SIZE`. Block ``j`` owns the
stream ``RandomSource(master_seed, (j,))`` and consumes it in a fixed order:
fading powers ``(BLOCK_SIZE, L)`` (fading scenarios only), then per chunk of
:data:`CHUNK_SLOTS` slots the node noise ``(BLOCK_SIZE, CHUNK_SLOTS, L)`` and the
MAC noise ``(BLOCK_SIZE, CHUNK_SLOTS)``. Chunks are always drawn for the full
block, so a trial's draws depend only on ``(master_seed, trial_index)`` and
never on how many trials run or in which process.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from dualsprt.channel import (
    ScenarioSpec,
    detector_noise_variance,
    draw_powers,
    observation_arrays,
    observation_params,
)
from dualsprt.fusion import Decision, FusionConfig, FusionState, fusion_step, mac_combine
from dualsprt.local import (
    GlrNodeConfig,
    GlrNodeState,
    Latch,
    SprtNodeConfig,
    SprtNodeState,
    choose_theta1_fading,
    choose_theta1_known_range,
    clipped_estimate,
    glr_statistic,
    glr_step,
    lai_boundary,
    sprt_step,
)
from dualsprt.stats import Hypothesis, RandomSource, llr_coefficient_arrays

BLOCK_SIZE = 1024
CHUNK_SLOTS = 32


class CalibrationError(RuntimeError):
    """Target false-alarm level cannot be bracketed by the threshold range."""


class MonotonicityError(CalibrationError):
    """Endpoint evaluation contradicts a decreasing P_FA(beta)."""


@dataclass(frozen=True)
class SprtLocalParams:
    gamma1: float
    gamma0: float
    b1: float = 1.0
    b0: float = -1.0

    @classmethod
    def symmetric(cls, gamma: float, b: float = 1.0) -> "SprtLocalParams":
        return cls(gamma, -gamma, b, -b)

    @property
    def is_symmetric(self) -> bool:
        return self.gamma1 == -self.gamma0 and self.b1 == -self.b0


@dataclass(frozen=True)
class GlrLocalParams:
    """GLR node settings; ``theta1``/``clip_hi`` default from the scenario.

    Defaults: ``theta1`` is the fading median, or the half-width of the
    known power range; ``clip_hi`` is 10x the mean fading power, or 10x the
    largest fixed power.
    """

    cost: float
    theta1: float | None = None
    clip_hi: float | None = None
    threshold_fn: Callable = field(default=lai_boundary, compare=False)
    b1: float = 1.0
    b0: float = -1.0

    def node_config(self, scenario: ScenarioSpec) -> GlrNodeConfig:
        if scenario.snr_model == "fading":
            theta1 = self.theta1 if self.theta1 is not None else choose_theta1_fading(scenario.fading)
            clip_hi = self.clip_hi if self.clip_hi is not None else 10.0 * scenario.fading.mean
        else:
            lo, hi = scenario.power_range()
            theta1 = self.theta1 if self.theta1 is not None else choose_theta1_known_range(lo, hi)
            clip_hi = self.clip_hi if self.clip_hi is not None else 10.0 * hi
        return GlrNodeConfig(
            theta0=0.0,
            theta1=theta1,
            noise_variance=detector_noise_variance(scenario),
            cost=self.cost,
            clip_lo=0.0,
            clip_hi=clip_hi,
            threshold_fn=self.threshold_fn,
            b1=self.b1,
            b0=self.b0,
        )


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioSpec
    fusion: FusionConfig
    local: SprtLocalParams | GlrLocalParams
    n_trials: int = 10_000
    master_seed: int = 0
    slot_cap: int = 10_000

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not 1 <= self.slot_cap < 10**9:
            raise ValueError("slot_cap must be a finite positive count")
        if self.detector == "dualsprt" and self.scenario.knowledge != "known":
            raise ValueError("DualSPRT nodes need the received power (knowledge = known)")

    @property
    def detector(self) -> str:
        return "dualsprt" if isinstance(self.local, SprtLocalParams) else "glrsprt"

    def with_beta(self, beta: float) -> "ExperimentSpec":
        f = self.fusion
        return replace(self, fusion=FusionConfig(beta, -beta, f.mu1, f.mu0, f.mac_noise))


@dataclass(frozen=True)
class TrialResult:
    decision: Hypothesis | None
    stop_slot: int
    per_node_latch_slots: tuple[int | None, ...]
    per_node_latch: tuple[Latch, ...]
    fusion_trace: tuple[float, ...] | None = None
    mac_trace: tuple[float, ...] | None = None

    @property
    def censored(self) -> bool:
        return self.decision is None

    @property
    def first_latch_slot(self) -> int | None:
        slots = [s for s in self.per_node_latch_slots if s is not None]
        return min(slots) if slots else None


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n_trials: int

    @property
    def ci95(self) -> tuple[float, float]:
        return self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr

    @classmethod
    def from_samples(cls, samples) -> "Estimate":
        x = np.asarray(samples, dtype=float)
        n = x.size
        if n == 0:
            return cls(float("nan"), float("nan"), 0)
        sd = float(x.std(ddof=1)) if n > 1 else 0.0
        return cls(float(x.mean()), sd / math.sqrt(n), n)


@dataclass
class BatchOutcome:
    """Per-trial arrays for a contiguous range of trials.

    ``decision`` is 1 (H1), 0 (H0) or -1 (censored); ``latch_slot`` is 0 for
    nodes that had not latched when the fusion center stopped.
    """

    decision: np.ndarray
    stop_slot: np.ndarray
    latch_slot: np.ndarray
    latch_level: np.ndarray
    powers: np.ndarray

    @classmethod
    def concat(cls, parts: Sequence["BatchOutcome"]) -> "BatchOutcome":
        return cls(*(np.concatenate([getattr(p, n) for p in parts]) for n in
                     ("decision", "stop_slot", "latch_slot", "latch_level", "powers")))

    def head(self, n: int) -> "BatchOutcome":
        return BatchOutcome(self.decision[:n], self.stop_slot[:n], self.latch_slot[:n],
                            self.latch_level[:n], self.powers[:n])

    @property
    def first_latch(self) -> np.ndarray:
        """Slot of the first local latch before the fusion decision (inf when none)."""
        ls = np.where(self.latch_slot > 0, self.latch_slot.astype(float), np.inf)
        return ls.min(axis=1)


@dataclass(frozen=True)
class Performance:
    pfa: Estimate
    edd: Estimate
    censored: int
    n_trials: int
    pfa_before_t1: Estimate
    outcome: BatchOutcome | None = field(default=None, repr=False, compare=False)

    @property
    def dominant_fraction(self) -> float:
        """Share of false alarms that happen before any node has latched."""
        if self.pfa.mean == 0:
            return float("nan")
        return self.pfa_before_t1.mean / self.pfa.mean


class _NodeModel:
    """Per-(trial, node) arrays for one block: observation law and LLR coefficients."""

    def __init__(self, spec: ExperimentSpec, powers: np.ndarray):
        m0, v0, m1, v1 = observation_arrays(spec.scenario, powers)
        h1 = spec.scenario.hypothesis is Hypothesis.H1
        self.mean = m1 if h1 else m0
        self.sd = np.sqrt(v1 if h1 else v0)
        self.coef = llr_coefficient_arrays(m0, v0, m1, v1)


def _block_rng(spec: ExperimentSpec, block: int) -> np.random.Generator:
    return RandomSource(spec.master_seed, (block,)).generator()


def _first_true(mask: np.ndarray, axis: int):
    """Index of the first True along ``axis`` and whether any exists."""
    return mask.argmax(axis=axis), mask.any(axis=axis)


def simulate_block(spec: ExperimentSpec, block: int) -> BatchOutcome:
    """Vectorised simulation of every trial in one block."""
    sc, fus = spec.scenario, spec.fusion
    B, L, K = BLOCK_SIZE, sc.n_nodes, CHUNK_SLOTS
    rng = _block_rng(spec, block)
    powers = draw_powers(sc, rng, B)
    model = _NodeModel(spec, powers)
    glr = spec.detector == "glrsprt"
    gcfg = spec.local.node_config(sc) if glr else None
    b1, b0 = spec.local.b1, spec.local.b0
    mac_sd = fus.mac_noise.sd

    acc = np.zeros((B, L))  # SPRT: W; GLR: running sum
    level = np.zeros((B, L))
    latch_slot = np.zeros((B, L), dtype=np.int64)
    latch_level = np.zeros((B, L))
    f = np.zeros(B)
    decision = np.full(B, -1, dtype=np.int8)
    stop_slot = np.full(B, spec.slot_cap, dtype=np.int64)
    alive = np.arange(B)
    k0 = 0
    while alive.size and k0 < spec.slot_cap:
        z = rng.standard_normal((B, K, L))
        zm = rng.standard_normal((B, K))
        kk = min(K, spec.slot_cap - k0)
        idx = alive
        x = model.mean[idx, None, :] + model.sd[idx, None, :] * z[idx, :kk]
        free = level[idx] == 0
        if glr:
            run = np.cumsum(np.concatenate([acc[idx, None, :], x], axis=1), axis=1)[:, 1:]
            n = (k0 + np.arange(1, kk + 1, dtype=float))[None, :, None]
            stat = glr_statistic(n, run, gcfg)
            thr = np.asarray(gcfg.threshold_fn(n * gcfg.cost))
            cross = (stat >= thr) & free[:, None, :]
            first, hit = _first_true(cross, 1)
            at = np.take_along_axis(run, first[:, None, :], 1)[:, 0, :]
            th = clipped_estimate(k0 + first + 1, at, gcfg.clip_lo, gcfg.clip_hi)
            new_level = np.where(th >= gcfg.theta_star, b1, b0)
        else:
            a, bb, c = (model.coef[i][idx, None, :] for i in range(3))
            llr = (a * x + bb) * x + c
            run = np.cumsum(np.concatenate([acc[idx, None, :], llr], axis=1), axis=1)[:, 1:]
            up = run >= spec.local.gamma1
            cross = (up | (run <= spec.local.gamma0)) & free[:, None, :]
            first, hit = _first_true(cross, 1)
            new_level = np.where(np.take_along_axis(up, first[:, None, :], 1)[:, 0, :], b1, b0)
        hit &= free
        onset = np.where(free, np.where(hit, first, kk), -1)
        lev = np.where(free, new_level, level[idx])
        kidx = np.arange(kk)[None, :, None]
        tx = np.where(kidx >= onset[:, None, :], lev[:, None, :], 0.0)
        y = tx.sum(axis=2) + mac_sd * zm[idx, :kk]
        fl = fus.llr_slope * y + fus.llr_offset
        F = np.cumsum(np.concatenate([f[idx, None], fl], axis=1), axis=1)[:, 1:]
        fup = F >= fus.beta1
        fstop, done = _first_true(fup | (F <= fus.beta0), 1)

        new_slot = np.where(free & hit, k0 + first + 1, 0)
        stop_here = np.where(done, k0 + fstop + 1, np.iinfo(np.int64).max)
        new_slot = np.where(new_slot <= stop_here[:, None], new_slot, 0)
        latch_slot[idx] = np.where(new_slot > 0, new_slot, latch_slot[idx])
        latch_level[idx] = np.where(new_slot > 0, lev, latch_level[idx])

        d = idx[done]
        decision[d] = np.take_along_axis(fup[done], fstop[done, None], 1)[:, 0].astype(np.int8)
        stop_slot[d] = stop_here[done]

        keep = ~done
        cont = idx[keep]
        level[cont] = np.where(hit[keep] | ~free[keep], lev[keep], 0.0)
        acc[cont] = run[keep, -1, :]
        f[cont] = F[keep, -1]
        alive = cont
        k0 += K
    return BatchOutcome(decision, stop_slot, latch_slot, latch_level, powers)


def _block_range(n_trials: int) -> range:
    return range(-(-n_trials // BLOCK_SIZE))


def simulate(spec: ExperimentSpec, workers: int | None = None) -> BatchOutcome:
    """All trials of ``spec`` in trial-index order; ``workers > 1`` uses processes."""
    blocks = _block_range(spec.n_trials)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(simulate_block, [spec] * len(blocks), blocks))
    else:
        parts = [simulate_block(spec, b) for b in blocks]
    return BatchOutcome.concat(parts).head(spec.n_trials)


def summarize(outcome: BatchOutcome, hypothesis: Hypothesis) -> Performance:
    decided = outcome.decision >= 0
    wrong = outcome.decision[decided] != hypothesis.value
    stops = outcome.stop_slot[decided]
    t1 = outcome.first_latch[decided]
    early = wrong & (t1 > stops)
    return Performance(
        pfa=Estimate.from_samples(wrong),
        edd=Estimate.from_samples(stops),
        censored=int((~decided).sum()),
        n_trials=int(outcome.decision.size),
        pfa_before_t1=Estimate.from_samples(early),
        outcome=outcome,
    )


def estimate_performance(spec: ExperimentSpec, workers: int | None = None) -> Performance:
    """P_FA (wrong decisions) and E_DD (mean stop slot over all decided trials)."""
    if spec.n_trials < 100:
        raise ValueError("estimate_performance needs n_trials >= 100")
    return summarize(simulate(spec, workers), spec.scenario.hypothesis)


def run_trial(spec: ExperimentSpec, trial_index: int, trace: bool = False) -> TrialResult:
    """One trial through the scalar step functions, on the trial's own draws.

    This is the reference path: it drives :func:`sprt_step`/:func:`glr_step`,
    :func:`mac_combine` and :func:`fusion_step` slot by slot and must agree
    with :func:`simulate_block`.
    """
    if trial_index < 0:
        raise ValueError("trial_index must be nonnegative")
    sc = spec.scenario
    block, row = divmod(trial_index, BLOCK_SIZE)
    rng = _block_rng(spec, block)
    powers = draw_powers(sc, rng, BLOCK_SIZE)[row]
    params = [observation_params(sc, p) for p in powers]
    h1 = sc.hypothesis is Hypothesis.H1
    true = [p.f1 if h1 else p.f0 for p in params]
    if spec.detector == "glrsprt":
        gcfg = spec.local.node_config(sc)
        cfgs = [gcfg] * sc.n_nodes
        states = [GlrNodeState() for _ in params]
        step = glr_step
    else:
        lp = spec.local
        cfgs = [SprtNodeConfig(lp.gamma1, lp.gamma0, p.f0, p.f1, lp.b1, lp.b0) for p in params]
        states = [SprtNodeState() for _ in params]
        step = sprt_step
    latch_slots: list[int | None] = [None] * sc.n_nodes
    fstate = FusionState()
    mac_sd = spec.fusion.mac_noise.sd
    ftrace, ytrace = [], []
    k = 0
    while k < spec.slot_cap:
        z = rng.standard_normal((BLOCK_SIZE, CHUNK_SLOTS, sc.n_nodes))[row]
        zm = rng.standard_normal((BLOCK_SIZE, CHUNK_SLOTS))[row]
        for j in range(min(CHUNK_SLOTS, spec.slot_cap - k)):
            k += 1
            tx = []
            for l in range(sc.n_nodes):
                x = true[l].mean + true[l].sd * z[j, l]
                was = states[l].latch
                states[l], t = step(states[l], float(x), cfgs[l])
                if was is Latch.NONE and states[l].latch is not Latch.NONE:
                    latch_slots[l] = k
                tx.append(t)
            y = mac_combine(tx, mac_sd * zm[j])
            fstate = fusion_step(fstate, y, spec.fusion)
            if trace:
                ftrace.append(fstate.f)
                ytrace.append(y)
            if fstate.decision is not Decision.PENDING:
                dec = Hypothesis.H1 if fstate.decision is Decision.H1 else Hypothesis.H0
                return TrialResult(
                    dec, k, tuple(latch_slots), tuple(s.latch for s in states),
                    tuple(ftrace) if trace else None, tuple(ytrace) if trace else None,
                )
    return TrialResult(
        None, spec.slot_cap, tuple(latch_slots), tuple(s.latch for s in states),
        tuple(ftrace) if trace else None, tuple(ytrace) if trace else None,
    )


def calibrate_threshold(
    spec: ExperimentSpec,
    target_pfa: float,
    beta_range: tuple[float, float],
    max_iter: int = 20,
    evaluate: Callable[[ExperimentSpec], Estimate] | None = None,
) -> float:
    """Bisect the symmetric fusion threshold ``beta`` to hit ``target_pfa``.

    Every evaluation reuses ``spec.master_seed`` (common random numbers). Stops
    once the estimate is within two standard errors of the target.
    """
    if not 0 < target_pfa < 1:
        raise ValueError("target_pfa must lie in (0, 1)")
    lo, hi = beta_range
    if not 0 < lo < hi:
        raise ValueError("beta_range must satisfy 0 < lo < hi")
    if evaluate is None:
        def evaluate(s: ExperimentSpec) -> Estimate:
            return estimate_performance(s).pfa

    e_lo, e_hi = evaluate(spec.with_beta(lo)), evaluate(spec.with_beta(hi))
    if e_lo.mean < e_hi.mean:
        raise MonotonicityError(
            f"P_FA increases over beta range: P({lo})={e_lo.mean:.4g} < P({hi})={e_hi.mean:.4g}"
        )
    if not e_hi.mean <= target_pfa <= e_lo.mean:
        raise CalibrationError(
            f"target {target_pfa} outside bracket [{e_hi.mean:.4g} (beta={hi}), "
            f"{e_lo.mean:.4g} (beta={lo})]"
        )
    best, best_gap = lo, abs(e_lo.mean - target_pfa)
    for e, b in ((e_hi, hi),):
        if abs(e.mean - target_pfa) < best_gap:
            best, best_gap = b, abs(e.mean - target_pfa)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        e = evaluate(spec.with_beta(mid))
        gap = abs(e.mean - target_pfa)
        if gap < best_gap:
            best, best_gap = mid, gap
        if gap < 2 * e.stderr:
            return mid
        if e.mean > target_pfa:
            lo = mid
        else:
            hi = mid
    return best


# Standalone random-walk helpers (single walk, no fusion). Their streams are
# (tag, block) so they never collide with the engine's (block,) streams.
_PASSAGE_TAG, _SPRT_TAG = 1, 2
_WALK_CHUNK = 64


def _walk_block(rng, draw, upper, lower, n, max_steps):
    """Run ``n`` walks with increments ``draw(rng, (n, k))`` until they leave (lower, upper).

    Returns ``(stop, side)``: stop step (1-based, -1 if censored) and side
    (1 upper, 0 lower, -1 censored).
    """
    stop = np.full(n, -1, dtype=np.int64)
    side = np.full(n, -1, dtype=np.int8)
    w = np.zeros(n)
    active = np.arange(n)
    done = 0
    while active.size and done < max_steps:
        k = min(_WALK_CHUNK, max_steps - done)
        inc = draw(rng, (n, k))[active]
        path = np.cumsum(np.concatenate([w[active, None], inc], axis=1), axis=1)[:, 1:]
        hit = (path >= upper) | (path <= lower)
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        rows = active[any_hit]
        at = first[any_hit]
        stop[rows] = done + at + 1
        side[rows] = (path[any_hit, at] >= upper).astype(np.int8)
        w[active] = path[:, -1]
        active = active[~any_hit]
        done += k
    return stop, side


def simulate_first_passage(
    gamma: float, delta: float, sigma2: float, n_trials: int, seed: int = 0, max_steps: int = 10**6
) -> np.ndarray:
    """First step at which a N(delta, sigma2) walk from 0 reaches ``gamma`` (-1 if censored)."""
    if not (gamma > 0 and delta > 0 and sigma2 > 0):
        raise ValueError("need gamma, delta, sigma2 > 0")
    sd = math.sqrt(sigma2)
    draw = lambda rng, shape: rng.normal(delta, sd, size=shape)  # noqa: E731
    out = []
    for b in _block_range(n_trials):
        rng = RandomSource(seed, (_PASSAGE_TAG, b)).generator()
        stop, _ = _walk_block(rng, draw, gamma, -np.inf, BLOCK_SIZE, max_steps)
        out.append(stop)
    return np.concatenate(out)[:n_trials]


def simulate_sprt_decisions(
    cfg: SprtNodeConfig,
    hypothesis: Hypothesis | str,
    n_trials: int,
    seed: int = 0,
    max_steps: int = 10**6,
) -> tuple[np.ndarray, np.ndarray]:
    """Stand-alone single-node SPRT runs; returns ``(decision, stop)``.

    ``decision`` is 1 (H1), 0 (H0) or -1 (censored at ``max_steps``).
    """
    h = Hypothesis.parse(hypothesis)
    src = cfg.f1 if h is Hypothesis.H1 else cfg.f0
    a, b, c = llr_coefficient_arrays(cfg.f0.mean, cfg.f0.variance, cfg.f1.mean, cfg.f1.variance)

    def draw(rng, shape):
        x = rng.normal(src.mean, src.sd, size=shape)
        return (a * x + b) * x + c

    decisions, stops = [], []
    for blk in _block_range(n_trials):
        rng = RandomSource(seed, (_SPRT_TAG, blk)).generator()
        stop, side = _walk_block(rng, draw, cfg.gamma1, cfg.gamma0, BLOCK_SIZE, max_steps)
        decisions.append(side)
        stops.append(stop)
    return np.concatenate(decisions)[:n_trials], np.concatenate(stops)[:n_trials]
