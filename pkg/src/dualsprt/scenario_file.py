"""Sectioned ``key = value`` scenario files.

Four sections are recognised: ``[scenario]``, ``[local]``, ``[fusion]`` and
``[experiment]``, plus an optional ``[calibration]`` section holding fusion
thresholds found by ``dualsprt calibrate`` (keys ``beta_h1_pfa_<target>``).
Unknown sections and keys are errors reported with their line number.
Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from dualsprt.channel import ScenarioSpec
from dualsprt.fusion import FusionConfig
from dualsprt.montecarlo import ExperimentSpec, GlrLocalParams, SprtLocalParams
from dualsprt.stats import ExponentialSpec, GaussianSpec, Hypothesis


class ScenarioFileError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<scenario>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


_SCENARIO_KEYS = {
    "id", "hypothesis", "nodes", "snr_model", "mean_shift", "gains_db",
    "fading_mean_power", "observation", "noise_variance", "samples_per_stat", "knowledge",
}
_LOCAL_KEYS = {
    "detector", "gamma_upper", "gamma_lower", "b_upper", "b_lower",
    "cost", "theta1_power", "clip_hi_power",
}
_FUSION_KEYS = {"beta_upper", "beta_lower", "mu_upper", "mu_lower", "mac_noise_variance"}
_EXPERIMENT_KEYS = {"trials", "seed", "slot_cap", "targets", "beta_search_min", "beta_search_max"}
_SECTIONS = {
    "scenario": _SCENARIO_KEYS,
    "local": _LOCAL_KEYS,
    "fusion": _FUSION_KEYS,
    "experiment": _EXPERIMENT_KEYS,
    "calibration": None,
}
_CAL_KEY = re.compile(r"^beta_(h0|h1)_pfa_([0-9.eE+-]+)$")
_SUFFIX_HINT = {
    "gamma": "gamma_upper/gamma_lower", "beta": "beta_upper/beta_lower",
    "mu": "mu_upper/mu_lower", "b": "b_upper/b_lower", "gain": "gains_db",
    "gains": "gains_db", "variance": "noise_variance or mac_noise_variance",
}


@dataclass
class ScenarioFile:
    """In-memory form of a scenario file."""

    id: str
    hypotheses: tuple[Hypothesis, ...]
    scenario: ScenarioSpec
    local: SprtLocalParams | GlrLocalParams
    fusion: FusionConfig
    trials: int = 10_000
    seed: int = 0
    slot_cap: int = 10_000
    targets: tuple[float, ...] = ()
    beta_search: tuple[float, float] | None = None
    calibrated: dict[tuple[Hypothesis, float], float] = field(default_factory=dict)

    @property
    def detector(self) -> str:
        return "dualsprt" if isinstance(self.local, SprtLocalParams) else "glrsprt"

    def experiment(self, hypothesis=None, *, trials=None, seed=None, slot_cap=None,
                   beta=None) -> ExperimentSpec:
        h = Hypothesis.parse(hypothesis) if hypothesis is not None else self.hypotheses[0]
        spec = ExperimentSpec(
            scenario=self.scenario.with_hypothesis(h),
            fusion=self.fusion,
            local=self.local,
            n_trials=trials if trials is not None else self.trials,
            master_seed=seed if seed is not None else self.seed,
            slot_cap=slot_cap if slot_cap is not None else self.slot_cap,
        )
        return spec.with_beta(beta) if beta is not None else spec


def _split_list(v: str) -> list[str]:
    return [t.strip() for t in v.split(",") if t.strip()]


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioFile:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioFileError(f"malformed section header {line!r}", lineno, source)
            current = line[1:-1].strip().lower()
            if current not in _SECTIONS:
                raise ScenarioFileError(f"unknown section [{current}]", lineno, source)
            if current in sections:
                raise ScenarioFileError(f"duplicate section [{current}]", lineno, source)
            sections[current] = {}
            continue
        if "=" not in line:
            raise ScenarioFileError(f"expected 'key = value', got {line!r}", lineno, source)
        if current is None:
            raise ScenarioFileError("key outside any section", lineno, source)
        key, value = (t.strip() for t in line.split("=", 1))
        allowed = _SECTIONS[current]
        if allowed is None:
            if not _CAL_KEY.match(key):
                raise ScenarioFileError(
                    f"unknown calibration key {key!r} (expected beta_h0_pfa_<p> or beta_h1_pfa_<p>)",
                    lineno, source)
        elif key not in allowed:
            hint = _SUFFIX_HINT.get(key)
            extra = f"; did you mean {hint}?" if hint else ""
            raise ScenarioFileError(f"unknown key {key!r} in [{current}]{extra}", lineno, source)
        if key in sections[current]:
            raise ScenarioFileError(f"duplicate key {key!r}", lineno, source)
        sections[current][key] = (value, lineno)

    for required in ("scenario", "local", "fusion"):
        if required not in sections:
            raise ScenarioFileError(f"missing section [{required}]", None, source)

    def getter(sec):
        data = sections.get(sec, {})

        def get(key, conv=str, default=...):
            if key not in data:
                if default is ...:
                    raise ScenarioFileError(f"missing key {key!r} in [{sec}]", None, source)
                return default
            value, lineno = data[key]
            try:
                return conv(value)
            except (ValueError, KeyError) as exc:
                raise ScenarioFileError(f"bad value for {key!r}: {exc}", lineno, source) from None

        def line_of(key):
            return data.get(key, (None, None))[1]

        return get, line_of

    def floats(v):
        return tuple(float(t) for t in _split_list(v))

    def hyps(v):
        if v.strip().lower() == "both":
            return (Hypothesis.H1, Hypothesis.H0)
        return tuple(Hypothesis.parse(t) for t in _split_list(v))

    get, line_of = getter("scenario")
    sid = get("id")
    hypotheses = get("hypothesis", hyps)
    if not hypotheses:
        raise ScenarioFileError("hypothesis list is empty", line_of("hypothesis"), source)
    snr_model = get("snr_model", str, "equal")
    try:
        fading_mean = get("fading_mean_power", float, None)
        scenario = ScenarioSpec(
            hypothesis=hypotheses[0],
            n_nodes=get("nodes", int),
            snr_model=snr_model,
            mean_shift=get("mean_shift", float, 1.0),
            gains_db=get("gains_db", floats, ()),
            fading=ExponentialSpec(1.0 / fading_mean) if fading_mean is not None else None,
            observation=get("observation", str, "direct"),
            noise_variance=get("noise_variance", float, 1.0),
            samples_per_stat=get("samples_per_stat", int, None),
            knowledge=get("knowledge", str, "known"),
        )
    except ScenarioFileError:
        raise
    except ValueError as exc:
        raise ScenarioFileError(f"[scenario] {exc}", None, source) from None

    get, line_of = getter("local")
    detector = get("detector")
    try:
        if detector == "dualsprt":
            local = SprtLocalParams(
                get("gamma_upper", float), get("gamma_lower", float),
                get("b_upper", float, 1.0), get("b_lower", float, -1.0),
            )
        elif detector == "glrsprt":
            local = GlrLocalParams(
                cost=get("cost", float),
                theta1=get("theta1_power", float, None),
                clip_hi=get("clip_hi_power", float, None),
                b1=get("b_upper", float, 1.0),
                b0=get("b_lower", float, -1.0),
            )
        else:
            raise ScenarioFileError(
                f"detector must be dualsprt or glrsprt, got {detector!r}", line_of("detector"), source)
    except ScenarioFileError:
        raise
    except ValueError as exc:
        raise ScenarioFileError(f"[local] {exc}", None, source) from None
    extra = {"dualsprt": {"cost", "theta1_power", "clip_hi_power"},
             "glrsprt": {"gamma_upper", "gamma_lower"}}[detector]
    for key in sorted(extra & sections["local"].keys()):
        raise ScenarioFileError(f"key {key!r} does not apply to {detector}", line_of(key), source)

    get, _ = getter("fusion")
    try:
        fusion = FusionConfig(
            get("beta_upper", float), get("beta_lower", float),
            get("mu_upper", float, 1.0), get("mu_lower", float, -1.0),
            GaussianSpec(0.0, get("mac_noise_variance", float, 1.0)),
        )
    except ScenarioFileError:
        raise
    except ValueError as exc:
        raise ScenarioFileError(f"[fusion] {exc}", None, source) from None

    get, _ = getter("experiment")
    lo, hi = get("beta_search_min", float, None), get("beta_search_max", float, None)
    if (lo is None) != (hi is None):
        raise ScenarioFileError("beta_search_min and beta_search_max go together", None, source)

    calibrated = {}
    for key, (value, lineno) in sections.get("calibration", {}).items():
        m = _CAL_KEY.match(key)
        try:
            calibrated[(Hypothesis.parse(m.group(1)), float(m.group(2)))] = float(value)
        except ValueError as exc:
            raise ScenarioFileError(f"bad calibration entry: {exc}", lineno, source) from None

    doc = ScenarioFile(
        id=sid,
        hypotheses=hypotheses,
        scenario=scenario,
        local=local,
        fusion=fusion,
        trials=get("trials", int, 10_000),
        seed=get("seed", int, 0),
        slot_cap=get("slot_cap", int, 10_000),
        targets=get("targets", floats, ()),
        beta_search=(lo, hi) if lo is not None else None,
        calibrated=calibrated,
    )
    try:
        doc.experiment()
    except ValueError as exc:
        raise ScenarioFileError(str(exc), None, source) from None
    return doc


def load_scenario(path: str | Path) -> ScenarioFile:
    path = Path(path)
    return parse_scenario(path.read_text(), str(path))


def dump_scenario(doc: ScenarioFile) -> str:
    """Canonical text form; ``parse_scenario(dump_scenario(d)) == d``."""
    sc = doc.scenario
    out = ["[scenario]", f"id = {doc.id}",
           "hypothesis = " + ", ".join(h.name for h in doc.hypotheses),
           f"nodes = {sc.n_nodes}", f"snr_model = {sc.snr_model}",
           f"mean_shift = {_fmt(sc.mean_shift)}"]
    if sc.gains_db:
        out.append("gains_db = " + ", ".join(_fmt(g) for g in sc.gains_db))
    if sc.fading is not None:
        out.append(f"fading_mean_power = {_fmt(sc.fading.mean)}")
    out += [f"observation = {sc.observation}", f"noise_variance = {_fmt(sc.noise_variance)}"]
    if sc.samples_per_stat is not None:
        out.append(f"samples_per_stat = {sc.samples_per_stat}")
    out += [f"knowledge = {sc.knowledge}", "", "[local]", f"detector = {doc.detector}"]
    loc = doc.local
    if isinstance(loc, SprtLocalParams):
        out += [f"gamma_upper = {_fmt(loc.gamma1)}", f"gamma_lower = {_fmt(loc.gamma0)}"]
    else:
        out.append(f"cost = {_fmt(loc.cost)}")
        if loc.theta1 is not None:
            out.append(f"theta1_power = {_fmt(loc.theta1)}")
        if loc.clip_hi is not None:
            out.append(f"clip_hi_power = {_fmt(loc.clip_hi)}")
    out += [f"b_upper = {_fmt(loc.b1)}", f"b_lower = {_fmt(loc.b0)}"]
    f = doc.fusion
    out += ["", "[fusion]", f"beta_upper = {_fmt(f.beta1)}", f"beta_lower = {_fmt(f.beta0)}",
            f"mu_upper = {_fmt(f.mu1)}", f"mu_lower = {_fmt(f.mu0)}",
            f"mac_noise_variance = {_fmt(f.mac_noise.variance)}"]
    out += ["", "[experiment]", f"trials = {doc.trials}", f"seed = {doc.seed}",
            f"slot_cap = {doc.slot_cap}"]
    if doc.targets:
        out.append("targets = " + ", ".join(_fmt(t) for t in doc.targets))
    if doc.beta_search is not None:
        out += [f"beta_search_min = {_fmt(doc.beta_search[0])}",
                f"beta_search_max = {_fmt(doc.beta_search[1])}"]
    if doc.calibrated:
        out += ["", "[calibration]"]
        for (h, t), beta in sorted(doc.calibrated.items(), key=lambda kv: (kv[0][0].value, -kv[0][1])):
            out.append(f"beta_{h.name.lower()}_pfa_{_fmt(t)} = {_fmt(beta)}")
    return "\n".join(out) + "\n"
