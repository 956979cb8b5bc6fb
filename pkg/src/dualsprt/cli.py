"""Command-line front end: ``dualsprt {simulate,analyze,compare,calibrate}``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from dualsprt.analysis import (
    AnalysisScopeError,
    pfa_bounds,
    predict_edd_heterogeneous,
    predict_edd_iid,
)
from dualsprt.montecarlo import CalibrationError, calibrate_threshold, estimate_performance
from dualsprt.results import ResultRow, ResultTable
from dualsprt.scenario_file import ScenarioFile, ScenarioFileError, dump_scenario, load_scenario
from dualsprt.stats import Hypothesis

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 2, 3
CENSOR_LIMIT = 1e-3


class CommandFailure(RuntimeError):
    """Run finished but violated a contract (censoring, calibration)."""


def _experiment(doc: ScenarioFile, h: Hypothesis, args, beta=None):
    return doc.experiment(h, trials=args.trials, seed=args.seed, slot_cap=args.slot_cap, beta=beta)


def cmd_simulate(doc: ScenarioFile, args) -> ResultTable:
    table = ResultTable()
    worst = 0.0
    for h in doc.hypotheses:
        perf = estimate_performance(_experiment(doc, h, args), workers=args.workers)
        table.add(ResultRow.from_estimate(doc.id, h.name, "pfa", "sim", perf.pfa))
        table.add(ResultRow.from_estimate(doc.id, h.name, "edd", "sim", perf.edd))
        table.add(ResultRow(doc.id, h.name, "censored", "sim", float(perf.censored)))
        worst = max(worst, perf.censored / perf.n_trials)
    if worst > CENSOR_LIMIT:
        raise CommandFailure(f"censoring rate {worst:.4g} exceeds {CENSOR_LIMIT}", table)
    return table


def cmd_analyze(doc: ScenarioFile, args) -> ResultTable:
    table = ResultTable()
    for h in doc.hypotheses:
        if doc.detector == "glrsprt":
            for metric in ("edd", "pfa_lower", "pfa_upper"):
                table.add(ResultRow(doc.id, h.name, metric, "anal:not-available", None))
            continue
        sc = doc.scenario.with_hypothesis(h)
        hetero = sc.snr_model == "fixed_gains" and len(set(sc.fixed_powers())) > 1
        if hetero:
            pred = predict_edd_heterogeneous(sc, doc.local, doc.fusion)
            table.add(ResultRow(doc.id, h.name, "edd", "anal:heterogeneous", pred.predicted_edd))
            table.add(ResultRow(doc.id, h.name, "edd_mean_path", "anal:heterogeneous",
                                pred.alternative_edd))
        else:
            pred = predict_edd_iid(sc, doc.local, doc.fusion)
            table.add(ResultRow(doc.id, h.name, "edd", "anal:iid", pred.predicted_edd))
        bound = pfa_bounds(sc, doc.local, doc.fusion, truncation_eps=args.eps)
        table.add(ResultRow(doc.id, h.name, "pfa_lower", "anal:pre-t1", bound.lower))
        table.add(ResultRow(doc.id, h.name, "pfa_upper", "anal:pre-t1", bound.upper))
    return table


def _beta_for(doc: ScenarioFile, h: Hypothesis, target: float, args) -> float:
    if (h, target) in doc.calibrated and not args.recalibrate:
        return doc.calibrated[(h, target)]
    if doc.beta_search is None:
        raise CalibrationError(
            f"{doc.id}: no calibrated beta for {h.name} at {target} and no beta_search range")
    return calibrate_threshold(_experiment(doc, h, args), target, doc.beta_search)


def cmd_calibrate(doc: ScenarioFile, args) -> tuple[ResultTable, ScenarioFile]:
    targets = tuple(args.targets) if args.targets else doc.targets
    if not targets:
        raise ScenarioFileError("no P_FA targets given (use --targets or [experiment] targets)")
    if doc.beta_search is None:
        raise ScenarioFileError("calibration needs beta_search_min/beta_search_max in [experiment]")
    table = ResultTable()
    found = dict(doc.calibrated)
    for t in targets:
        for h in doc.hypotheses:
            exp = _experiment(doc, h, args)
            beta = calibrate_threshold(exp, t, doc.beta_search)
            found[(h, t)] = beta
            table.add(ResultRow(doc.id, h.name, f"beta@pfa={t!r}", "calibrated", beta))
    return table, replace(doc, calibrated=found)


def cmd_compare(doc_a: ScenarioFile, doc_b: ScenarioFile, args) -> ResultTable:
    targets = tuple(args.targets) if args.targets else doc_a.targets
    if not targets:
        raise ScenarioFileError("no P_FA targets given (use --targets or [experiment] targets)")
    table = ResultTable()
    sid = f"{doc_a.id}|{doc_b.id}"
    for h in doc_a.hypotheses:
        for t in targets:
            for tag, doc in (("A", doc_a), ("B", doc_b)):
                beta = _beta_for(doc, h, t, args)
                perf = estimate_performance(_experiment(doc, h, args, beta), workers=args.workers)
                src = f"{tag}:{doc.detector}"
                table.add(ResultRow.from_estimate(sid, h.name, f"edd@pfa={t!r}", src, perf.edd))
                table.add(ResultRow.from_estimate(sid, h.name, f"pfa@pfa={t!r}", src, perf.pfa))
    return table


def _emit(table: ResultTable, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(table.to_csv())
    else:
        Path(out).write_text(table.to_csv())
        print(table.format())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dualsprt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sim=True):
        sp.add_argument("--out", default="-", help="CSV destination (path or - for stdout)")
        if sim:
            sp.add_argument("--trials", type=int, default=None)
            sp.add_argument("--seed", type=int, default=None)
            sp.add_argument("--slot-cap", type=int, default=None, dest="slot_cap")
            sp.add_argument("--workers", type=int, default=None,
                            help="worker processes (results do not depend on it)")

    sp = sub.add_parser("simulate", help="Monte Carlo P_FA and E_DD")
    sp.add_argument("file")
    common(sp)

    sp = sub.add_parser("analyze", help="analytical E_DD and P_FA approximations")
    sp.add_argument("file")
    sp.add_argument("--eps", type=float, default=1e-6, help="series truncation tail mass")
    common(sp, sim=False)

    sp = sub.add_parser("compare", help="two detectors at matched calibrated P_FA")
    sp.add_argument("file_a")
    sp.add_argument("file_b")
    sp.add_argument("--targets", type=float, nargs="+")
    sp.add_argument("--recalibrate", action="store_true",
                    help="ignore [calibration] entries and search beta again")
    common(sp)

    sp = sub.add_parser("calibrate", help="fusion threshold for target P_FA levels")
    sp.add_argument("file")
    sp.add_argument("--targets", type=float, nargs="+")
    sp.add_argument("--write", default=None, help="write the scenario with a [calibration] section")
    common(sp)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            _emit(cmd_simulate(load_scenario(args.file), args), args.out)
        elif args.command == "analyze":
            _emit(cmd_analyze(load_scenario(args.file), args), args.out)
        elif args.command == "compare":
            _emit(cmd_compare(load_scenario(args.file_a), load_scenario(args.file_b), args), args.out)
        else:
            table, doc = cmd_calibrate(load_scenario(args.file), args)
            _emit(table, args.out)
            if args.write:
                Path(args.write).write_text(dump_scenario(doc))
    except (ScenarioFileError, AnalysisScopeError, OSError) as exc:
        print(f"dualsprt: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandFailure as exc:
        message, table = exc.args
        _emit(table, args.out)
        print(f"dualsprt: failure: {message}", file=sys.stderr)
        return EXIT_FAILURE
    except CalibrationError as exc:
        print(f"dualsprt: calibration failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        # argument values the engine rejects (e.g. --trials 5)
        print(f"dualsprt: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
