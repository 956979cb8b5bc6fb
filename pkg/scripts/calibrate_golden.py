"""Re-run fusion-threshold calibration for the shipped scenario files.

Usage: python3 scripts/calibrate_golden.py [name ...]

Each file gets a [calibration] section (one beta per hypothesis and target).
Single-target files also have their [fusion] beta set to the calibrated value,
so ``dualsprt simulate`` reproduces the calibrated operating point directly.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import replace
from pathlib import Path

from dualsprt.fusion import FusionConfig
from dualsprt.montecarlo import calibrate_threshold
from dualsprt.scenario_file import dump_scenario, load_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "dualsprt" / "scenarios"


def calibrate_file(path: Path) -> None:
    header = [ln for ln in path.read_text().splitlines() if ln.startswith("#")]
    doc = load_scenario(path)
    found = dict(doc.calibrated)
    for h in doc.hypotheses:
        for t in doc.targets:
            t0 = time.time()
            beta = calibrate_threshold(doc.experiment(h), t, doc.beta_search)
            found[(h, t)] = beta
            print(f"{doc.id} {h.name} target={t} beta={beta:.6g} ({time.time() - t0:.0f}s)", flush=True)
    doc = replace(doc, calibrated=found)
    if len(doc.targets) == 1 and len(doc.hypotheses) == 1:
        beta = found[(doc.hypotheses[0], doc.targets[0])]
        f = doc.fusion
        doc = replace(doc, fusion=FusionConfig(beta, -beta, f.mu1, f.mu0, f.mac_noise))
    path.write_text("\n".join(header + [dump_scenario(doc)]))


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("names", nargs="*", help="scenario stems (default: all)")
    args = p.parse_args()
    paths = [SCENARIOS / f"{n}.ini" for n in args.names] or sorted(SCENARIOS.glob("*.ini"))
    for path in paths:
        calibrate_file(path)


if __name__ == "__main__":
    main()
