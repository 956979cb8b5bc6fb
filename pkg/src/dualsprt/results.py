"""Long-format result rows and their CSV / human-readable renderings."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from dualsprt.montecarlo import Estimate

CSV_HEADER = ("scenario_id", "hypothesis", "metric", "source", "value", "ci_low", "ci_high")
NA = "NA"


def _cell(x: float | None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return NA
    return repr(float(x))


def _parse_cell(s: str) -> float | None:
    return None if s == NA else float(s)


@dataclass(frozen=True)
class ResultRow:
    scenario_id: str
    hypothesis: str
    metric: str
    source: str
    value: float | None
    ci_low: float | None = None
    ci_high: float | None = None

    @classmethod
    def from_estimate(cls, scenario_id, hypothesis, metric, source, est: Estimate) -> "ResultRow":
        lo, hi = est.ci95
        return cls(scenario_id, hypothesis, metric, source, est.mean, lo, hi)


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)

    def add(self, row: ResultRow) -> None:
        self.rows.append(row)

    def extend(self, other: "ResultTable") -> None:
        self.rows.extend(other.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.scenario_id, r.hypothesis, r.metric, r.source,
                        _cell(r.value), _cell(r.ci_low), _cell(r.ci_high)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        rows = [ResultRow(a, b, c, d, _parse_cell(e), _parse_cell(f), _parse_cell(g))
                for a, b, c, d, e, f, g in reader]
        return cls(rows)

    def lookup(self, **match) -> list[ResultRow]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]

    def format(self) -> str:
        """Fixed-width rendering of the same rows."""
        cols = [("scenario", 22), ("hyp", 4), ("metric", 16), ("source", 22), ("value", 12),
                ("95% CI", 26)]
        lines = [" ".join(name.ljust(w) for name, w in cols)]
        for r in self.rows:
            val = NA if r.value is None else f"{r.value:.6g}"
            ci = "" if r.ci_low is None else f"[{r.ci_low:.5g}, {r.ci_high:.5g}]"
            cells = [r.scenario_id, r.hypothesis, r.metric, r.source, val, ci]
            lines.append(" ".join(str(c).ljust(w) for c, (_, w) in zip(cells, cols)))
        return "\n".join(lines)
