"""Imbalance and best-bound gap metrics, run summaries and plot-data CSVs."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ledger import LedgerReport

IMBALANCE_THRESHOLD_PCT = 2.0
BOUND_THRESHOLD_PCT = 10.0


def imbalance_gap_pct(demand: float, supply: float) -> float:
    """``|demand - supply| / demand * 100``."""
    if demand <= 0:
        raise ValueError(f"imbalance gap undefined for demand {demand}")
    return abs(demand - supply) / demand * 100.0


def best_bound_gap_pct(actual_cost: float, best_bound: float) -> float:
    """``|actual - bound| / actual * 100``."""
    if actual_cost <= 0:
        raise ValueError(f"best-bound gap undefined for actual cost {actual_cost}")
    return abs(actual_cost - best_bound) / actual_cost * 100.0


@dataclass(frozen=True)
class HourlyEvaluation:
    hour: int
    demand: float
    supply: float
    actual_cost: float
    best_bound: float
    soc: float = 0.0
    solar_mwh: float = 0.0
    wind_mwh: float = 0.0
    conventional_mwh: float = 0.0
    battery_net_mwh: float = 0.0
    price: float = 0.0


@dataclass(frozen=True)
class RunSummary:
    hours: tuple[HourlyEvaluation, ...]
    imbalance_gaps: np.ndarray
    bound_gaps: np.ndarray
    mean_imbalance_gap: float
    max_imbalance_gap: float
    mean_bound_gap: float
    max_bound_gap: float
    frac_imbalance_within: float
    frac_bound_within: float
    excluded_hours: int

    def fraction_imbalance_within(self, threshold_pct: float) -> float:
        gaps = self.imbalance_gaps[~np.isnan(self.imbalance_gaps)]
        return float(np.mean(gaps <= threshold_pct)) if gaps.size else 0.0

    def fraction_bound_within(self, threshold_pct: float) -> float:
        gaps = self.bound_gaps[~np.isnan(self.bound_gaps)]
        return float(np.mean(gaps <= threshold_pct)) if gaps.size else 0.0


def safe_bound_gap_pct(actual: float, bound: float) -> float:
    """Best-bound gap that tolerates zero spend (0% against a zero bound, else 100%)."""
    if actual > 0:
        return best_bound_gap_pct(actual, bound)
    return 0.0 if bound <= 0 else 100.0


def summarize(
    run: Sequence[HourlyEvaluation],
    imbalance_threshold: float = IMBALANCE_THRESHOLD_PCT,
    bound_threshold: float = BOUND_THRESHOLD_PCT,
) -> RunSummary:
    """Per-hour gap series plus mean/max and within-threshold fractions.

    Thresholds are inclusive. Zero-demand hours get NaN gaps and are left out
    of the statistics with a warning. A zero actual cost scores a 0% bound gap
    when the bound is also zero and 100% otherwise.
    """
    if not run:
        raise ValueError("cannot summarize an empty run")
    imb = np.full(len(run), np.nan)
    bound = np.full(len(run), np.nan)
    excluded = 0
    for i, h in enumerate(run):
        if h.demand <= 0:
            excluded += 1
            continue
        imb[i] = imbalance_gap_pct(h.demand, h.supply)
        bound[i] = safe_bound_gap_pct(h.actual_cost, h.best_bound)
    if excluded:
        warnings.warn(f"{excluded} zero-demand hour(s) excluded from gap statistics", stacklevel=2)
    valid_imb = imb[~np.isnan(imb)]
    valid_bound = bound[~np.isnan(bound)]

    def stat(fn, arr):
        return float(fn(arr)) if arr.size else float("nan")

    return RunSummary(
        hours=tuple(run),
        imbalance_gaps=imb,
        bound_gaps=bound,
        mean_imbalance_gap=stat(np.mean, valid_imb),
        max_imbalance_gap=stat(np.max, valid_imb),
        mean_bound_gap=stat(np.mean, valid_bound),
        max_bound_gap=stat(np.max, valid_bound),
        frac_imbalance_within=float(np.mean(valid_imb <= imbalance_threshold)) if valid_imb.size else 0.0,
        frac_bound_within=float(np.mean(valid_bound <= bound_threshold)) if valid_bound.size else 0.0,
        excluded_hours=excluded,
    )


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def emit_reports(summary: RunSummary, ledger_report=None, out_dir: str | Path = ".") -> list[Path]:
    """Write plot-data CSVs mirroring the result figures.

    Files: ``imbalance_gap.csv``, ``cost_vs_bound.csv``, ``renewables.csv``,
    ``battery.csv`` (one row per evaluated hour), ``summary.csv``,
    ``ledger_report.csv`` and ``global_state.csv``. Without a ledger report
    the ledger files hold zero counts and no price rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hours = summary.hours
    written = []

    def emit(name, header, rows):
        path = out / name
        _write_csv(path, header, rows)
        written.append(path)

    emit("imbalance_gap.csv", ("hour", "gap_pct"),
         [(h.hour, _fmt(g)) for h, g in zip(hours, summary.imbalance_gaps)])
    emit("cost_vs_bound.csv", ("hour", "actual", "bound"),
         [(h.hour, _fmt(h.actual_cost), _fmt(h.best_bound)) for h in hours])
    emit("renewables.csv", ("hour", "solar", "wind"),
         [(h.hour, _fmt(h.solar_mwh), _fmt(h.wind_mwh)) for h in hours])
    emit("battery.csv", ("hour", "soc", "net"),
         [(h.hour, _fmt(h.soc), _fmt(h.battery_net_mwh)) for h in hours])
    emit("summary.csv", ("metric", "value"), [
        ("hours", len(hours)),
        ("excluded_hours", summary.excluded_hours),
        ("mean_imbalance_gap_pct", _fmt(summary.mean_imbalance_gap)),
        ("max_imbalance_gap_pct", _fmt(summary.max_imbalance_gap)),
        ("frac_imbalance_gap_le_2pct", _fmt(summary.frac_imbalance_within)),
        ("mean_bound_gap_pct", _fmt(summary.mean_bound_gap)),
        ("max_bound_gap_pct", _fmt(summary.max_bound_gap)),
        ("frac_bound_gap_le_10pct", _fmt(summary.frac_bound_within)),
    ])
    report = ledger_report if ledger_report is not None else LedgerReport.empty()
    written.extend(report.write(out))
    return written
