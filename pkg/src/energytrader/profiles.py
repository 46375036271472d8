"""Day-ahead market day profiles: CSV ingestion, a synthetic default day and
seeded perturbation for episode diversity.

A profile holds 24 hourly records of demand, market price and solar/wind
capacity factors. The CSV layout is::

    hour,demand_mwh,price_usd_per_mwh,solar_cf,wind_cf
    0,650.123456,30.000000,0.000000,0.412000
    ...
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np

HOURS = 24
CSV_HEADER = ("hour", "demand_mwh", "price_usd_per_mwh", "solar_cf", "wind_cf")

PRICE_MIN = 14.0
PRICE_MAX = 66.0


class ProfileError(ValueError):
    """Base class for profile problems."""


class ProfileParseError(ProfileError):
    """Malformed CSV content."""


class ProfileValidationError(ProfileError):
    """Well-formed content that violates a profile invariant."""


@dataclass(frozen=True)
class HourlyRecord:
    hour: int
    demand: float
    price: float
    solar_cf: float
    wind_cf: float

    def validate(self) -> None:
        if not 0 <= self.hour < HOURS:
            raise ProfileValidationError(f"hour {self.hour} outside 0..23")
        for name in ("demand", "price", "solar_cf", "wind_cf"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ProfileValidationError(f"hour {self.hour}: {name} is not finite")
        if self.demand < 0:
            raise ProfileValidationError(f"hour {self.hour}: negative demand {self.demand}")
        if self.price < 0:
            raise ProfileValidationError(f"hour {self.hour}: negative price {self.price}")
        for name in ("solar_cf", "wind_cf"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ProfileValidationError(f"hour {self.hour}: {name}={value} outside [0, 1]")


@dataclass(frozen=True)
class DayProfile:
    """Exactly 24 hourly records ordered by hour."""

    records: tuple[HourlyRecord, ...]

    def __post_init__(self) -> None:
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        hours = [r.hour for r in records]
        missing = sorted(set(range(HOURS)) - set(hours))
        if missing:
            raise ProfileValidationError(f"profile is missing hour(s) {missing}")
        if len(records) != HOURS:
            raise ProfileValidationError(f"profile has {len(records)} records, expected {HOURS}")
        if hours != list(range(HOURS)):
            raise ProfileValidationError("records must be ordered by hour 0..23")
        for r in records:
            r.validate()

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, hour: int) -> HourlyRecord:
        return self.records[hour]

    @property
    def demand(self) -> np.ndarray:
        return np.array([r.demand for r in self.records])

    @property
    def price(self) -> np.ndarray:
        return np.array([r.price for r in self.records])

    @property
    def solar_cf(self) -> np.ndarray:
        return np.array([r.solar_cf for r in self.records])

    @property
    def wind_cf(self) -> np.ndarray:
        return np.array([r.wind_cf for r in self.records])

    @classmethod
    def from_arrays(cls, demand, price, solar_cf, wind_cf) -> "DayProfile":
        return cls(
            tuple(
                HourlyRecord(h, float(d), float(p), float(s), float(w))
                for h, (d, p, s, w) in enumerate(zip(demand, price, solar_cf, wind_cf))
            )
        )


@dataclass(frozen=True)
class PerturbationSpec:
    """Relative uniform noise amplitude (0.05 means +/-5%) and RNG seed."""

    amplitude: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.amplitude < 1.0:
            raise ValueError(f"amplitude must lie in [0, 1), got {self.amplitude}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _parse_rows(rows: Iterable[list[str]], source: str) -> DayProfile:
    rows = list(rows)
    if not rows:
        raise ProfileParseError(f"{source}: empty file")
    if tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise ProfileParseError(f"{source}: bad header {rows[0]!r}, expected {','.join(CSV_HEADER)}")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise ProfileParseError(
                f"{source}:{lineno}: expected {len(CSV_HEADER)} columns, got {len(row)}"
            )
        try:
            hour = int(row[0])
            values = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise ProfileParseError(f"{source}:{lineno}: {exc}") from None
        record = HourlyRecord(hour, *values)
        record.validate()
        records.append(record)
    records.sort(key=lambda r: r.hour)
    hours = [r.hour for r in records]
    if len(set(hours)) != len(hours):
        raise ProfileValidationError(f"{source}: duplicate hour rows")
    return DayProfile(tuple(records))


def load_profile(path: str | Path) -> DayProfile:
    """Read and validate a 24-row profile CSV.

    Raises:
        ProfileParseError: malformed header, row or number.
        ProfileValidationError: missing/duplicate hours or out-of-range values.
        OSError: the file cannot be read.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        return _parse_rows(csv.reader(fh), str(path))


def save_profile(profile: DayProfile, path: str | Path) -> None:
    """Write the canonical CSV (6 decimals, ``\\n`` line endings)."""
    path = Path(path)
    lines = [",".join(CSV_HEADER)]
    for r in profile.records:
        lines.append(f"{r.hour},{r.demand:.6f},{r.price:.6f},{r.solar_cf:.6f},{r.wind_cf:.6f}")
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _demand_shape(hours: np.ndarray) -> np.ndarray:
    # daily harmonic plus a phase-shifted half-day term: trough near 04:00, peak near 20:00
    phase = 2.0 * np.pi * (hours - 19.0) / HOURS
    return np.cos(phase) + 0.5 * np.cos(2.0 * phase - 0.9)


def synthesize_default(
    base_demand: float = 700.0,
    demand_swing: float = 200.0,
    wind_seed: int = 2024,
) -> DayProfile:
    """Deterministic summer-like day.

    Demand peaks at 20:00 and bottoms out at 04:00; price tracks demand
    affinely onto [14, 66] $/MWh. Solar is a bell centred on 13:00 that is
    zero outside 06:00-19:00. Wind is a seeded, windier-at-night series.
    """
    hours = np.arange(HOURS, dtype=float)
    shape = _demand_shape(hours)
    demand = base_demand + demand_swing * shape
    scaled = (shape - shape.min()) / (shape.max() - shape.min())
    price = PRICE_MIN + (PRICE_MAX - PRICE_MIN) * scaled

    solar = np.zeros(HOURS)
    day = (hours >= 6) & (hours <= 19)
    solar[day] = 0.85 * np.sin(np.pi * (hours[day] - 6.0) / 14.0) ** 1.5

    rng = np.random.default_rng(wind_seed)
    wind = 0.38 + 0.14 * np.cos(2.0 * np.pi * (hours - 2.0) / HOURS)
    wind = wind + rng.uniform(-0.08, 0.08, HOURS)
    wind = np.clip(wind, 0.05, 0.95)
    return DayProfile.from_arrays(demand, price, solar, wind)


def perturb(profile: DayProfile, spec: PerturbationSpec) -> DayProfile:
    """Multiply every numeric field by ``1 + u``, ``u ~ U[-a, a]`` i.i.d.

    Capacity factors are clamped back into [0, 1]. The draw order is
    hour-major over (demand, price, solar_cf, wind_cf) so the result depends
    only on the profile and the spec.
    """
    if spec.amplitude == 0.0:
        return profile
    rng = np.random.default_rng(spec.seed)
    u = rng.uniform(-spec.amplitude, spec.amplitude, size=(HOURS, 4))
    records = []
    for r, noise in zip(profile.records, u):
        factor = 1.0 + noise
        records.append(
            replace(
                r,
                demand=r.demand * factor[0],
                price=r.price * factor[1],
                solar_cf=min(1.0, max(0.0, r.solar_cf * factor[2])),
                wind_cf=min(1.0, max(0.0, r.wind_cf * factor[3])),
            )
        )
    return DayProfile(tuple(records))
