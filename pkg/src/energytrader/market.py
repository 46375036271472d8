"""Generation fleet, battery storage and conversion of fractional dispatch
actions into delivered energy and supply cost.

The market clears hourly, so MW and MWh are numerically interchangeable.
Battery losses use a symmetric split of the round-trip efficiency: energy
drawn from the grid is stored at ``sqrt(eta)`` and stored energy is delivered
at ``sqrt(eta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .profiles import HourlyRecord

# slack for clamping comparisons; below this a clamp is not a violation
_EPS = 1e-9


class Violation(str, Enum):
    SOLAR_UNAVAILABLE = "SolarUnavailable"
    WIND_UNAVAILABLE = "WindUnavailable"
    BATTERY_OVERFLOW = "BatteryOverflow"
    BATTERY_UNDERFLOW = "BatteryUnderflow"


@dataclass(frozen=True)
class FleetSpec:
    """Installed capacities in MW.

    ``conventional_cost_mode`` is ``"hourly_market_price"`` or ``"fixed"``;
    in fixed mode ``conventional_fixed_cost`` ($/MWh) applies every hour.
    """

    solar_capacity: float = 300.0
    wind_capacity: float = 300.0
    conventional_capacity: float = 1500.0
    conventional_cost_mode: str = "hourly_market_price"
    conventional_fixed_cost: float = 50.0
    renewable_marginal_cost: float = 0.0

    def __post_init__(self) -> None:
        for name in ("solar_capacity", "wind_capacity", "conventional_capacity"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.conventional_cost_mode not in ("hourly_market_price", "fixed"):
            raise ValueError(f"unknown conventional_cost_mode {self.conventional_cost_mode!r}")
        if self.renewable_marginal_cost < 0 or self.conventional_fixed_cost < 0:
            raise ValueError("marginal costs must be >= 0")

    def conventional_price(self, hour_record: HourlyRecord) -> float:
        if self.conventional_cost_mode == "fixed":
            return self.conventional_fixed_cost
        return hour_record.price


@dataclass(frozen=True)
class BatterySpec:
    energy_capacity: float = 400.0
    max_charge_power: float = 100.0
    max_discharge_power: float = 100.0
    round_trip_efficiency: float = 0.9
    initial_soc: float = 0.0

    def __post_init__(self) -> None:
        if self.energy_capacity <= 0:
            raise ValueError("energy_capacity must be > 0")
        if self.max_charge_power <= 0 or self.max_discharge_power <= 0:
            raise ValueError("charge/discharge power must be > 0")
        if not 0.0 < self.round_trip_efficiency <= 1.0:
            raise ValueError("round_trip_efficiency must lie in (0, 1]")
        if not 0.0 <= self.initial_soc <= self.energy_capacity:
            raise ValueError("initial_soc must lie in [0, energy_capacity]")

    @property
    def leg_efficiency(self) -> float:
        return math.sqrt(self.round_trip_efficiency)


def check_fleet_covers(fleet: FleetSpec, battery: BatterySpec, peak_demand: float) -> None:
    """Raise ValueError when total nameplate capacity cannot meet ``peak_demand``."""
    total = (
        fleet.solar_capacity
        + fleet.wind_capacity
        + fleet.conventional_capacity
        + battery.max_discharge_power
    )
    if total < peak_demand:
        raise ValueError(f"fleet capacity {total:.1f} MW cannot cover peak demand {peak_demand:.1f} MWh")


@dataclass(frozen=True)
class DispatchAction:
    """Fractions of available capacity; ``battery_frac < 0`` charges."""

    solar_frac: float = 0.0
    wind_frac: float = 0.0
    conventional_frac: float = 0.0
    battery_frac: float = 0.0

    def clamped(self) -> "DispatchAction":
        def unit(x: float) -> float:
            return min(1.0, max(0.0, float(x)))

        return DispatchAction(
            unit(self.solar_frac),
            unit(self.wind_frac),
            unit(self.conventional_frac),
            min(1.0, max(-1.0, float(self.battery_frac))),
        )

    @classmethod
    def from_array(cls, values) -> "DispatchAction":
        s, w, c, b = (float(v) for v in values)
        return cls(s, w, c, b)


@dataclass(frozen=True)
class DispatchResult:
    solar_mwh: float
    wind_mwh: float
    conventional_mwh: float
    battery_discharge_mwh: float
    battery_charge_mwh: float
    supply_total_mwh: float
    supply_cost: float
    new_soc: float
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def battery_net_mwh(self) -> float:
        """Discharge minus charge, as seen by the grid."""
        return self.battery_discharge_mwh - self.battery_charge_mwh


def soc_transition(soc: float, charge_mwh: float, discharge_mwh: float, battery: BatterySpec) -> float:
    if charge_mwh < 0 or discharge_mwh < 0:
        raise ValueError("charge and discharge energies must be >= 0")
    if charge_mwh > 0 and discharge_mwh > 0:
        raise ValueError("cannot charge and discharge in the same hour")
    leg = battery.leg_efficiency
    new_soc = soc + charge_mwh * leg - discharge_mwh / leg
    # absorb rounding from the clamp in apply_dispatch
    return min(battery.energy_capacity, max(0.0, new_soc))


def apply_dispatch(
    action: DispatchAction,
    hour_record: HourlyRecord,
    fleet: FleetSpec,
    battery: BatterySpec,
    soc: float,
) -> DispatchResult:
    """Turn a dispatch action into delivered energy, cost and the next SoC.

    Renewable dispatch requested while its capacity factor is zero delivers
    nothing and is flagged. Battery requests beyond what the SoC allows are
    clamped and flagged as over/underflow.
    """
    if not -_EPS <= soc <= battery.energy_capacity + _EPS:
        raise ValueError(f"soc {soc} outside [0, {battery.energy_capacity}]")
    soc = min(battery.energy_capacity, max(0.0, soc))
    action = action.clamped()
    violations: list[Violation] = []

    solar = action.solar_frac * fleet.solar_capacity * hour_record.solar_cf
    if action.solar_frac > 0 and hour_record.solar_cf == 0:
        violations.append(Violation.SOLAR_UNAVAILABLE)
    wind = action.wind_frac * fleet.wind_capacity * hour_record.wind_cf
    if action.wind_frac > 0 and hour_record.wind_cf == 0:
        violations.append(Violation.WIND_UNAVAILABLE)
    conventional = action.conventional_frac * fleet.conventional_capacity

    leg = battery.leg_efficiency
    discharge = charge = 0.0
    if action.battery_frac > 0:
        requested = action.battery_frac * battery.max_discharge_power
        deliverable = soc * leg
        if requested > deliverable + _EPS:
            violations.append(Violation.BATTERY_UNDERFLOW)
        discharge = min(requested, deliverable)
    elif action.battery_frac < 0:
        requested = -action.battery_frac * battery.max_charge_power
        storable = (battery.energy_capacity - soc) / leg
        if requested > storable + _EPS:
            violations.append(Violation.BATTERY_OVERFLOW)
        charge = min(requested, storable)

    cost = (
        fleet.renewable_marginal_cost * (solar + wind)
        + fleet.conventional_price(hour_record) * conventional
    )
    return DispatchResult(
        solar_mwh=solar,
        wind_mwh=wind,
        conventional_mwh=conventional,
        battery_discharge_mwh=discharge,
        battery_charge_mwh=charge,
        supply_total_mwh=solar + wind + conventional + discharge,
        supply_cost=cost,
        new_soc=soc_transition(soc, charge, discharge, battery),
        violations=tuple(violations),
    )
