"""Per-hour best-bound cost via merit-order dispatch."""

from __future__ import annotations

from dataclasses import dataclass

from .market import BatterySpec, FleetSpec
from .profiles import HourlyRecord


@dataclass(frozen=True)
class MeritOffer:
    source_id: str
    available_mwh: float
    marginal_cost: float
    tie_rank: int = 0

    def __post_init__(self) -> None:
        if self.available_mwh < 0:
            raise ValueError(f"{self.source_id}: available_mwh must be >= 0")
        if self.marginal_cost < 0:
            raise ValueError(f"{self.source_id}: marginal_cost must be >= 0")


@dataclass(frozen=True)
class BoundResult:
    total_cost: float
    dispatched: dict[str, float]
    unmet_mwh: float


def best_bound(demand: float, offers: list[MeritOffer]) -> BoundResult:
    """Fill ``demand`` cheapest-first; equal costs go in ``tie_rank`` order.

    Shortfall is reported in ``unmet_mwh`` rather than raised.
    """
    if demand < 0:
        raise ValueError("demand must be >= 0")
    dispatched = {o.source_id: 0.0 for o in offers}
    remaining = float(demand)
    total = 0.0
    for offer in sorted(offers, key=lambda o: (o.marginal_cost, o.tie_rank)):
        if remaining <= 0:
            break
        take = min(remaining, offer.available_mwh)
        dispatched[offer.source_id] += take
        total += take * offer.marginal_cost
        remaining -= take
    return BoundResult(total_cost=total, dispatched=dispatched, unmet_mwh=max(0.0, remaining))


def hourly_offers(
    hour_record: HourlyRecord,
    fleet: FleetSpec,
    battery: BatterySpec,
    soc: float,
    include_battery: bool = True,
) -> list[MeritOffer]:
    """One offer per source for the hour.

    Stored energy is offered at zero cost, which keeps the bound optimistic.
    """
    offers = [
        MeritOffer("solar", fleet.solar_capacity * hour_record.solar_cf, fleet.renewable_marginal_cost, 0),
        MeritOffer("wind", fleet.wind_capacity * hour_record.wind_cf, fleet.renewable_marginal_cost, 1),
        MeritOffer("conventional", fleet.conventional_capacity, fleet.conventional_price(hour_record), 2),
    ]
    if include_battery:
        available = min(battery.max_discharge_power, max(0.0, soc) * battery.leg_efficiency)
        offers.append(MeritOffer("battery", available, 0.0, 3))
    return offers
