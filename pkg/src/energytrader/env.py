"""The 24-hour day-ahead dispatch MDP with reset/step semantics.

Each step dispatches one market hour. The observation carries the current
renewable capacity factors, the previous step's imbalance, this hour's best
bound, 7-hour demand and price forecasts and the battery state of charge.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .dispatch_bound import best_bound, hourly_offers
from .evaluation import imbalance_gap_pct, safe_bound_gap_pct
from .market import (
    BatterySpec,
    DispatchAction,
    DispatchResult,
    FleetSpec,
    apply_dispatch,
    check_fleet_covers,
)
from .profiles import HOURS, DayProfile, PerturbationSpec, perturb

FORECAST_HORIZON = 7
OBS_DIM = 4 + 2 * FORECAST_HORIZON + 1
PRICE_SCALE = 100.0


class EnvUsageError(RuntimeError):
    """Environment driven out of order (step before reset or after done)."""


@dataclass(frozen=True)
class CurriculumTargets:
    imbalance_gap_target_pct: float
    best_bound_gap_target_pct: float

    def __post_init__(self) -> None:
        if not (self.imbalance_gap_target_pct > 0 and self.best_bound_gap_target_pct > 0):
            raise ValueError("curriculum targets must be positive")


@dataclass(frozen=True)
class RewardWeights:
    """Reward constants.

    When the imbalance early-stop rule cuts an episode short, every forfeited
    hour is charged the failing hour's loss plus ``termination_penalty``.
    Otherwise ending early would be the cheapest way out of negative rewards.
    """

    w_imbalance: float = 1.0
    w_cost: float = 0.5
    penalty_invalid: float = 2.0
    arbitrage_bonus: float = 0.2
    termination_penalty: float = 1.0

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class EnvConfig:
    perturbation_amplitude: float = 0.05
    early_stop_multiplier: float = 3.0
    early_stop: bool = True
    observe_soc: bool = True
    bound_includes_battery: bool = True
    # fractions below this magnitude dispatch nothing
    dispatch_deadband: float = 0.01


@dataclass(frozen=True)
class MarketState:
    """Observation at the start of ``hour``; ``hour == 24`` marks the terminal state."""

    solar_cf_now: float
    wind_cf_now: float
    imbalance_now: float
    best_bound_now: float
    demand_forecast: tuple[float, ...]
    price_forecast: tuple[float, ...]
    soc: float
    hour: int


@dataclass(frozen=True)
class StepResult:
    observation: MarketState
    reward: float
    done: bool
    info: dict[str, Any] = field(default_factory=dict)


def forecast_window(values: np.ndarray, hour: int, horizon: int = FORECAST_HORIZON) -> tuple[float, ...]:
    """Values for hours ``hour .. hour+horizon-1``, repeating hour 23 past the end."""
    idx = np.minimum(np.arange(hour, hour + horizon), HOURS - 1)
    return tuple(float(v) for v in values[idx])


class DayAheadEnv:
    """Single-threaded episode state over one (perturbed) market day."""

    def __init__(
        self,
        profile: DayProfile,
        fleet: FleetSpec | None = None,
        battery: BatterySpec | None = None,
        weights: RewardWeights | None = None,
        config: EnvConfig | None = None,
        targets: CurriculumTargets | None = None,
    ):
        self.profile = profile
        self.fleet = fleet or FleetSpec()
        self.battery = battery or BatterySpec()
        self.weights = weights or RewardWeights()
        self.config = config or EnvConfig()
        self.targets = targets or CurriculumTargets(2.0, 10.0)
        check_fleet_covers(self.fleet, self.battery, float(profile.demand.max()))
        self.peak_demand = float(profile.demand.max())
        self._working: DayProfile | None = None
        self._state: MarketState | None = None
        self._done = True

    # -- curriculum -------------------------------------------------------

    def set_targets(self, targets: CurriculumTargets) -> None:
        if not isinstance(targets, CurriculumTargets):
            raise TypeError("targets must be CurriculumTargets")
        self.targets = targets

    @property
    def early_stop_threshold_pct(self) -> float:
        return self.config.early_stop_multiplier * self.targets.imbalance_gap_target_pct

    # -- episode ----------------------------------------------------------

    def reset(self, seed: int = 0, profile: DayProfile | None = None) -> MarketState:
        if profile is not None:
            self.profile = profile
            check_fleet_covers(self.fleet, self.battery, float(profile.demand.max()))
            self.peak_demand = float(profile.demand.max())
        spec = PerturbationSpec(self.config.perturbation_amplitude, seed)
        self._working = perturb(self.profile, spec)
        self._demand = self._working.demand
        self._price = self._working.price
        self._hour = 0
        self._soc = self.battery.initial_soc
        self._imbalance = 0.0
        self._done = False
        self._state = self._observe()
        return self._state

    @property
    def working_profile(self) -> DayProfile:
        if self._working is None:
            raise EnvUsageError("reset() has not been called")
        return self._working

    @property
    def state(self) -> MarketState:
        if self._state is None:
            raise EnvUsageError("reset() has not been called")
        return self._state

    def hour_bound(self, hour: int, soc: float) -> float:
        rec = self._working[hour]
        offers = hourly_offers(rec, self.fleet, self.battery, soc, self.config.bound_includes_battery)
        return best_bound(rec.demand, offers).total_cost

    def _observe(self) -> MarketState:
        h = min(self._hour, HOURS - 1)
        rec = self._working[h]
        terminal = self._hour >= HOURS
        return MarketState(
            solar_cf_now=0.0 if terminal else rec.solar_cf,
            wind_cf_now=0.0 if terminal else rec.wind_cf,
            imbalance_now=self._imbalance,
            best_bound_now=0.0 if terminal else self.hour_bound(h, self._soc),
            demand_forecast=forecast_window(self._demand, h),
            price_forecast=forecast_window(self._price, h),
            soc=self._soc,
            hour=self._hour,
        )

    def condition_action(self, action: DispatchAction) -> DispatchAction:
        """Clamp into range and snap sub-deadband fractions to exactly zero."""
        a = action.clamped()
        dead = self.config.dispatch_deadband

        def snap(x: float) -> float:
            return 0.0 if abs(x) < dead else x

        return DispatchAction(snap(a.solar_frac), snap(a.wind_frac), snap(a.conventional_frac), snap(a.battery_frac))

    def step(self, action: DispatchAction) -> StepResult:
        if self._state is None:
            raise EnvUsageError("step() called before reset()")
        if self._done:
            raise EnvUsageError("step() called after the episode finished")
        state = self._state
        rec = self._working[self._hour]
        action = self.condition_action(action)
        dispatch = apply_dispatch(action, rec, self.fleet, self.battery, self._soc)

        effective_demand = rec.demand + dispatch.battery_charge_mwh
        supply = dispatch.supply_total_mwh
        if effective_demand > 0:
            gap = imbalance_gap_pct(effective_demand, supply)
        else:
            gap = 0.0 if supply == 0 else 100.0
        bound = state.best_bound_now
        cost_gap = safe_bound_gap_pct(dispatch.supply_cost, bound)
        arbitrage = self._arbitrage_term(dispatch, rec.price, state.price_forecast)

        w = self.weights
        reward = (
            -w.w_imbalance * gap / 100.0
            - w.w_cost * cost_gap / 100.0
            - w.penalty_invalid * len(dispatch.violations)
            + arbitrage
        )

        hour = self._hour
        self._soc = dispatch.new_soc
        self._imbalance = effective_demand - supply
        self._hour += 1
        failed = self.config.early_stop and gap > self.early_stop_threshold_pct
        self._done = self._hour >= HOURS or failed
        if failed and self._hour < HOURS:
            # forfeited hours cost at least what the failing hour cost, so quitting never pays
            reward -= (HOURS - self._hour) * (w.termination_penalty + max(0.0, -reward))
        self._state = self._observe()
        info = {
            "imbalance_gap_pct": gap,
            "cost_gap_pct": cost_gap,
            "supply_cost": dispatch.supply_cost,
            "best_bound": bound,
            "violations": tuple(v.value for v in dispatch.violations),
            "soc": self._soc,
            "hour": hour,
            "demand": rec.demand,
            "effective_demand": effective_demand,
            "supply": supply,
            "price": rec.price,
            "dispatch": dispatch,
            "arbitrage": arbitrage,
            "early_stop": failed,
        }
        return StepResult(self._state, float(reward), self._done, info)

    def _arbitrage_term(self, dispatch: DispatchResult, price: float, forecast) -> float:
        mean = float(np.mean(forecast))
        if dispatch.battery_charge_mwh > 0 and price < mean:
            return self.weights.arbitrage_bonus
        if dispatch.battery_discharge_mwh > 0 and price > mean:
            return self.weights.arbitrage_bonus
        return 0.0

    # -- encoding ---------------------------------------------------------

    def observe_vector(self, state: MarketState | None = None) -> np.ndarray:
        return observe_vector(
            state if state is not None else self.state,
            demand_scale=self.peak_demand,
            energy_capacity=self.battery.energy_capacity,
            observe_soc=self.config.observe_soc,
        )


def observe_vector(
    state: MarketState,
    demand_scale: float,
    energy_capacity: float,
    price_scale: float = PRICE_SCALE,
    observe_soc: bool = True,
) -> np.ndarray:
    """Fixed 19-entry policy input.

    Layout: solar_cf, wind_cf, imbalance / demand_scale,
    best_bound / (demand_scale * price_scale), 7 demand forecasts / demand_scale,
    7 price forecasts / price_scale, soc / energy_capacity. ``demand_scale``
    is the peak demand the fleet was validated against.
    """
    vec = np.empty(OBS_DIM)
    vec[0] = state.solar_cf_now
    vec[1] = state.wind_cf_now
    vec[2] = state.imbalance_now / demand_scale
    vec[3] = state.best_bound_now / (demand_scale * price_scale)
    vec[4 : 4 + FORECAST_HORIZON] = np.asarray(state.demand_forecast) / demand_scale
    vec[4 + FORECAST_HORIZON : 4 + 2 * FORECAST_HORIZON] = np.asarray(state.price_forecast) / price_scale
    vec[-1] = state.soc / energy_capacity if observe_soc else 0.0
    return vec
