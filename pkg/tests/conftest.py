"""Shared fixtures: the default synthetic day, a flat day and a small env.

Also collects the acceptance verdicts and prints them, one line per
criterion, in the terminal summary.
"""

from __future__ import annotations

import numpy as np
import pytest

from energytrader.env import DayAheadEnv, EnvConfig
from energytrader.profiles import DayProfile, synthesize_default

_CRITERIA: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    _CRITERIA[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])


@pytest.fixture(scope="session")
def default_profile() -> DayProfile:
    return synthesize_default()


@pytest.fixture
def flat_profile() -> DayProfile:
    """Constant demand and price with round capacity factors, easy to reason about by hand."""
    solar = np.zeros(24)
    solar[6:20] = 0.5
    return DayProfile.from_arrays(np.full(24, 500.0), np.full(24, 40.0), solar, np.full(24, 0.4))


@pytest.fixture
def env(default_profile) -> DayAheadEnv:
    return DayAheadEnv(default_profile)


@pytest.fixture
def exact_env(default_profile) -> DayAheadEnv:
    """No perturbation, so the working profile equals the base profile."""
    return DayAheadEnv(default_profile, config=EnvConfig(perturbation_amplitude=0.0))
