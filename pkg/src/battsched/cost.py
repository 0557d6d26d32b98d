"""Energy cost of a schedule against per-interval prices.

Units: battery power in W, interval length in h, prices in $/kWh, cost in $.
Cost is computed from market-side power, so round trips lose money when
eta < 1. Negative cost is revenue.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from battsched.battery import BatteryParams, Schedule

log = logging.getLogger(__name__)

WH_PER_KWH = 1000.0


@dataclass(frozen=True, eq=False)
class PriceScenario:
    prices: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        prices = np.array(self.prices, dtype=float).reshape(-1)
        if prices.size < 1:
            raise ValueError("a price scenario needs at least one interval")
        if not np.all(np.isfinite(prices)):
            raise ValueError("prices must be finite")
        if np.any(prices < 0):
            log.warning("price scenario %r contains negative prices", self.label)
        prices.flags.writeable = False
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return self.prices.size


@dataclass(frozen=True)
class EfficiencyParams:
    eta: float = 0.95

    def __post_init__(self) -> None:
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta!r}")


def market_power(p_b, eff: EfficiencyParams):
    """Power exchanged with the market for battery-side power ``p_b``.

    Charging draws ``p_b / eta`` from the market; discharging delivers ``p_b * eta``.
    """
    p_b = np.asarray(p_b, dtype=float)
    out = np.where(p_b > 0, p_b / eff.eta, p_b * eff.eta)
    return out if out.ndim else float(out)


def cost_paths(powers, prices, eff: EfficiencyParams, params: BatteryParams) -> np.ndarray:
    """Cost for each power vector in a batch of shape (..., T)."""
    energy_kwh = market_power(powers, eff) * params.delta_t / WH_PER_KWH
    return np.sum(energy_kwh * np.asarray(prices, dtype=float), axis=-1)


def total_cost(schedule: Schedule, scenario: PriceScenario, eff: EfficiencyParams,
               params: BatteryParams) -> float:
    if len(schedule) != len(scenario):
        raise ValueError(
            f"schedule has {len(schedule)} intervals but the price scenario has {len(scenario)}")
    return float(cost_paths(schedule.powers, scenario.prices, eff, params))
