"""Weighted cost/degradation objective and its quadratic constraint penalty."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from battsched.battery import (
    PSI_SLOPE_ABOVE_1C,
    BatteryParams,
    DegradationCurve,
    degradation_paths,
    psi,
    soc_paths,
)
from battsched.cost import WH_PER_KWH, EfficiencyParams, PriceScenario, cost_paths

FEASIBILITY_TOL = 1e-3


@dataclass(frozen=True)
class ObjectiveConfig:
    scenario: PriceScenario
    curve: DegradationCurve
    soc_0: float
    w_c: float = 0.5
    rho: float = 1000.0
    params: BatteryParams = field(default_factory=BatteryParams)
    eff: EfficiencyParams = field(default_factory=EfficiencyParams)

    def __post_init__(self) -> None:
        if not 0.0 <= self.w_c <= 1.0:
            raise ValueError(f"w_c must lie in [0, 1], got {self.w_c!r}")
        if not self.rho >= 0.0:
            raise ValueError(f"rho must be non-negative, got {self.rho!r}")
        if not np.isfinite(self.soc_0):
            raise ValueError("soc_0 must be finite")

    @property
    def horizon(self) -> int:
        return len(self.scenario)

    def replace(self, **changes) -> ObjectiveConfig:
        return replace(self, **changes)


class Evaluation(NamedTuple):
    f: np.ndarray | float
    cost: np.ndarray | float
    degradation: np.ndarray | float
    penalty: np.ndarray | float


def _check_horizon(powers: np.ndarray, cfg: ObjectiveConfig) -> None:
    if powers.shape[-1] != cfg.horizon:
        raise ValueError(f"power vector has {powers.shape[-1]} entries, expected {cfg.horizon}")


def evaluate(powers, cfg: ObjectiveConfig) -> Evaluation:
    """All objective components for one power vector (T,) or a batch (n, T)."""
    powers = np.asarray(powers, dtype=float)
    _check_horizon(powers, cfg)
    c = cost_paths(powers, cfg.scenario.prices, cfg.eff, cfg.params)
    d = degradation_paths(cfg.soc_0, powers, cfg.curve, cfg.params)
    f = cfg.w_c * c + (1.0 - cfg.w_c) * d
    pq = _penalty(powers, cfg)
    if powers.ndim == 1:
        return Evaluation(float(f), float(c), float(d), float(pq))
    return Evaluation(f, c, d, pq)


def raw_objective(powers, cfg: ObjectiveConfig):
    """Return ``(f, C, D)`` with ``f = w_c * C + (1 - w_c) * D``."""
    ev = evaluate(powers, cfg)
    return ev.f, ev.cost, ev.degradation


def _penalty(powers: np.ndarray, cfg: ObjectiveConfig):
    soc = soc_paths(cfg.soc_0, powers, cfg.params)
    over = np.maximum(soc - cfg.params.soc_max, 0.0)
    under = np.minimum(soc - cfg.params.soc_min, 0.0)
    excess = np.maximum(np.abs(powers) - cfg.params.p_b_max, 0.0)
    return np.sum(over**2 + under**2 + excess**2, axis=-1)


def quadratic_penalty(powers, cfg: ObjectiveConfig):
    powers = np.asarray(powers, dtype=float)
    _check_horizon(powers, cfg)
    pq = _penalty(powers, cfg)
    return float(pq) if pq.ndim == 0 else pq


def penalized_objective(powers, cfg: ObjectiveConfig):
    ev = evaluate(powers, cfg)
    return ev.f + cfg.rho * ev.penalty


def max_violation(powers, cfg: ObjectiveConfig) -> float:
    """Largest constraint violation, in percent SOC or watts."""
    powers = np.asarray(powers, dtype=float)
    soc = soc_paths(cfg.soc_0, powers, cfg.params)
    worst = max(
        float(np.max(soc - cfg.params.soc_max)),
        float(np.max(cfg.params.soc_min - soc)),
        float(np.max(np.abs(powers) - cfg.params.p_b_max)),
    )
    return max(worst, 0.0)


def is_feasible(powers, cfg: ObjectiveConfig, tol: float = FEASIBILITY_TOL) -> bool:
    return max_violation(powers, cfg) <= tol


def gradient_scale(cfg: ObjectiveConfig) -> float:
    """Typical magnitude of d f / d P_t (per watt) over the feasible power box.

    Used to put step sizes on a common footing across weights and price levels.
    """
    p = cfg.params
    cost_scale = np.max(np.abs(cfg.scenario.prices)) * p.delta_t / (WH_PER_KWH * cfg.eff.eta)
    i_max = p.p_b_max / p.one_c_power
    deg_scale = cfg.curve.max_slope * p.soc_per_watt * (psi(i_max) + i_max * (1.0 if i_max <= 1 else PSI_SLOPE_ABOVE_1C))
    scale = cfg.w_c * cost_scale + (1.0 - cfg.w_c) * deg_scale
    return float(scale) if scale > 0 else 1.0


def penalty_curvature(powers, cfg: ObjectiveConfig, soc_margin: float = 0.0,
                      power_margin: float | None = None) -> np.ndarray:
    """Gauss-Newton Hessian of the penalty over constraints that are violated or
    near binding: SOC within ``soc_margin`` percent of a bound, power within
    ``power_margin`` watts of the limit (defaults to the SOC margin converted to watts).

    Returns a (T, T) positive semidefinite matrix; zero when nothing is near a bound.
    """
    powers = np.asarray(powers, dtype=float)
    p = cfg.params
    k = p.soc_per_watt
    if power_margin is None:
        power_margin = soc_margin / k
    soc = soc_paths(cfg.soc_0, powers, p)
    near_soc = (soc > p.soc_max - soc_margin) | (soc < p.soc_min + soc_margin)
    near_power = np.abs(powers) > p.p_b_max - power_margin
    rows = np.tril(np.ones((powers.size, powers.size)))[near_soc]
    return 2.0 * (k**2 * rows.T @ rows + np.diag(near_power.astype(float)))
