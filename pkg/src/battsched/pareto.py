"""Cost/degradation frontier from a sweep over the cost weight."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from battsched.objective import ObjectiveConfig
from battsched.optimizer import OptimizationError, OptimizerConfig, optimize_schedule

log = logging.getLogger(__name__)

FRONTIER_HEADER = ("w_c", "cost_usd", "degradation", "feasible", "dominated")


@dataclass(frozen=True, eq=False)
class FrontierPoint:
    w_c: float
    cost: float  # $, unpenalized
    degradation: float  # unpenalized
    schedule: np.ndarray | None
    feasible: bool
    error: str = ""

    @property
    def failed(self) -> bool:
        return self.schedule is None


def weight_grid(n: int = 21) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def weight_seed(master_seed: int, index: int) -> int:
    """Independent optimizer seed for the ``index``-th weight of a sweep."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def _solve(w_c: float, index: int, base_cfg: ObjectiveConfig, opt_cfg: OptimizerConfig) -> FrontierPoint:
    opt = replace(opt_cfg, seed=weight_seed(opt_cfg.seed, index))
    try:
        res = optimize_schedule(base_cfg.replace(w_c=w_c), opt)
    except OptimizationError as exc:
        log.warning("weight %g failed: %s", w_c, exc)
        return FrontierPoint(w_c, math.nan, math.nan, None, False, error=str(exc))
    return FrontierPoint(w_c, res.raw_cost, res.raw_degradation, res.best_powers, res.feasible)


def sweep(weights, base_cfg: ObjectiveConfig, opt_cfg: OptimizerConfig | None = None,
          threads: int = 1) -> list[FrontierPoint]:
    """One optimization per weight, returned in weight order.

    The optimizer seed for weight ``i`` is derived from ``opt_cfg.seed`` and ``i``,
    so the result does not depend on ``threads``. Failures are recorded on the point.
    """
    opt_cfg = opt_cfg or OptimizerConfig()
    weights = [float(w) for w in weights]
    bad = [w for w in weights if not 0.0 <= w <= 1.0]
    if bad:
        raise ValueError(f"weights must lie in [0, 1]: {bad}")
    jobs = list(enumerate(weights))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda job: _solve(job[1], job[0], base_cfg, opt_cfg), jobs))
    return [_solve(w, i, base_cfg, opt_cfg) for i, w in jobs]


def _dominates(a: FrontierPoint, b: FrontierPoint) -> bool:
    return (a.cost <= b.cost and a.degradation <= b.degradation
            and (a.cost < b.cost or a.degradation < b.degradation))


def dominated_flags(points: list[FrontierPoint]) -> list[bool]:
    """True for points dominated by another point. Failed points count as dominated."""
    usable = [p for p in points if not p.failed]
    return [p.failed or any(_dominates(q, p) for q in usable) for p in points]


def non_dominated(points: list[FrontierPoint]) -> list[FrontierPoint]:
    """Points no other point dominates, sorted by cost (stable, so ties keep input order)."""
    keep = [p for p, dom in zip(points, dominated_flags(points)) if not dom]
    return sorted(keep, key=lambda p: p.cost)


def write_frontier_csv(path, points: list[FrontierPoint]) -> None:
    """All points in sweep order, with the dominated ones flagged."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FRONTIER_HEADER)
        for p, dom in zip(points, dominated_flags(points)):
            writer.writerow([repr(p.w_c), repr(p.cost), repr(p.degradation),
                             str(p.feasible).lower(), str(dom).lower()])
