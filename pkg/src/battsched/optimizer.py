"""Central-difference Nesterov descent on the penalized schedule objective.

``optimize_schedule`` runs a short continuation over the penalty weight: each
round minimizes ``f + rho_k * p_q`` with rho_k rising by 10x up to the
configured rho. Steps are damped by the Gauss-Newton curvature of constraints
that are violated or close to binding, so the stiff SOC penalty does not force
a tiny step everywhere else. The band that counts as "close" shrinks each round.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from battsched.objective import (
    ObjectiveConfig,
    evaluate,
    gradient_scale,
    is_feasible,
    max_violation,
    penalty_curvature,
)

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e12
MAX_RHO = 1e7
STALL_TOL = 1e-9


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, value: float, x_best: np.ndarray):
        super().__init__(f"objective reached {value:.3g} at iteration {iteration}")
        self.iteration = iteration
        self.value = value
        self.x_best = x_best


class OptimizationError(RuntimeError):
    def __init__(self, message: str, diagnostics: list[dict]):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class OptimizerConfig:
    step_size: float = 0.05
    momentum: float = 0.9
    fd_step: float = 1e-4  # W
    max_iters: int = 1000  # per restart, split evenly over the penalty rounds
    n_restarts: int = 5
    init_power_range: tuple[float, float] = (-5.0, 5.0)
    seed: int = 0
    penalty_rounds: int = 4
    active_margin: float = 0.5  # % SOC
    margin_decay: float = 0.3
    damping: float = 0.5
    threads: int = 1

    def __post_init__(self) -> None:
        errors = []
        if not self.step_size > 0:
            errors.append("step_size must be positive")
        if not 0.0 <= self.momentum < 1.0:
            errors.append("momentum must lie in [0, 1)")
        if not self.fd_step > 0:
            errors.append("fd_step must be positive")
        if self.max_iters < 1:
            errors.append("max_iters must be at least 1")
        if self.n_restarts < 1:
            errors.append("n_restarts must be at least 1")
        lo, hi = self.init_power_range
        if not lo <= hi:
            errors.append("init_power_range must be (lo, hi) with lo <= hi")
        if self.penalty_rounds < 1:
            errors.append("penalty_rounds must be at least 1")
        if self.active_margin < 0 or not 0 < self.margin_decay <= 1:
            errors.append("active_margin must be >= 0 and margin_decay in (0, 1]")
        if not self.damping > 0:
            errors.append("damping must be positive")
        if self.threads < 1:
            errors.append("threads must be at least 1")
        if errors:
            raise ValueError("; ".join(errors))


@dataclass
class NesterovRun:
    x_best: np.ndarray
    best: float
    history: list[float]
    scores: list[float]
    iterations: int


@dataclass
class RestartSummary:
    index: int
    x0: np.ndarray
    best_powers: np.ndarray | None
    best: float
    history: list[float]
    iterations: int
    final_rho: float
    diverged: bool = False
    message: str = ""


@dataclass
class OptimizationResult:
    best_powers: np.ndarray
    f_history: list[float]
    raw_cost: float
    raw_degradation: float
    raw_f: float
    penalty: float
    penalized: float
    feasible: bool
    max_violation: float
    restart_index: int
    iterations: int
    restarts: list[RestartSummary] = field(default_factory=list)


def central_diff_gradient(f: Callable, x, h: float, batched: bool = False) -> np.ndarray:
    """Central-difference gradient of ``f`` at ``x``.

    With ``batched=True`` ``f`` receives all 2n probe points as one (2n, n) array
    and must return n-by-2 values in row order.
    """
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    x = np.asarray(x, dtype=float)
    n = x.size
    offsets = h * np.eye(n)
    probes = np.vstack([x + offsets, x - offsets])
    if batched:
        values = np.asarray(f(probes), dtype=float)
    else:
        values = np.array([f(p) for p in probes], dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0]) % n
        raise ValueError(f"objective is not finite at the probe along coordinate {i}")
    return (values[:n] - values[n:]) / (2.0 * h)


def nesterov_minimize(f: Callable, x0, cfg: OptimizerConfig, *, curvature: Callable | None = None,
                      score: Callable | None = None, batched: bool = False,
                      divergence_limit: float = DIVERGENCE_LIMIT) -> NesterovRun:
    """Nesterov momentum descent with central-difference gradients.

    Update: ``v <- momentum * v - step``, ``x <- x + v`` where the step uses the
    gradient at the look-ahead point ``x + momentum * v``. Without ``curvature``
    the step is ``step_size * grad``; with it the step solves
    ``(I / step_size + curvature(y)) step = grad``.

    The best iterate is tracked by ``score`` (defaults to ``f``). Stops early once
    the velocity falls below 1e-9 in every coordinate. Raises
    :class:`DivergenceError` when ``f`` exceeds ``divergence_limit``.
    """
    x = np.array(x0, dtype=float).reshape(-1)
    n = x.size
    alpha, beta = cfg.step_size, cfg.momentum
    evaluate_f = (lambda z: float(f(z[None, :])[0])) if batched else (lambda z: float(f(z)))
    score = score or evaluate_f

    v = np.zeros(n)
    x_best, best = x.copy(), score(x)
    history: list[float] = []
    scores: list[float] = []
    iterations = 0
    for k in range(cfg.max_iters):
        y = x + beta * v
        g = central_diff_gradient(f, y, cfg.fd_step, batched=batched)
        if curvature is None:
            step = alpha * g
        else:
            step = np.linalg.solve(np.eye(n) / alpha + curvature(y), g)
        v = beta * v - step
        x = x + v
        iterations = k + 1

        fx = evaluate_f(x)
        if not np.isfinite(fx) or fx > divergence_limit:
            raise DivergenceError(iterations, fx, x_best)
        history.append(fx)
        s = fx if score is evaluate_f else score(x)
        scores.append(s)
        if s < best:
            best, x_best = s, x.copy()
        if np.max(np.abs(v)) < STALL_TOL:
            break
    return NesterovRun(x_best, best, history, scores, iterations)


def _penalty_ladder(rho: float, rounds: int) -> list[float]:
    return [rho * 10.0 ** (k - rounds + 1) for k in range(rounds)]


def _run_restart(index: int, cfg: ObjectiveConfig, opt: OptimizerConfig, scale: float) -> RestartSummary:
    rng = np.random.default_rng([opt.seed, index])
    lo, hi = opt.init_power_range
    x0 = rng.uniform(lo, hi, cfg.horizon)

    def target(z):
        ev = evaluate(z, cfg)
        return ev.f + cfg.rho * ev.penalty

    x = x0.copy()
    best_x, best = x0.copy(), float(target(x0))
    history: list[float] = []
    iterations = 0
    rhos = _penalty_ladder(cfg.rho, opt.penalty_rounds) if cfg.rho > 0 else [0.0]
    margin = opt.active_margin
    round_opt = replace(opt, max_iters=-(-opt.max_iters // opt.penalty_rounds))
    k = 0
    while True:
        rho_k = rhos[k] if k < len(rhos) else rhos[-1] * 10.0 ** (k - len(rhos) + 1)

        def f_k(X, rho_k=rho_k):
            ev = evaluate(X, cfg)
            return (ev.f + rho_k * ev.penalty) / scale

        weight = rho_k / (scale * opt.damping)

        # The band must cover the finite-difference probes or they see penalty
        # terms the damping ignores.
        soc_margin = max(margin, 2.0 * opt.fd_step * cfg.params.soc_per_watt)
        power_margin = soc_margin / cfg.params.soc_per_watt

        def curvature(y, weight=weight, soc_margin=soc_margin, power_margin=power_margin):
            return weight * penalty_curvature(y, cfg, soc_margin, power_margin)

        try:
            run = nesterov_minimize(f_k, x, round_opt, curvature=curvature if rho_k > 0 else None,
                                    score=target, batched=True,
                                    divergence_limit=DIVERGENCE_LIMIT / scale)
        except DivergenceError as exc:
            iterations += exc.iteration
            log.warning("restart %d diverged in penalty round %d: %s", index, k, exc)
            # A later round blowing up does not invalidate the best point already found.
            return RestartSummary(index, x0, best_x, best, history, iterations, rho_k,
                                  diverged=k == 0, message=f"penalty round {k}: {exc}")
        history.extend(run.scores)
        iterations += run.iterations
        if run.best < best:
            best, best_x = run.best, run.x_best
        x = run.x_best.copy()
        margin *= opt.margin_decay
        k += 1
        if k < len(rhos):
            continue
        # Past the configured rho: escalate only while the best point is infeasible.
        if is_feasible(best_x, cfg) or rho_k * 10.0 > MAX_RHO or rho_k == 0:
            break
    return RestartSummary(index, x0, best_x, best, history, iterations, rho_k)


def optimize_schedule(cfg: ObjectiveConfig, opt: OptimizerConfig | None = None) -> OptimizationResult:
    """Minimize the penalized objective from ``opt.n_restarts`` seeded random starts.

    Restart ``r`` draws its start from ``numpy.random.default_rng([seed, r])`` so
    results do not depend on ``threads``. The best restart is chosen by the
    penalized objective at ``cfg.rho``; ties go to the lower restart index.
    """
    opt = opt or OptimizerConfig()
    scale = gradient_scale(cfg)
    indices = range(opt.n_restarts)
    if opt.threads > 1:
        with ThreadPoolExecutor(max_workers=opt.threads) as pool:
            summaries = list(pool.map(lambda r: _run_restart(r, cfg, opt, scale), indices))
    else:
        summaries = [_run_restart(r, cfg, opt, scale) for r in indices]

    usable = [s for s in summaries if not s.diverged]
    if not usable:
        raise OptimizationError(
            "all restarts diverged",
            [{"restart": s.index, "iterations": s.iterations, "rho": s.final_rho, "message": s.message}
             for s in summaries],
        )
    winner = min(usable, key=lambda s: (s.best, s.index))
    powers = winner.best_powers
    ev = evaluate(powers, cfg)
    return OptimizationResult(
        best_powers=powers,
        f_history=winner.history,
        raw_cost=ev.cost,
        raw_degradation=ev.degradation,
        raw_f=ev.f,
        penalty=ev.penalty,
        penalized=ev.f + cfg.rho * ev.penalty,
        feasible=is_feasible(powers, cfg),
        max_violation=max_violation(powers, cfg),
        restart_index=winner.index,
        iterations=sum(s.iterations for s in summaries),
        restarts=summaries,
    )
