"""Command-line entry point: ``battsched {optimize,sweep,forecast,validate}``.

Outputs are plain CSV/JSON files in ``--out``. Failures print a JSON object to
stderr and exit nonzero (2 for bad input or configuration, 1 for solver failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from battsched.battery import BatteryParams, DegradationCurve, Schedule, default_curve, simulate_soc
from battsched.cost import EfficiencyParams, PriceScenario
from battsched.forecast import ConsumerPolicy, forecast_window, sample_posterior, select_scenario
from battsched.ingest import SCHEDULE_HEADER, IngestError, ingest_curve, ingest_history, ingest_prices
from battsched.objective import ObjectiveConfig
from battsched.optimizer import OptimizationError, OptimizerConfig, optimize_schedule
from battsched.pareto import non_dominated, sweep, weight_grid, write_frontier_csv

log = logging.getLogger("battsched")

CURVE_ENV = "BATTSCHED_CURVE"
HORIZON_RANGE = (12, 48)
DEFAULT_HORIZON = {"constant": 12, "varied": 12, "predicted": 24}
DEFAULT_PRICE = 0.10  # $/kWh

# Stream keys that keep the price draw and the forecast samples independent of
# the optimizer's restart streams, which all hang off the same master seed.
PRICE_STREAM = 1
FORECAST_STREAM = 2


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class RunConfig:
    command: str
    experiment: str
    soc0: float
    horizon: int | None
    wc: float
    wc_grid: tuple[float, ...]
    price: str | None
    const_price: float | None
    random_prices: tuple[float, float] | None
    history: str | None
    window: int
    policy: str
    n_samples: int
    poly_degree: int
    curve: str | None
    eta: float
    rho: float
    alpha: float
    beta: float
    fd_step: float
    iters: int
    restarts: int
    seed: int
    threads: int
    out: str
    allow_gaps: bool

    @property
    def resolved_horizon(self) -> int:
        if self.horizon is not None:
            return self.horizon
        return DEFAULT_HORIZON["predicted" if self.command == "forecast" else self.experiment]

    def validate(self) -> None:
        """Raise :class:`ConfigError` listing every problem found."""
        errors = []
        sources = {"--price": self.price, "--const-price": self.const_price,
                   "--random-prices": self.random_prices, "--history": self.history}
        given = sorted(k for k, v in sources.items() if v is not None)
        allowed = {"constant": {"--const-price"}, "varied": {"--price", "--random-prices"},
                   "predicted": {"--history"}}[self.experiment]
        solving = self.command in ("optimize", "sweep")
        stray = [k for k in given if k not in allowed]
        if solving and stray:
            errors.append(f"--experiment {self.experiment} does not take {', '.join(stray)}")
        if solving and self.experiment == "varied" and len([k for k in given if k in allowed]) != 1:
            errors.append("--experiment varied needs exactly one of --price or --random-prices")
        if solving and self.experiment == "predicted" and self.history is None:
            errors.append("--experiment predicted needs --history")
        if self.command == "forecast" and self.history is None:
            errors.append("forecast needs --history")
        lo, hi = HORIZON_RANGE
        if self.horizon is not None and not lo <= self.horizon <= hi:
            errors.append(f"--horizon must lie in [{lo}, {hi}], got {self.horizon}")
        if not 0.0 <= self.soc0 <= 100.0:
            errors.append(f"--soc0 must lie in [0, 100], got {self.soc0}")
        if not 0.0 <= self.wc <= 1.0:
            errors.append(f"--wc must lie in [0, 1], got {self.wc}")
        if not self.wc_grid or any(not 0.0 <= w <= 1.0 for w in self.wc_grid):
            errors.append("--wc-grid weights must lie in [0, 1]")
        if self.const_price is not None and not np.isfinite(self.const_price):
            errors.append("--const-price must be finite")
        if self.random_prices is not None and not self.random_prices[0] <= self.random_prices[1]:
            errors.append("--random-prices needs lo <= hi")
        if self.window < 2:
            errors.append("--window must be at least 2")
        if self.n_samples < 1:
            errors.append("--n-samples must be at least 1")
        uses_forecast = self.experiment == "predicted" or self.command == "forecast"
        if uses_forecast and not 0 <= self.poly_degree < self.resolved_horizon:
            errors.append(f"--poly-degree must lie in [0, horizon), got {self.poly_degree}")
        if not 0.0 < self.eta <= 1.0:
            errors.append(f"--eta must lie in (0, 1], got {self.eta}")
        if not self.rho >= 0:
            errors.append(f"--rho must be non-negative, got {self.rho}")
        if not self.alpha > 0:
            errors.append(f"--alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.beta < 1.0:
            errors.append(f"--beta must lie in [0, 1), got {self.beta}")
        if not self.fd_step > 0:
            errors.append(f"--fd-step must be positive, got {self.fd_step}")
        if self.iters < 1:
            errors.append("--iters must be at least 1")
        if self.restarts < 1:
            errors.append("--restarts must be at least 1")
        if self.threads < 1:
            errors.append("--threads must be at least 1")
        if errors:
            raise ConfigError(errors)

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(step_size=self.alpha, momentum=self.beta, fd_step=self.fd_step,
                               max_iters=self.iters, n_restarts=self.restarts, seed=self.seed,
                               threads=self.threads)

    def echo(self) -> dict:
        out = asdict(self)
        out["horizon"] = self.resolved_horizon
        return out


def _weights(text: str) -> tuple[float, ...]:
    """``N`` for N evenly spaced weights, or a comma-separated list."""
    try:
        if "," not in text and "." not in text:
            return tuple(float(w) for w in weight_grid(int(text)))
        return tuple(float(w) for w in text.split(",") if w.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a weight count or list: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--experiment", choices=["constant", "varied", "predicted"], default="constant")
    common.add_argument("--soc0", type=float, default=50.0, help="initial SOC in percent")
    common.add_argument("--horizon", type=int, help="hours (default 12, or 24 for predicted)")
    common.add_argument("--wc", type=float, default=0.5, help="cost weight for optimize")
    common.add_argument("--wc-grid", type=_weights, default=_weights("21"),
                        help="sweep weights: a count or a comma-separated list")
    src = common.add_argument_group("price source")
    src.add_argument("--price", help="CSV with hour,price_usd_per_kwh")
    src.add_argument("--const-price", type=float, help=f"$/kWh (default {DEFAULT_PRICE})")
    src.add_argument("--random-prices", type=float, nargs=2, metavar=("LO", "HI"),
                     help="seeded uniform prices in [LO, HI] $/kWh")
    src.add_argument("--history", help="CSV with datetime,mw usage history")
    fc = common.add_argument_group("forecast")
    fc.add_argument("--window", type=int, default=72, help="history hours used by the GP")
    fc.add_argument("--policy", choices=["mean", "risk-averse"], default="mean")
    fc.add_argument("--n-samples", type=int, default=10)
    fc.add_argument("--poly-degree", type=int, default=8)
    fc.add_argument("--allow-gaps", action="store_true", help="skip missing hours in --history")
    model = common.add_argument_group("model")
    model.add_argument("--curve", default=os.environ.get(CURVE_ENV),
                       help=f"degradation curve CSV (default ${CURVE_ENV}, else the bundled synthetic curve)")
    model.add_argument("--eta", type=float, default=0.95)
    model.add_argument("--rho", type=float, default=1000.0)
    opt = common.add_argument_group("optimizer")
    defaults = OptimizerConfig()
    opt.add_argument("--alpha", type=float, default=defaults.step_size)
    opt.add_argument("--beta", type=float, default=defaults.momentum)
    opt.add_argument("--fd-step", type=float, default=defaults.fd_step)
    opt.add_argument("--iters", type=int, default=defaults.max_iters)
    opt.add_argument("--restarts", type=int, default=defaults.n_restarts)
    opt.add_argument("--seed", type=int, default=0)
    opt.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="battsched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("optimize", parents=[common], help="optimize one schedule")
    sub.add_parser("sweep", parents=[common], help="sweep the cost weight and write the frontier")
    sub.add_parser("forecast", parents=[common], help="write the GP forecast and samples")
    sub.add_parser("validate", parents=[common], help="check input files and settings only")
    return parser


def run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=args.command, experiment=args.experiment, soc0=args.soc0, horizon=args.horizon,
        wc=args.wc, wc_grid=tuple(args.wc_grid), price=args.price, const_price=args.const_price,
        random_prices=tuple(args.random_prices) if args.random_prices else None,
        history=args.history, window=args.window, policy=args.policy.replace("-", "_"),
        n_samples=args.n_samples, poly_degree=args.poly_degree, curve=args.curve, eta=args.eta,
        rho=args.rho, alpha=args.alpha, beta=args.beta, fd_step=args.fd_step, iters=args.iters,
        restarts=args.restarts, seed=args.seed, threads=args.threads, out=args.out,
        allow_gaps=args.allow_gaps,
    )


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def load_curve(rc: RunConfig) -> DegradationCurve:
    return ingest_curve(rc.curve) if rc.curve else default_curve()


def forecast_posterior(rc: RunConfig):
    history = ingest_history(rc.history, allow_gaps=rc.allow_gaps)
    return forecast_window(history, rc.window, rc.resolved_horizon)


def forecast_policy(rc: RunConfig) -> ConsumerPolicy:
    seed = int(_stream(rc.seed, FORECAST_STREAM).integers(2**63))
    return ConsumerPolicy(rc.policy, rc.n_samples, rc.poly_degree, seed)


def resolve_prices(rc: RunConfig) -> PriceScenario:
    T = rc.resolved_horizon
    if rc.experiment == "constant":
        price = DEFAULT_PRICE if rc.const_price is None else rc.const_price
        return PriceScenario(np.full(T, price), label="constant")
    if rc.experiment == "varied" and rc.price is not None:
        scenario = ingest_prices(rc.price)
        if rc.horizon is not None and len(scenario) != rc.horizon:
            raise ConfigError([f"{rc.price} has {len(scenario)} hours but --horizon is {rc.horizon}"])
        lo, hi = HORIZON_RANGE
        if not lo <= len(scenario) <= hi:
            raise ConfigError([f"{rc.price} has {len(scenario)} hours; the horizon must lie in [{lo}, {hi}]"])
        return scenario
    if rc.experiment == "varied":
        lo, hi = rc.random_prices
        return PriceScenario(_stream(rc.seed, PRICE_STREAM).uniform(lo, hi, T), label="random")
    return select_scenario(forecast_posterior(rc), forecast_policy(rc))


def objective_config(rc: RunConfig, scenario: PriceScenario, curve: DegradationCurve) -> ObjectiveConfig:
    return ObjectiveConfig(scenario, curve, rc.soc0, rc.wc, rc.rho, BatteryParams(), EfficiencyParams(rc.eta))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_schedule_csv(path, schedule: Schedule, scenario: PriceScenario, params: BatteryParams) -> None:
    """One row per interval; ``soc_percent`` is the SOC at the end of the interval."""
    soc = simulate_soc(schedule, params).values[1:]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SCHEDULE_HEADER)
        for t, (p, s, lam) in enumerate(zip(schedule.powers, soc, scenario.prices)):
            writer.writerow([t, _fmt(p), _fmt(s), _fmt(lam)])


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_optimize(rc: RunConfig, out: Path) -> dict:
    curve = load_curve(rc)
    scenario = resolve_prices(rc)
    cfg = objective_config(rc, scenario, curve)
    res = optimize_schedule(cfg, rc.optimizer())
    schedule = Schedule(rc.soc0, res.best_powers)
    write_schedule_csv(out / "schedule.csv", schedule, scenario, cfg.params)
    summary = {
        "f": res.raw_f, "cost_usd": res.raw_cost, "degradation": res.raw_degradation,
        "penalty": res.penalty, "penalized": res.penalized, "feasible": res.feasible,
        "max_violation": res.max_violation, "iterations": res.iterations,
        "restart_index": res.restart_index, "seed": rc.seed,
        "final_soc_percent": float(simulate_soc(schedule, cfg.params).values[-1]),
        "diverged_restarts": [s.index for s in res.restarts if s.message],
        "prices_usd_per_kwh": scenario.prices.tolist(), "curve": curve.source,
        "config": rc.echo(),
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_sweep(rc: RunConfig, out: Path) -> dict:
    curve = load_curve(rc)
    scenario = resolve_prices(rc)
    cfg = objective_config(rc, scenario, curve)
    # Threads go to the weights; each optimization then runs its restarts in order.
    opt = rc.optimizer()
    points = sweep(rc.wc_grid, cfg, OptimizerConfig(**{**asdict(opt), "threads": 1}), threads=rc.threads)
    write_frontier_csv(out / "frontier.csv", points)
    with open(out / "schedules.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("w_c",) + SCHEDULE_HEADER)
        for p in points:
            if p.failed:
                continue
            soc = simulate_soc(Schedule(rc.soc0, p.schedule), cfg.params).values[1:]
            for t, (pw, s, lam) in enumerate(zip(p.schedule, soc, scenario.prices)):
                writer.writerow([_fmt(p.w_c), t, _fmt(pw), _fmt(s), _fmt(lam)])
    front = non_dominated(points)
    summary = {
        "points": [{"w_c": p.w_c, "cost_usd": p.cost, "degradation": p.degradation,
                    "feasible": p.feasible, "error": p.error} for p in points],
        "frontier_w_c": [p.w_c for p in front],
        "failed": sum(p.failed for p in points), "seed": rc.seed,
        "prices_usd_per_kwh": scenario.prices.tolist(), "curve": curve.source,
        "config": rc.echo(),
    }
    _write_json(out / "summary.json", summary)
    if summary["failed"] == len(points) and points:
        raise OptimizationError("every weight in the sweep failed", [p.error for p in points])
    return summary


def cmd_forecast(rc: RunConfig, out: Path) -> dict:
    post = forecast_posterior(rc)
    policy = forecast_policy(rc)
    scenario = select_scenario(post, policy)
    samples = sample_posterior(post, rc.n_samples, policy.seed)
    with open(out / "forecast.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["hour", "mean_mw", "variance_mw2", "price_usd_per_kwh"]
                        + [f"sample_{k}_mw" for k in range(rc.n_samples)])
        for t in range(post.mean.size):
            writer.writerow([int(post.target_hours[t]), _fmt(post.mean[t]), _fmt(post.covariance[t, t]),
                             _fmt(scenario.prices[t])] + [_fmt(s) for s in samples[:, t]])
    summary = {"policy": rc.policy, "scenario": scenario.label,
               "prices_usd_per_kwh": scenario.prices.tolist(), "config": rc.echo()}
    _write_json(out / "summary.json", summary)
    return summary


def cmd_validate(rc: RunConfig, out: Path) -> dict:
    checked = {"curve": load_curve(rc).source}
    if rc.price:
        checked["price"] = f"{rc.price}: {len(ingest_prices(rc.price))} hours"
    if rc.history:
        checked["history"] = f"{rc.history}: {len(ingest_history(rc.history, rc.allow_gaps))} rows"
    return {"ok": True, "checked": checked}


COMMANDS = {"optimize": cmd_optimize, "sweep": cmd_sweep, "forecast": cmd_forecast, "validate": cmd_validate}


def _fail(kind: str, message: str, code: int, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = run_config(args)
        rc.validate()
        out = Path(rc.out)
        if rc.command != "validate":
            out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[rc.command](rc, out)
    except ConfigError as exc:
        return _fail("config", str(exc), 2, errors=exc.errors)
    except IngestError as exc:
        return _fail("input", str(exc), 2, path=exc.path, row=exc.row)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail("input", f"{exc.strerror}: {exc.filename}", 2, path=str(exc.filename))
    except OptimizationError as exc:
        return _fail("optimization", str(exc), 1, diagnostics=exc.diagnostics)
    except (ValueError, np.linalg.LinAlgError) as exc:
        return _fail("input", str(exc), 2)
    print(json.dumps(result if rc.command == "validate" else
                     {k: v for k, v in result.items() if k not in ("config", "points")},
                     sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
