"""Acceptance criteria, one marked group per criterion.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import csv
import time
from importlib import resources

import numpy as np
import pytest

from battsched.battery import Schedule, combine_degradation, default_curve, psi, simulate_soc
from battsched.cli import main
from battsched.cost import EfficiencyParams, PriceScenario, total_cost
from battsched.forecast import HourlySeries, KernelParams, gp_posterior, locally_periodic_kernel
from battsched.objective import ObjectiveConfig
from battsched.optimizer import OptimizerConfig, optimize_schedule
from battsched.pareto import non_dominated, sweep, weight_grid

import oracles

criterion = pytest.mark.criterion


def bundled_knots():
    ref = resources.files("battsched.data").joinpath("synthetic_curve.csv")
    with ref.open() as fh:
        return [(float(r["soc_percent"]), float(r["cumulative_degradation"])) for r in csv.DictReader(fh)]


@pytest.fixture(scope="module")
def curve():
    return default_curve()


@criterion(1, "degradation-only endpoint idles (max|P| <= 1e-3 W, D <= 1e-6, <= 60 s)")
@pytest.mark.parametrize("soc_0", [0.0, 25.0, 50.0, 75.0, 100.0])
def test_degradation_only_endpoint(curve, soc_0):
    cfg = ObjectiveConfig(PriceScenario(np.full(12, 0.10)), curve, soc_0, w_c=0.0)
    opt = OptimizerConfig(max_iters=1000, n_restarts=5)
    start = time.perf_counter()
    res = optimize_schedule(cfg, opt)
    elapsed = time.perf_counter() - start
    assert np.max(np.abs(res.best_powers)) <= 1e-3
    assert res.raw_degradation <= 1e-6
    assert elapsed <= 60.0


@criterion(2, "cost-only endpoint fully discharges from 100% with no charging")
def test_cost_only_endpoint(curve):
    lam, eta = 0.10, 0.95
    cfg = ObjectiveConfig(PriceScenario(np.full(12, lam)), curve, 100.0, w_c=1.0)
    res = optimize_schedule(cfg, OptimizerConfig())
    p = res.best_powers
    final_soc = simulate_soc(Schedule(100.0, p), cfg.params).values[-1]
    assert final_soc <= 1.0
    assert np.max(p) <= 1e-3
    discharged_wh = np.sum(np.maximum(-p, 0.0)) * cfg.params.delta_t
    assert -res.raw_cost == pytest.approx(eta * lam * discharged_wh / 1000.0, abs=1e-6)


@criterion(3, "round trip [+5, -5] W at 0.10 $/kWh costs 5.132e-5 $")
def test_round_trip_loss(curve):
    params = ObjectiveConfig(PriceScenario([0.1]), curve, 50).params
    c = total_cost(Schedule(50.0, [5.0, -5.0]), PriceScenario([0.10, 0.10]), EfficiencyParams(0.95), params)
    assert c > 0
    assert abs(c - 5.132e-5) <= 1e-9


@criterion(4, "two-square degradation form equals the product within 4 ulps (10k pairs)")
def test_degradation_identity():
    d, p = np.random.default_rng(2024).uniform(0.0, 5.0, (2, 10_000))
    two_square = combine_degradation(d, p)
    product = d * p
    assert np.all(np.abs(two_square - product) <= 4 * np.spacing(product))


@criterion(5, "psi anchors psi(0)=0, psi(1)=1, psi(2)=1.2956; continuous at 1C")
def test_psi_anchors():
    assert psi(0.0) == 0.0
    assert psi(1.0) == 1.0
    assert psi(2.0) == 1.2956
    eps = 1e-13
    assert abs(psi(1.0 - eps) - psi(1.0 + eps)) <= 1e-12
    assert abs(psi(np.nextafter(1.0, 2.0)) - 1.0) <= 1e-12


@criterion(6, "T=2 optimizer within 1e-3 of the 41x41 brute-force minimum in >= 9/10 runs")
def test_brute_force_oracle(curve):
    knots = bundled_knots()
    hits = 0
    for run in range(10):
        rng = np.random.default_rng(600 + run)
        prices = rng.uniform(0.02, 0.5, 2)
        soc_0 = rng.uniform(0.0, 100.0)
        w_c = rng.uniform(0.0, 1.0)
        best, _ = oracles.brute_force(soc_0, list(prices), w_c, knots)
        cfg = ObjectiveConfig(PriceScenario(prices), curve, soc_0, w_c)
        res = optimize_schedule(cfg, OptimizerConfig(seed=run))
        mine = oracles.penalized(list(res.best_powers), soc_0, prices, w_c, knots)
        assert mine == pytest.approx(res.penalized, rel=1e-9, abs=1e-12)
        hits += mine <= best + 1e-3
    assert hits >= 9


@criterion(7, "central differences match 20 random 12-variable cubics (rel err <= 1e-6 at h=1e-4)")
def test_gradient_oracle():
    from battsched.optimizer import central_diff_gradient
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(20):
        f = oracles.Cubic(rng, 12)
        x = rng.uniform(-1.0, 1.0, 12)
        g = f.grad(x)
        err = np.max(np.abs(central_diff_gradient(f, x, 1e-4) - g)) / np.max(np.abs(g))
        worst = max(worst, err)
    assert worst <= 1e-6


@criterion(8, "GP interpolates 72 h periodic history; lag-48 variance >= 0.9 sigma^2")
def test_gp_interpolation():
    kp = KernelParams()
    t = np.arange(72)
    e = 50000 + 10000 * np.sin(2 * np.pi * t / 24)
    history = HourlySeries(t, e)
    held_in = gp_posterior(history, t, kp)
    assert np.max(np.abs(held_in.mean - e)) <= 1e-3 * kp.sigma
    ahead = gp_posterior(history, [t[-1] + 48], kp)
    assert ahead.variance[0] >= 0.9 * kp.sigma**2


@criterion(9, "kernel k(x,x)=1e6 and k(24 h lag)=1e6*exp(-0.5)")
def test_kernel_values():
    kp = KernelParams(l_exp=24.0, l_per=3.0 / 7.0, rho_period=24.0, sigma=1000.0)
    assert locally_periodic_kernel(10.0, 10.0, kp) == pytest.approx(1e6, rel=1e-12)
    assert locally_periodic_kernel(10.0, 34.0, kp) == pytest.approx(1e6 * np.exp(-0.5), rel=1e-6)


@criterion(10, "21-weight frontier: w_c=1 cheaper and more degrading than w_c=0; filter idempotent; <= 20 min")
def test_frontier_sanity(curve):
    prices = np.random.default_rng(10).uniform(0.02, 0.5, 12)
    cfg = ObjectiveConfig(PriceScenario(prices), curve, 50.0)
    start = time.perf_counter()
    points = sweep(weight_grid(21), cfg, OptimizerConfig(seed=1))
    elapsed = time.perf_counter() - start
    assert len(points) == 21 and not any(p.failed for p in points)
    front = non_dominated(points)
    assert front and non_dominated(front) == front
    w0, w1 = points[0], points[-1]
    assert (w0.w_c, w1.w_c) == (0.0, 1.0)
    assert w1.cost < w0.cost
    assert w1.degradation > w0.degradation
    assert elapsed <= 20 * 60


@criterion(11, "identical seeds give byte-identical schedule and frontier CSVs")
def test_determinism(tmp_path, capsys):
    def go(tag):
        out = tmp_path / tag
        common = ["--experiment", "varied", "--random-prices", "0.02", "0.5", "--seed", "21", "--threads", "1"]
        assert main(["optimize", "--wc", "0.7", *common, "--out", str(out)]) == 0
        assert main(["sweep", "--wc-grid", "6", *common, "--out", str(out)]) == 0
        capsys.readouterr()
        return (out / "schedule.csv").read_bytes(), (out / "frontier.csv").read_bytes()

    assert go("first") == go("second")
