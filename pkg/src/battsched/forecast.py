"""Gaussian-process forecast of hourly energy usage, converted to prices.

The prior mean is seasonal (average of past values at the same hour of day)
and the covariance is a locally periodic kernel: a daily periodic factor damped
by a squared exponential in the lag. Hour indices are absolute; hour of day is
``hour % 24`` with no assumption that hour 0 is midnight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from battsched.cost import PriceScenario

HOURS_PER_DAY = 24
PRICE_SCALE = 80000.0  # MW per $/kWh
JITTER = 1e-6  # relative to the prior variance
MAX_JITTER_ESCALATIONS = 3


@dataclass(frozen=True, eq=False)
class HourlySeries:
    hours: np.ndarray
    values: np.ndarray  # MW

    def __post_init__(self) -> None:
        hours = np.array(self.hours).reshape(-1)
        values = np.array(self.values, dtype=float).reshape(-1)
        if hours.size < 1 or hours.shape != values.shape:
            raise ValueError("hours and values must be non-empty and of equal length")
        if not np.all(hours == np.round(hours)):
            raise ValueError("hours must be integers")
        hours = hours.astype(np.int64)
        if np.any(np.diff(hours) <= 0):
            raise ValueError("hours must be strictly increasing")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("usage values must be finite and non-negative")
        hours.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "hours", hours)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.hours.size

    def tail(self, m: int) -> HourlySeries:
        return HourlySeries(self.hours[-m:], self.values[-m:])


@dataclass(frozen=True)
class KernelParams:
    l_exp: float = 24.0  # h
    l_per: float = 3.0 / 7.0
    rho_period: float = 24.0  # h
    sigma: float = 1000.0  # MW

    def __post_init__(self) -> None:
        bad = [n for n in ("l_exp", "l_per", "rho_period", "sigma") if not getattr(self, n) > 0]
        if bad:
            raise ValueError(f"kernel parameters must be positive: {', '.join(bad)}")

    @property
    def jitter(self) -> float:
        return JITTER * self.sigma**2


@dataclass(frozen=True, eq=False)
class GpPosterior:
    mean: np.ndarray
    covariance: np.ndarray
    target_hours: np.ndarray
    jitter: float = 0.0

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.covariance).copy()


@dataclass(frozen=True)
class ConsumerPolicy:
    kind: str = "mean"  # "mean" or "risk_averse"
    n_samples: int = 10
    poly_degree: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        errors = []
        if self.kind not in ("mean", "risk_averse"):
            errors.append(f"kind must be 'mean' or 'risk_averse', got {self.kind!r}")
        if self.n_samples < 1:
            errors.append("n_samples must be at least 1")
        if self.poly_degree < 0:
            errors.append("poly_degree must be non-negative")
        if errors:
            raise ValueError("; ".join(errors))


def locally_periodic_kernel(x, x2, kp: KernelParams):
    """Covariance (MW^2) between hours ``x`` and ``x2``; broadcasts like numpy."""
    lag = np.abs(np.asarray(x, dtype=float) - np.asarray(x2, dtype=float))
    periodic = np.exp(-2.0 * np.sin(np.pi * lag / kp.rho_period) ** 2 / kp.l_per**2)
    decay = np.exp(-(lag**2) / (2.0 * kp.l_exp**2))
    return kp.sigma**2 * periodic * decay


def gram(a, b, kp: KernelParams) -> np.ndarray:
    return locally_periodic_kernel(np.asarray(a)[:, None], np.asarray(b)[None, :], kp)


def seasonal_mean(history: HourlySeries, query_hours):
    """Mean of past values at the same hour of day; global mean if none match."""
    q = np.asarray(query_hours)
    slots = history.hours % HOURS_PER_DAY
    table = np.full(HOURS_PER_DAY, history.values.mean())
    for h in np.unique(slots):
        table[h] = history.values[slots == h].mean()
    out = table[np.asarray(q % HOURS_PER_DAY, dtype=np.int64)]
    return out if out.ndim else float(out)


def _cholesky(matrix: np.ndarray, jitter: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``matrix + jitter * I``, raising jitter 10x on failure."""
    eye = np.eye(matrix.shape[0])
    for _ in range(MAX_JITTER_ESCALATIONS + 1):
        try:
            return linalg.cholesky(matrix + jitter * eye, lower=True), jitter
        except linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError(
        f"matrix is not positive definite even with jitter {jitter / 10.0:.3g}")


def gp_posterior(history: HourlySeries, target_hours, kp: KernelParams | None = None,
                 noise: float | None = None) -> GpPosterior:
    """Condition the GP on ``history`` and predict at ``target_hours``.

    ``noise`` is the diagonal term added to the training Gram matrix (MW^2);
    it defaults to the numerical jitter of 1e-6 sigma^2.
    """
    kp = kp or KernelParams()
    if len(history) < 2:
        raise ValueError("the posterior needs at least 2 history points")
    h = history.hours.astype(float)
    t = np.asarray(target_hours, dtype=float).reshape(-1)
    noise = kp.jitter if noise is None else noise

    chol, _ = _cholesky(gram(h, h, kp), noise)
    cross = gram(t, h, kp)
    residual = history.values - seasonal_mean(history, history.hours)
    mean = seasonal_mean(history, t.astype(np.int64)) + cross @ linalg.cho_solve((chol, True), residual)
    w = linalg.solve_triangular(chol, cross.T, lower=True)
    cov = gram(t, t, kp) - w.T @ w
    cov = 0.5 * (cov + cov.T)
    for a in (mean, cov, t):
        a.flags.writeable = False
    return GpPosterior(mean, cov, t, kp.jitter)


def sample_posterior(post: GpPosterior, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` trajectories ``mu + L z``, shape (n, len(mu))."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, post.mean.size))
    if not np.any(post.covariance):
        return np.tile(post.mean, (n, 1))
    chol, _ = _cholesky(post.covariance, post.jitter)
    return post.mean + z @ chol.T


def smooth_sample(hours, raw, degree: int) -> np.ndarray:
    """Least-squares polynomial fit of ``raw`` evaluated at ``hours``.

    Works on a single series (T,) or a batch (n, T). Uses a Chebyshev basis on
    hours mapped to [-1, 1].
    """
    hours = np.asarray(hours, dtype=float).reshape(-1)
    raw = np.asarray(raw, dtype=float)
    if degree < 0 or degree >= hours.size:
        raise ValueError(f"degree must lie in [0, {hours.size - 1}], got {degree}")
    span = hours.max() - hours.min()
    x = 2.0 * (hours - hours.min()) / span - 1.0 if span > 0 else np.zeros_like(hours)
    basis = np.polynomial.chebyshev.chebvander(x, degree)
    coef, _, rank, _ = np.linalg.lstsq(basis, raw.T, rcond=None)
    if rank < degree + 1:
        raise np.linalg.LinAlgError(f"polynomial fit is rank deficient ({rank} < {degree + 1})")
    return (basis @ coef).T


def usage_to_price(usage, label: str = "") -> PriceScenario:
    return PriceScenario(np.asarray(usage, dtype=float) / PRICE_SCALE, label=label)


def worst_case_index(price_samples) -> int:
    """Index of the sample with the largest total price (first one on ties)."""
    return int(np.argmax(np.sum(np.asarray(price_samples), axis=-1)))


def select_scenario(post: GpPosterior, policy: ConsumerPolicy, samples=None) -> PriceScenario:
    """Price scenario for the consumer type.

    ``samples`` (MW, shape (n, T)) replaces the random draws when given.
    """
    hours = post.target_hours
    if policy.poly_degree >= hours.size:
        raise ValueError(f"poly_degree {policy.poly_degree} must be below the horizon {hours.size}")
    if policy.kind == "mean":
        return usage_to_price(smooth_sample(hours, post.mean, policy.poly_degree), label="mean")
    if samples is None:
        samples = sample_posterior(post, policy.n_samples, policy.seed)
    smoothed = smooth_sample(hours, np.atleast_2d(samples), policy.poly_degree)
    prices = smoothed / PRICE_SCALE
    k = worst_case_index(prices)
    return PriceScenario(prices[k], label=f"risk_averse sample {k}")


def forecast_window(history: HourlySeries, window: int = 72, horizon: int = 24,
                    kp: KernelParams | None = None) -> GpPosterior:
    """Posterior for the ``horizon`` hours following the last ``window`` history points."""
    if window < 2 or horizon < 1:
        raise ValueError("window must be at least 2 and horizon at least 1")
    if len(history) < window:
        raise ValueError(f"history has {len(history)} points, the window needs {window}")
    recent = history.tail(window)
    start = recent.hours[-1] + 1
    return gp_posterior(recent, np.arange(start, start + horizon), kp)
