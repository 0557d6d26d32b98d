"""Battery physics and the empirical SOC/current degradation model.

SOC is carried in percent. ``soc_step`` never clamps: constraint violations are
left visible so the quadratic penalty can measure them. Degradation lookups
clamp SOC to [0, 100] before interpolating the cumulative curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

# Anchors of the current scaling factor: psi(1C) = 1, psi(2C) = PSI_2C.
PSI_2C = 1.2956
PSI_SLOPE_ABOVE_1C = PSI_2C - 1.0


@dataclass(frozen=True)
class BatteryParams:
    delta_t: float = 1.0  # h
    v_nom: float = 3.7  # V
    i_1c: float = 2.15  # A
    p_b_max: float = 5.0  # W
    soc_min: float = 0.0  # %
    soc_max: float = 100.0  # %

    def __post_init__(self) -> None:
        for name in ("delta_t", "v_nom", "i_1c", "p_b_max"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if self.soc_min != 0.0 or self.soc_max != 100.0:
            raise ValueError("SOC bounds are fixed to the percent scale [0, 100]")

    @property
    def one_c_power(self) -> float:
        """Battery power (W) corresponding to a 1C current."""
        return self.v_nom * self.i_1c

    @property
    def soc_per_watt(self) -> float:
        """SOC change in percent caused by one watt held for one interval."""
        return 100.0 * self.delta_t / self.one_c_power


@dataclass(frozen=True, eq=False)
class DegradationCurve:
    """Piecewise-linear cumulative degradation as a function of SOC (percent)."""

    soc: np.ndarray
    delta: np.ndarray
    source: str = field(default="<memory>", compare=False)

    def __post_init__(self) -> None:
        soc = np.array(self.soc, dtype=float)
        delta = np.array(self.delta, dtype=float)
        if soc.ndim != 1 or soc.shape != delta.shape:
            raise ValueError("soc and delta must be 1-D arrays of equal length")
        if soc.size < 2:
            raise ValueError("a degradation curve needs at least 2 knots")
        if not (np.all(np.isfinite(soc)) and np.all(np.isfinite(delta))):
            raise ValueError("curve knots must be finite")
        bad = np.flatnonzero(np.diff(soc) <= 0)
        if bad.size:
            raise ValueError(f"knot SOC values must be strictly increasing (knot {bad[0] + 1})")
        bad = np.flatnonzero(np.diff(delta) < 0)
        if bad.size:
            raise ValueError(f"cumulative degradation must be non-decreasing (knot {bad[0] + 1})")
        if np.any(delta < 0):
            raise ValueError("cumulative degradation must be non-negative")
        if soc[0] > 0.0 or soc[-1] < 100.0:
            raise ValueError("curve knots must cover the SOC range [0, 100]")
        soc.flags.writeable = False
        delta.flags.writeable = False
        object.__setattr__(self, "soc", soc)
        object.__setattr__(self, "delta", delta)

    @classmethod
    def from_knots(cls, knots, source: str = "<memory>") -> DegradationCurve:
        pairs = np.asarray(knots, dtype=float)
        return cls(pairs[:, 0], pairs[:, 1], source=source)

    def __call__(self, soc):
        """Interpolated cumulative degradation at ``soc`` (clamped to [0, 100])."""
        return np.interp(np.clip(soc, 0.0, 100.0), self.soc, self.delta)

    @property
    def max_slope(self) -> float:
        """Steepest knot-to-knot slope, in degradation per percent SOC."""
        return float(np.max(np.diff(self.delta) / np.diff(self.soc)))


def default_curve() -> DegradationCurve:
    """The bundled synthetic curve.

    It is a smooth illustrative shape (steeper toward both SOC extremes,
    delta(0) = 0, delta(100) = 1), not measured cell data. Load a measured
    curve with :func:`battsched.ingest.ingest_curve` for real studies.
    """
    from battsched.ingest import ingest_curve

    ref = resources.files("battsched.data").joinpath("synthetic_curve.csv")
    with resources.as_file(ref) as path:
        return ingest_curve(path)


@dataclass(frozen=True, eq=False)
class Schedule:
    soc_0: float
    powers: np.ndarray

    def __post_init__(self) -> None:
        powers = np.array(self.powers, dtype=float).reshape(-1)
        if powers.size < 1:
            raise ValueError("a schedule needs at least one interval")
        powers.flags.writeable = False
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "soc_0", float(self.soc_0))

    def __len__(self) -> int:
        return self.powers.size


@dataclass(frozen=True, eq=False)
class SocTrajectory:
    values: np.ndarray

    def __len__(self) -> int:
        return self.values.size


def soc_step(soc_prev, p_b, params: BatteryParams):
    """SOC after one interval at battery power ``p_b`` (positive charges)."""
    return soc_prev + params.soc_per_watt * np.asarray(p_b, dtype=float)


def soc_paths(soc_0: float, powers, params: BatteryParams) -> np.ndarray:
    """Unclamped SOC after each interval, shape (..., T), for a batch of power vectors."""
    powers = np.asarray(powers, dtype=float)
    return soc_0 + params.soc_per_watt * np.cumsum(powers, axis=-1)


def simulate_soc(schedule: Schedule, params: BatteryParams) -> SocTrajectory:
    values = np.empty(len(schedule) + 1)
    values[0] = schedule.soc_0
    soc = schedule.soc_0
    for t, p in enumerate(schedule.powers, start=1):
        soc = float(soc_step(soc, p, params))
        values[t] = soc
    values.flags.writeable = False
    return SocTrajectory(values)


def current_rate(p_b, params: BatteryParams):
    return np.abs(p_b) / params.one_c_power


def psi(i):
    """Current scaling factor: linear through (0, 0), (1, 1), (2, 1.2956).

    Beyond 2C the 1C-2C segment is extrapolated.
    """
    i = np.asarray(i, dtype=float)
    if np.any(i < 0):
        raise ValueError("current rate must be non-negative")
    out = np.where(i <= 1.0, i, 1.0 + PSI_SLOPE_ABOVE_1C * (i - 1.0))
    return out if out.ndim else float(out)


def d1c(soc_from, soc_to, curve: DegradationCurve):
    """1C-equivalent degradation of moving between two SOC levels."""
    return np.abs(curve(soc_to) - curve(soc_from))


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _two_prod(a, b):
    # Dekker's product: p + e == a * b exactly (no FMA needed).
    p = a * b
    c = 134217729.0 * a  # 2**27 + 1
    ah = c - (c - a)
    c = 134217729.0 * b
    bh = c - (c - b)
    al, bl = a - ah, b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def combine_degradation(d_1c, psi_t):
    """Per-step degradation from its 1C part and current factor, as a difference of squares.

    Algebraically equal to ``d_1c * psi_t``. The squares nearly cancel when one
    factor is small, so the halves and squares are carried as double-double
    values; the result then agrees with the product to a few ulps.
    """
    d_1c = np.asarray(d_1c, dtype=float)
    psi_t = np.asarray(psi_t, dtype=float)
    a, a_lo = _two_sum(d_1c, psi_t)
    b, b_lo = _two_sum(d_1c, -psi_t)
    a, a_lo, b, b_lo = a / 2.0, a_lo / 2.0, b / 2.0, b_lo / 2.0
    a2, a2_err = _two_prod(a, a)
    b2, b2_err = _two_prod(b, b)
    s, e = _two_sum(a2, -b2)
    # Like terms are differenced first so small cross terms survive the cancellation.
    lo = (a2_err - b2_err) + 2.0 * (a * a_lo - b * b_lo) + (a_lo * a_lo - b_lo * b_lo)
    out = s + (e + lo)
    return out if out.ndim else float(out)


def step_degradation(soc_from, soc_to, p_b, curve: DegradationCurve, params: BatteryParams):
    return combine_degradation(d1c(soc_from, soc_to, curve), psi(current_rate(p_b, params)))


def degradation_paths(soc_0: float, powers, curve: DegradationCurve, params: BatteryParams) -> np.ndarray:
    """Total degradation for each power vector in a batch of shape (..., T).

    Uses the product form ``d1c * psi``; see :func:`combine_degradation`.
    """
    powers = np.asarray(powers, dtype=float)
    soc = soc_paths(soc_0, powers, params)
    lookup = curve(soc)
    start = np.broadcast_to(curve(soc_0), lookup.shape[:-1] + (1,))
    d_1c = np.abs(np.diff(np.concatenate([start, lookup], axis=-1), axis=-1))
    return np.sum(d_1c * psi(current_rate(powers, params)), axis=-1)


def total_degradation(schedule: Schedule, curve: DegradationCurve, params: BatteryParams) -> float:
    traj = simulate_soc(schedule, params).values
    steps = step_degradation(traj[:-1], traj[1:], schedule.powers, curve, params)
    return float(np.sum(steps))
