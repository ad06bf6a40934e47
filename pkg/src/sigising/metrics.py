"""Observables over signal trajectories and the damped-cosine correlation fit."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .lattice import LatticeCity, toroidal_distance_grid


@dataclass
class TrajectoryLog:
    sigma: np.ndarray  # (T+1, n) int8
    x: np.ndarray  # (T+1, n) flow bias before each decision
    H: np.ndarray  # (T+1,)
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.sigma.shape[0] - 1

    def magnetization(self) -> np.ndarray:
        return self.sigma.mean(axis=1, dtype=np.float64)


@dataclass
class CorrelationCurve:
    z: np.ndarray
    R: np.ndarray
    skipped: int = 0


@dataclass(frozen=True)
class DampedCosineFit:
    lam: float
    omega: float
    residual: float


class DegenerateSeriesError(ValueError):
    """Raised when a correlation is requested of data with no variance."""


def magnetization(sigma: np.ndarray) -> float:
    return float(np.mean(np.asarray(sigma, dtype=np.float64)))


def default_burn_in(T: int) -> int:
    return T // 4


def time_average(series: Sequence[float], burn_in: int = 0) -> float:
    """Mean of ``series[burn_in:]``."""
    series = np.asarray(series, dtype=np.float64)
    if burn_in < 0 or burn_in >= series.shape[0]:
        raise ValueError(f"empty averaging window: burn_in={burn_in}, length={series.shape[0]}")
    return math.fsum(series[burn_in:]) / (series.shape[0] - burn_in)


def temporal_autocorrelation(log, max_lag: int) -> CorrelationCurve:
    """Lagged Pearson correlation of each intersection's signal series, averaged over intersections.

    At lag tau the pairs ``(sigma_i(t), sigma_i(t + tau))`` are correlated with
    their own means and variances, so a strictly alternating series gives
    exactly -1 at odd lags. Intersections whose lagged windows have no variance
    do not contribute at that lag; ``skipped`` counts the intersections that are
    constant over the whole trajectory.
    """
    S = np.asarray(log.sigma if isinstance(log, TrajectoryLog) else log, dtype=np.float64)
    if S.ndim == 1:
        S = S[:, None]
    steps = S.shape[0]
    if max_lag < 0 or max_lag >= steps - 1:
        raise ValueError(f"max_lag must be in [0, {steps - 2}], got {max_lag}")
    live = S.std(axis=0) > 0
    if not live.any():
        raise DegenerateSeriesError("every series is constant")
    S = S[:, live]
    R = np.empty(max_lag + 1)
    for tau in range(max_lag + 1):
        a, b = S[: steps - tau], S[tau:]
        da, db = a - a.mean(axis=0), b - b.mean(axis=0)
        denom = np.sqrt((da * da).sum(axis=0) * (db * db).sum(axis=0))
        ok = denom > 0
        r = (da * db).sum(axis=0)[ok] / denom[ok]
        R[tau] = math.fsum(r) / r.size if r.size else np.nan
    return CorrelationCurve(z=np.arange(max_lag + 1, dtype=np.float64), R=R, skipped=int((~live).sum()))


def spatial_autocorrelation(
    sigma: np.ndarray,
    city: LatticeCity,
    bin_width: Optional[float] = 1.0,
    max_distance: Optional[float] = None,
) -> CorrelationCurve:
    """Radially averaged pair correlation of one signal snapshot.

    Pairs are grouped by Euclidean torus distance. With ``bin_width`` set, bin k
    spans ``[(k - 1/2) w, (k + 1/2) w)`` and z is the mean pair distance in the
    bin; with ``bin_width=None`` every distinct distance is its own point.
    Averaging over ordered pairs equals averaging over unordered ones, since
    each unordered pair appears once per direction.
    """
    L = city.L
    s = np.asarray(sigma, dtype=np.float64).reshape(L, L)
    d = s - s.mean()
    var = float(np.mean(d * d))
    if var == 0:
        raise DegenerateSeriesError("snapshot has zero variance")
    # C[dr, dc] = mean_i d_i d_{i + (dr, dc)}
    C = np.empty((L, L))
    for dr in range(L):
        shifted = np.roll(d, -dr, axis=0)
        for dc in range(L):
            C[dr, dc] = np.mean(d * np.roll(shifted, -dc, axis=1))
    C /= var
    dist = toroidal_distance_grid(L)
    if bin_width is None:
        key = np.round(dist * dist).astype(np.int64)
    else:
        if bin_width <= 0:
            raise ValueError("bin_width must be positive")
        key = np.floor(dist / bin_width + 0.5).astype(np.int64)
    keys = np.unique(key)
    z = np.array([dist[key == k].mean() for k in keys])
    R = np.array([C[key == k].mean() for k in keys])
    if max_distance is not None:
        keep = z <= max_distance + 1e-12
        z, R = z[keep], R[keep]
    return CorrelationCurve(z=z, R=R)


def damped_cosine(z, lam: float, omega: float) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return np.exp(-lam * z) * np.cos(omega * z)


def _rms(curve: CorrelationCurve, lam: float, omega: float) -> float:
    r = curve.R - damped_cosine(curve.z, lam, omega)
    return math.sqrt(float(np.mean(r * r)))


LAMBDA_MAX = 5.0
GRID_POINTS = 101


def fit_damped_cosine(curve: CorrelationCurve, grid: int = GRID_POINTS, xtol: float = 1e-6) -> DampedCosineFit:
    """Least-squares fit of ``exp(-lam z) cos(omega z)``.

    A 101 x 101 grid over lam in [0, 5], omega in [0, pi] locates the basin and
    Nelder-Mead polishes the best grid point inside lam >= 0, omega in [0, pi].
    """
    ok = np.isfinite(curve.R)
    z, R = np.asarray(curve.z)[ok], np.asarray(curve.R)[ok]
    if z.size < 5:
        raise ValueError(f"need at least 5 curve points to fit, got {z.size}")
    clean = CorrelationCurve(z=z, R=R)
    lams = np.linspace(0.0, LAMBDA_MAX, grid)
    omegas = np.linspace(0.0, math.pi, grid)
    model = np.exp(-lams[:, None, None] * z) * np.cos(omegas[None, :, None] * z)
    sse = ((model - R) ** 2).sum(axis=2)
    a, b = np.unravel_index(np.argmin(sse), sse.shape)
    start = np.array([lams[a], omegas[b]])
    res = minimize(
        lambda p: float(np.sum((damped_cosine(z, p[0], p[1]) - R) ** 2)),
        start,
        method="Nelder-Mead",
        bounds=[(0.0, None), (0.0, math.pi)],
        options={"xatol": xtol, "fatol": 1e-14, "maxiter": 4000},
    )
    lam, omega = (res.x if res.fun <= sse[a, b] else start).tolist()
    return DampedCosineFit(lam=lam, omega=omega, residual=_rms(clean, lam, omega))
