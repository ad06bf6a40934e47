"""Lane occupancy and flow-bias dynamics under a given signal sequence.

Quantities are normalised: time in units of the minimum switching interval
``dt`` and car counts in units of ``q_av * dt``. Occupancies may go negative;
the linear model has no saturation and nothing here clips it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .lattice import LatticeCity


@dataclass(frozen=True)
class ModelParams:
    """Straight-drive parameter ``alpha = 2a - 1``, switching penalty ``eta``.

    ``q_av`` (mean car flux) and ``dt`` only matter for :func:`denormalize`.
    """

    alpha: float
    eta: float = 1.0
    q_av: float = 1.0
    dt: float = 1.0

    def __post_init__(self):
        if not -1.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [-1, 1], got {self.alpha}")
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")

    @classmethod
    def from_straight_probability(cls, a: float, **kw) -> "ModelParams":
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"straight probability must lie in [0, 1], got {a}")
        return cls(alpha=2.0 * a - 1.0, **kw)

    @property
    def straight_probability(self) -> float:
        return (self.alpha + 1.0) / 2.0


@dataclass
class TrafficState:
    """Flow bias ``x(t)`` and the signal display of the previous step ``sigma(t-1)``."""

    x: np.ndarray
    sigma_prev: np.ndarray
    q: Optional[np.ndarray] = None


def check_signals(sigma: np.ndarray, n: Optional[int] = None) -> np.ndarray:
    sigma = np.asarray(sigma)
    if sigma.ndim != 1 or (n is not None and sigma.shape[0] != n):
        raise ValueError(f"signal vector must have shape ({n},), got {sigma.shape}")
    if not np.all(np.abs(sigma) == 1):
        raise ValueError("signal entries must be exactly +1 or -1")
    return sigma.astype(np.int8, copy=False)


def transfer_matrix(alpha: float, A: sp.spmatrix) -> sp.csr_matrix:
    """The sparse matrix ``-I + (alpha/4) A`` mapping signals to flow-bias increments."""
    n = A.shape[0]
    return (sp.identity(n, format="csr") * -1.0 + (alpha / 4.0) * A).tocsr()


def step_lanes(q: np.ndarray, sigma: np.ndarray, p: ModelParams, city: LatticeCity) -> np.ndarray:
    """Advance every directed lane ``j -> i`` by ``(s_ij / 2)(-sigma_i + alpha sigma_j)``.

    ``q`` is ordered like :meth:`LatticeCity.lanes`.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    lanes = city.lanes()
    s = city.lane_signs()
    dq = 0.5 * s * (-sigma[lanes[:, 0]] + p.alpha * sigma[lanes[:, 1]])
    return np.asarray(q, dtype=np.float64) + dq


def flow_bias_from_lanes(q: np.ndarray, city: LatticeCity) -> np.ndarray:
    """``x_i = sum_j s_ij q_ij / 2`` over the four incoming lanes of i."""
    q = np.asarray(q, dtype=np.float64).reshape(city.n, 4)
    return 0.5 * np.sum(city.signs * q, axis=1)


def step_bias(x: np.ndarray, sigma: np.ndarray, p: ModelParams, A: sp.spmatrix) -> np.ndarray:
    """``x(t+1) = x(t) + (-I + (alpha/4) A) sigma(t)``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if x.shape != sigma.shape or A.shape[0] != x.shape[0]:
        raise ValueError("dimension mismatch between x, sigma and A")
    return x - sigma + (p.alpha / 4.0) * (A @ sigma)


def init_state(L: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random initial flow bias, uniform on [-5, 5], and random +-1 signals."""
    if L < 3:
        raise ValueError(f"lattice size must be >= 3, got {L}")
    rng = np.random.default_rng(seed)
    n = L * L
    x = rng.uniform(-5.0, 5.0, size=n)
    sigma = np.where(rng.integers(0, 2, size=n) == 1, 1, -1).astype(np.int8)
    return x, sigma


def lanes_consistent_with(x: np.ndarray, city: LatticeCity, rng: np.random.Generator) -> np.ndarray:
    """Random lane occupancies whose flow bias equals ``x``.

    Only the north-bound incoming lane of each node is adjusted, so every other
    lane keeps its random value.
    """
    q = rng.uniform(0.0, 10.0, size=(city.n, 4))
    residual = np.asarray(x) - 0.5 * np.sum(city.signs * q, axis=1)
    # neighbour slot 0 is north with sign +1, so it moves x_i by dq / 2
    q[:, 0] += 2.0 * residual
    return q.ravel()


def denormalize(q, p: ModelParams, t=None):
    """Convert normalised counts (and optionally times) back to dimensional units.

    Returns ``q * q_av * dt``, or the pair ``(q*, t * dt)`` when ``t`` is given.
    """
    if p.q_av <= 0 or p.dt <= 0:
        raise ValueError("q_av and dt must both be positive")
    q_star = np.asarray(q, dtype=np.float64) * p.q_av * p.dt
    if np.ndim(q_star) == 0:
        q_star = float(q_star)
    if t is None:
        return q_star
    return q_star, np.asarray(t, dtype=np.float64) * p.dt
