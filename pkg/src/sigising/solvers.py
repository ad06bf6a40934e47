"""Per-step controllers: local threshold rule, simulated annealing and exact enumeration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numba
import numpy as np
import scipy.sparse as sp

from .dynamics import ModelParams, TrafficState, check_signals
from .ising import IsingProblem, build_problem, evaluate
from .lattice import LatticeCity

SOLVER_KINDS = ("local", "sa", "exact", "partitioned")
EXACT_MAX_SPINS = 25


@dataclass(frozen=True)
class SolverConfig:
    kind: str = "sa"
    theta: float = 1.0
    num_reads: int = 100
    sweeps: int = 1000
    beta_min: float = 0.1
    beta_max: float = 10.0
    seed: int = 0
    warm_start: bool = True
    # partitioned solving
    max_size: int = 64
    inner: str = "sa"
    multipass: bool = False
    max_passes: int = 4

    def __post_init__(self):
        if self.kind not in SOLVER_KINDS:
            raise ValueError(f"unknown solver kind {self.kind!r}; expected one of {SOLVER_KINDS}")
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if self.num_reads < 1 or self.sweeps < 1:
            raise ValueError("num_reads and sweeps must be positive")
        if not 0 < self.beta_min <= self.beta_max:
            raise ValueError("need 0 < beta_min <= beta_max")
        if self.max_size < 1 or self.max_passes < 1:
            raise ValueError("max_size and max_passes must be positive")
        if self.inner not in ("sa", "exact"):
            raise ValueError(f"inner solver must be 'sa' or 'exact', got {self.inner!r}")

    def betas(self) -> np.ndarray:
        return np.geomspace(self.beta_min, self.beta_max, self.sweeps)


@dataclass
class SolveResult:
    sigma: np.ndarray
    energy: float
    reads_used: int = 1
    best_read_index: int = 0
    read_energies: list = field(default_factory=list)


def local_control(x: np.ndarray, sigma_prev: np.ndarray, theta: float) -> np.ndarray:
    """Threshold rule with hysteresis: +1 if x >= theta, -1 if x <= -theta, else hold."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    x = np.asarray(x)
    sigma_prev = np.asarray(sigma_prev)
    out = np.where(x <= -theta, -1, sigma_prev)
    out = np.where(x >= theta, 1, out)
    return out.astype(np.int8)


def _enumeration_block(n: int, start: int, stop: int) -> np.ndarray:
    # spin 0 is the most significant bit so integer order is lexicographic order with -1 < +1
    k = np.arange(start, stop, dtype=np.int64)
    bits = (k[:, None] >> np.arange(n - 1, -1, -1, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.float64)


def solve_exact(problem: IsingProblem, chunk: int = 1 << 15) -> SolveResult:
    """Global minimiser by enumerating all 2^n configurations.

    Ties go to the lexicographically smallest configuration (-1 before +1).
    """
    n = problem.n
    if n > EXACT_MAX_SPINS:
        raise ValueError(f"exact enumeration limited to {EXACT_MAX_SPINS} spins, got {n}")
    J = problem.dense_J()
    h = problem.h
    total = 1 << n
    best_val = np.inf
    cands: list[tuple[float, int]] = []
    for start in range(0, total, chunk):
        S = _enumeration_block(n, start, min(total, start + chunk))
        e = np.einsum("ij,ij->i", S @ J, S) + S @ h
        best_val = min(best_val, float(e.min()))
        cut = best_val + 1e-9 * max(1.0, abs(best_val))
        cands = [ck for ck in cands if ck[0] <= cut]
        cands.extend((float(e[k]), start + int(k)) for k in np.nonzero(e <= cut)[0])
    # re-rank near-ties with compensated evaluation; (energy, index) order breaks exact ties lexicographically
    energy, k = min((evaluate(problem, _enumeration_block(n, k, k + 1)[0]), k) for _, k in cands)
    sigma = _enumeration_block(n, k, k + 1)[0].astype(np.int8)
    return SolveResult(sigma=sigma, energy=energy, reads_used=1, best_read_index=0, read_energies=[energy])


_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0


@numba.njit(cache=True, inline="always")
def _splitmix(state):
    state = state + _SM_GAMMA
    z = state
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return state, z ^ (z >> np.uint64(31))


@numba.njit(cache=True, inline="always")
def _uniform(state):
    state, z = _splitmix(state)
    return state, float(z >> np.uint64(11)) * _U53


@numba.njit(cache=True)
def _anneal(indptr, indices, data, h, init, betas, seeds, random_start):
    n = h.shape[0]
    reads = seeds.shape[0]
    out = np.empty((reads, n), dtype=np.int8)
    best_trace = np.empty((reads, betas.shape[0]), dtype=np.float64)
    s = np.empty(n, dtype=np.float64)
    f = np.empty(n, dtype=np.float64)
    order = np.arange(n)
    for r in range(reads):
        rng = np.uint64(seeds[r])
        for i in range(n):
            order[i] = i
            if random_start:
                rng, u = _uniform(rng)
                s[i] = 1.0 if u < 0.5 else -1.0
            else:
                s[i] = init[i]
        # f_i = sum_{j != i} J_ij s_j; the CSR arrays hold off-diagonal couplings only
        e = 0.0
        for i in range(n):
            acc = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                acc += data[k] * s[indices[k]]
            f[i] = acc
        for i in range(n):
            e += s[i] * (f[i] + h[i])
        best = e
        for i in range(n):
            out[r, i] = np.int8(s[i])
        for sweep in range(betas.shape[0]):
            beta = betas[sweep]
            # Fisher-Yates shuffle of the visiting order
            for k0 in range(n - 1, 0, -1):
                rng, u = _uniform(rng)
                m = int(u * (k0 + 1))
                tmp = order[k0]
                order[k0] = order[m]
                order[m] = tmp
            for k0 in range(n):
                i = order[k0]
                de = -2.0 * s[i] * (h[i] + 2.0 * f[i])
                if de > 0.0:
                    x = beta * de
                    if x > 40.0:
                        continue
                    rng, u = _uniform(rng)
                    if u >= math.exp(-x):
                        continue
                s[i] = -s[i]
                e += de
                ds = 2.0 * s[i]
                for k in range(indptr[i], indptr[i + 1]):
                    f[indices[k]] += data[k] * ds
            if e < best:
                best = e
                for i in range(n):
                    out[r, i] = np.int8(s[i])
            best_trace[r, sweep] = best
    return out, best_trace


def read_seeds(seed: int, num_reads: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(num_reads, dtype=np.uint64)


def batch_energies(problem: IsingProblem, states: np.ndarray) -> np.ndarray:
    S = states.astype(np.float64)
    return np.einsum("ij,ij->i", (problem.J @ S.T).T, S) + S @ problem.h + problem.c


def solve_sa(
    problem: IsingProblem,
    cfg: SolverConfig,
    sigma_init: np.ndarray,
    return_trace: bool = False,
):
    """Metropolis single-spin-flip annealing over a geometric inverse-temperature ladder.

    Every read starts from ``sigma_init`` (or a random state when ``cfg.warm_start`` is
    off) and visits spins in an independently seeded random order each sweep. The best
    state seen at sweep boundaries of each read is kept; the lowest-energy read wins,
    earliest read on ties.
    """
    n = problem.n
    init = check_signals(sigma_init, n).astype(np.float64)
    off = problem.offdiagonal
    states, trace = _anneal(
        off.indptr.astype(np.int64),
        off.indices.astype(np.int64),
        off.data,
        np.ascontiguousarray(problem.h, dtype=np.float64),
        init,
        cfg.betas(),
        read_seeds(cfg.seed, cfg.num_reads),
        not cfg.warm_start,
    )
    energies = batch_energies(problem, states)
    best = int(np.argmin(energies))
    sigma = states[best].copy()
    result = SolveResult(
        sigma=sigma,
        energy=evaluate(problem, sigma),
        reads_used=cfg.num_reads,
        best_read_index=best,
        read_energies=energies.tolist(),
    )
    if return_trace:
        return result, trace
    return result


def solve_problem(problem: IsingProblem, cfg: SolverConfig, sigma_init: np.ndarray) -> SolveResult:
    if cfg.kind == "exact":
        return solve_exact(problem)
    if cfg.kind == "sa":
        return solve_sa(problem, cfg, sigma_init)
    raise ValueError(f"solver kind {cfg.kind!r} needs more than an Ising problem")


def control_step(
    state: TrafficState,
    p: ModelParams,
    cfg: SolverConfig,
    city: LatticeCity,
    *,
    J: Optional[sp.csr_matrix] = None,
    partition=None,
) -> tuple[np.ndarray, SolveResult]:
    """Choose the signal display for one step. Energies are always reported on the full Hamiltonian."""
    problem = build_problem(state.x, state.sigma_prev, p, city.adjacency, J=J)
    if cfg.kind == "local":
        sigma = local_control(state.x, state.sigma_prev, cfg.theta)
        e = evaluate(problem, sigma)
        return sigma, SolveResult(sigma=sigma, energy=e, read_energies=[e])
    if cfg.kind == "partitioned":
        from .partition import partition_lattice, solve_partitioned

        if partition is None:
            partition = partition_lattice(city, problem, cfg.max_size, cfg.seed)
        res = solve_partitioned(problem, partition, cfg, state.sigma_prev)
        return res.sigma, res
    res = solve_problem(problem, cfg, state.sigma_prev)
    return res.sigma, res


def with_seed(cfg: SolverConfig, seed: int) -> SolverConfig:
    return replace(cfg, seed=int(seed))
