"""Per-step signal decision compiled into an Ising Hamiltonian.

The objective ``||x + B sigma||^2 + eta ||sigma - sigma_prev||^2`` with
``B = -I + (alpha/4) A`` expands to ``sigma^T J sigma + h sigma + c`` where

    J = B^T B + eta I
    h = 2 x^T B - 2 eta sigma_prev^T
    c = x^T x + eta n
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .dynamics import ModelParams, check_signals, transfer_matrix


@dataclass(frozen=True)
class IsingProblem:
    J: sp.csr_matrix
    h: np.ndarray
    c: float

    @property
    def n(self) -> int:
        return self.h.shape[0]

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.J.indptr[i], self.J.indptr[i + 1]
        return self.J.indices[lo:hi], self.J.data[lo:hi]

    def dense_J(self) -> np.ndarray:
        return self.J.toarray()

    @cached_property
    def offdiagonal(self) -> sp.csr_matrix:
        return _canonical(self.J - sp.diags(self.J.diagonal()))


def _canonical(J: sp.spmatrix) -> sp.csr_matrix:
    J = sp.csr_matrix(J, dtype=np.float64)
    J.sum_duplicates()
    J.eliminate_zeros()
    J.sort_indices()
    return J


def coupling_matrix(alpha: float, eta: float, A: sp.spmatrix) -> sp.csr_matrix:
    """``J = B^T B + eta I``. Depends only on the model, not on the state, so callers may reuse it."""
    B = transfer_matrix(alpha, A)
    J = B.T @ B + eta * sp.identity(A.shape[0], format="csr")
    return _canonical(J)


def build_problem(
    x: np.ndarray,
    sigma_prev: np.ndarray,
    p: ModelParams,
    A: sp.spmatrix,
    J: Optional[sp.csr_matrix] = None,
) -> IsingProblem:
    x = np.asarray(x, dtype=np.float64)
    n = A.shape[0]
    if x.shape != (n,):
        raise ValueError(f"flow bias must have shape ({n},), got {x.shape}")
    sigma_prev = check_signals(sigma_prev, n).astype(np.float64)
    if p.eta < 0:
        raise ValueError("eta must be nonnegative")
    if J is None:
        J = coupling_matrix(p.alpha, p.eta, A)
    B = transfer_matrix(p.alpha, A)
    h = 2.0 * (B.T @ x) - 2.0 * p.eta * sigma_prev
    c = math.fsum(x * x) + p.eta * n
    return IsingProblem(J=J, h=h, c=c)


def evaluate(problem: IsingProblem, sigma: np.ndarray) -> float:
    """``sigma^T J sigma + h sigma + c`` with compensated summation."""
    sigma = check_signals(sigma, problem.n).astype(np.float64)
    quad = sigma * (problem.J @ sigma)
    return math.fsum(quad) + math.fsum(problem.h * sigma) + problem.c


def direct_objective(x, sigma, sigma_prev, p: ModelParams, A: sp.spmatrix) -> float:
    """The traffic objective evaluated straight from the next-step flow bias, without J or h."""
    sigma = np.asarray(sigma, dtype=np.float64)
    x_next = np.asarray(x, dtype=np.float64) + transfer_matrix(p.alpha, A) @ sigma
    diff = sigma - np.asarray(sigma_prev, dtype=np.float64)
    return math.fsum(x_next * x_next) + p.eta * math.fsum(diff * diff)


def local_fields(problem: IsingProblem, sigma: np.ndarray) -> np.ndarray:
    """Off-diagonal coupling sums ``sum_{j != i} J_ij sigma_j`` for every i."""
    sigma = np.asarray(sigma, dtype=np.float64)
    return problem.J @ sigma - problem.J.diagonal() * sigma


def delta_energy(problem: IsingProblem, sigma: np.ndarray, i: int) -> float:
    """Energy change from flipping spin i, using row i of J and h_i only."""
    if not 0 <= i < problem.n:
        raise IndexError(f"spin index {i} out of range for n={problem.n}")
    cols, vals = problem.row(i)
    s = float(sigma[i])
    off = vals[cols != i] @ np.asarray(sigma, dtype=np.float64)[cols[cols != i]]
    return -2.0 * s * (problem.h[i] + 2.0 * off)


def sparseness(L: int) -> float:
    """Fraction of zero entries of J on an L x L lattice, ``(L^4 - 13 L^2) / L^4``."""
    if int(L) != L or L < 5:
        raise ValueError(f"sparseness formula needs L >= 5, got {L!r}")
    L = int(L)
    return (L**4 - 13 * L**2) / L**4


def measured_sparseness(J: sp.spmatrix) -> float:
    n = J.shape[0]
    return (n * n - _canonical(J).nnz) / (n * n)


def write_problem(problem: IsingProblem, path) -> None:
    """Plain-text export: ``i j value`` per stored coupling, ``h i value`` per field entry, one ``c value``."""
    J = problem.J.tocoo()
    order = np.lexsort((J.col, J.row))
    lines = [f"{int(J.row[k])} {int(J.col[k])} {float(J.data[k])!r}" for k in order]
    lines += [f"h {i} {float(v)!r}" for i, v in enumerate(problem.h)]
    lines.append(f"c {float(problem.c)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_problem(path) -> IsingProblem:
    rows, cols, vals = [], [], []
    h = {}
    c = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "h" and len(parts) == 3:
            h[int(parts[1])] = float(parts[2])
        elif parts[0] == "c" and len(parts) == 2:
            c = float(parts[1])
        elif len(parts) == 3:
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
        else:
            raise ValueError(f"{path}:{lineno}: cannot parse {line!r}")
    if c is None:
        raise ValueError(f"{path}: missing constant line")
    n = len(h)
    if sorted(h) != list(range(n)):
        raise ValueError(f"{path}: field lines must cover indices 0..n-1")
    J = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return IsingProblem(J=_canonical(J), h=np.array([h[i] for i in range(n)]), c=c)
