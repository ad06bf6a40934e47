"""Size-capped partitioning of the lattice and boundary-frozen group solving.

A problem too large for a size-limited solver is split into groups. Each group
is solved with every spin outside it held fixed, which turns the couplings to
the outside into an extra field on the group.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .ising import IsingProblem, evaluate
from .lattice import LatticeCity
from .solvers import SolveResult, SolverConfig, solve_exact, solve_sa


@dataclass(frozen=True)
class Partition:
    groups: tuple  # tuple of sorted int64 arrays
    max_size: int
    cut_edges: int
    cut_weight: float

    @property
    def n(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def labels(self) -> np.ndarray:
        out = np.empty(self.n, dtype=np.int64)
        for k, g in enumerate(self.groups):
            out[g] = k
        return out


@dataclass(frozen=True)
class GroupProblem:
    nodes: np.ndarray
    J: sp.csr_matrix
    field: np.ndarray
    offset: float

    def evaluate(self, sigma_group: np.ndarray) -> float:
        """Group Hamiltonian without the frozen-context constant."""
        s = np.asarray(sigma_group, dtype=np.float64)
        return math.fsum(s * (self.J @ s)) + math.fsum(self.field * s)

    def as_problem(self) -> IsingProblem:
        """The group Hamiltonian plus constant, whose energies equal the full Hamiltonian."""
        return IsingProblem(J=self.J, h=self.field, c=self.offset)


def _weights(problem: IsingProblem) -> sp.csr_matrix:
    w = abs(problem.offdiagonal)
    return sp.csr_matrix(w)


def cut_stats(W: sp.csr_matrix, labels: np.ndarray) -> tuple[int, float]:
    coo = sp.triu(W, k=1).tocoo()
    crossing = labels[coo.row] != labels[coo.col]
    return int(np.count_nonzero(crossing)), math.fsum(coo.data[crossing])


def _bisect(nodes: np.ndarray, coords: np.ndarray, k: int, out: list) -> None:
    if k == 1:
        out.append(np.sort(nodes))
        return
    rows, cols = coords[nodes, 0], coords[nodes, 1]
    # cut across the longer side so tiles stay compact
    if np.unique(rows).size >= np.unique(cols).size:
        order = np.lexsort((cols, rows))
    else:
        order = np.lexsort((rows, cols))
    k1 = (k + 1) // 2
    m = int(round(len(nodes) * k1 / k))
    _bisect(nodes[order[:m]], coords, k1, out)
    _bisect(nodes[order[m:]], coords, k - k1, out)


def _geometric_groups(city: LatticeCity, max_size: int, rng: np.random.Generator) -> list:
    L = city.L
    r0, c0 = rng.integers(0, L, size=2)
    ids = np.arange(city.n)
    coords = np.column_stack([(ids // L - r0) % L, (ids % L - c0) % L])
    k = math.ceil(city.n / max_size)
    while True:
        groups: list = []
        _bisect(ids, coords, k, groups)
        if max(len(g) for g in groups) <= max_size:
            return groups
        k += 1


def _refine(W: sp.csr_matrix, labels: np.ndarray, rng: np.random.Generator, max_passes: int = 10) -> None:
    """Kernighan-Lin style pairwise swaps across group boundaries.

    A swap is applied only if it strictly lowers the cut weight, so group sizes
    are preserved and the cut never increases.
    """
    n = labels.shape[0]
    indptr, indices, data = W.indptr, W.indices, W.data

    def link(v, g):
        lo, hi = indptr[v], indptr[v + 1]
        nb = indices[lo:hi]
        return data[lo:hi][labels[nb] == g].sum()

    for _ in range(max_passes):
        improved = False
        for v in rng.permutation(n):
            gv = labels[v]
            own_v = link(v, gv)
            best_gain, best_u = 1e-12, -1
            lo, hi = indptr[v], indptr[v + 1]
            for u, w_uv in zip(indices[lo:hi], data[lo:hi]):
                gu = labels[u]
                if gu == gv:
                    continue
                gain = (link(v, gu) - own_v) + (link(u, gv) - link(u, gu)) - 2.0 * w_uv
                if gain > best_gain:
                    best_gain, best_u = gain, u
            if best_u >= 0:
                labels[v], labels[best_u] = labels[best_u], gv
                improved = True
        if not improved:
            break


def partition_lattice(city: LatticeCity, problem: IsingProblem, max_size: int = 64, seed: int = 0) -> Partition:
    """Split the lattice into compact groups of at most ``max_size`` nodes.

    Recursive geometric bisection of the torus (with a seeded origin) gives
    ceil(n / max_size) or slightly more tiles; swap refinement then lowers the
    |J| weight of cut couplings.
    """
    if max_size < 1:
        raise ValueError("max_size must be positive")
    if problem.n != city.n:
        raise ValueError("problem size does not match the lattice")
    rng = np.random.default_rng(seed)
    groups = _geometric_groups(city, max_size, rng)
    labels = np.empty(city.n, dtype=np.int64)
    for k, g in enumerate(groups):
        labels[g] = k
    W = _weights(problem)
    if len(groups) > 1:
        _refine(W, labels, rng)
    return partition_from_labels(labels, max_size, W)


def partition_from_labels(labels: np.ndarray, max_size: int, W: sp.csr_matrix | None = None) -> Partition:
    labels = np.asarray(labels, dtype=np.int64)
    ids = np.unique(labels)
    groups = tuple(np.flatnonzero(labels == g) for g in ids)
    if max(len(g) for g in groups) > max_size:
        raise ValueError(f"a group exceeds the size cap {max_size}")
    if W is None:
        cut_edges, cut_weight = 0, 0.0
    else:
        dense = np.searchsorted(ids, labels)
        cut_edges, cut_weight = cut_stats(W, dense)
    return Partition(groups=groups, max_size=max_size, cut_edges=cut_edges, cut_weight=cut_weight)


def write_partition(part: Partition, path) -> None:
    labels = part.labels
    Path(path).write_text("".join(f"{i} {int(g)}\n" for i, g in enumerate(labels)))


def read_partition(path, max_size: int, problem: IsingProblem | None = None) -> Partition:
    pairs = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    labels = np.full(len(pairs), -1, dtype=np.int64)
    for node, group in pairs:
        labels[int(node)] = int(group)
    if np.any(labels < 0):
        raise ValueError(f"{path}: node ids must cover 0..n-1")
    W = _weights(problem) if problem is not None else None
    return partition_from_labels(labels, max_size, W)


def build_group_problem(problem: IsingProblem, part: Partition, j: int, sigma_frozen: np.ndarray) -> GroupProblem:
    """Hamiltonian of group j with every other spin frozen at ``sigma_frozen``.

    The outside spins enter through ``2 J_{j,out} sigma_out`` (J is stored
    symmetric, so each cross pair appears twice in ``sigma^T J sigma``). The
    offset collects everything independent of the group's spins.
    """
    if not 0 <= j < len(part.groups):
        raise IndexError(f"group index {j} out of range for {len(part.groups)} groups")
    nodes = part.groups[j]
    s = np.asarray(sigma_frozen, dtype=np.float64)
    mask = np.ones(problem.n, dtype=bool)
    mask[nodes] = False
    out = np.flatnonzero(mask)
    rows = problem.J[nodes]
    J_jj = sp.csr_matrix(rows[:, nodes])
    field = problem.h[nodes] + 2.0 * (rows[:, out] @ s[out])
    s_out = s[out]
    J_oo = problem.J[out][:, out]
    offset = problem.c + math.fsum(s_out * (J_oo @ s_out)) + math.fsum(problem.h[out] * s_out)
    return GroupProblem(nodes=nodes, J=J_jj, field=field, offset=offset)


def _group_seed(seed: int, pass_index: int, j: int) -> int:
    return int(np.random.SeedSequence([seed, pass_index, j]).generate_state(1, dtype=np.uint32)[0])


def solve_partitioned(problem: IsingProblem, part: Partition, cfg: SolverConfig, sigma_prev: np.ndarray) -> SolveResult:
    """Solve every group with outside spins frozen, then assemble.

    One pass freezes at ``sigma_prev`` (all groups independent). With
    ``cfg.multipass`` the assembly becomes the new frozen context and passes
    repeat until nothing changes or ``cfg.max_passes`` is reached.
    """
    sigma_prev = np.asarray(sigma_prev, dtype=np.int8)
    frozen = sigma_prev.copy()
    single = len(part.groups) == 1
    passes = cfg.max_passes if cfg.multipass else 1
    reads = 0
    for pass_index in range(passes):
        assembled = frozen.copy()
        for j, nodes in enumerate(part.groups):
            gp = build_group_problem(problem, part, j, frozen)
            sub = gp.as_problem()
            if cfg.inner == "exact":
                res = solve_exact(sub)
            else:
                seed = cfg.seed if single and pass_index == 0 else _group_seed(cfg.seed, pass_index, j)
                res = solve_sa(sub, replace(cfg, kind="sa", seed=seed), frozen[nodes])
            reads += res.reads_used
            assembled[nodes] = res.sigma
        changed = not np.array_equal(assembled, frozen)
        frozen = assembled
        if not changed:
            break
    energy = evaluate(problem, frozen)
    return SolveResult(sigma=frozen, energy=energy, reads_used=reads, best_read_index=0, read_energies=[energy])
