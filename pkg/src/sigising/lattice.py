"""Periodic square-lattice road network.

Intersections sit on an L x L torus. Node ids are row-major
(``id = row * L + col``) and every node has four neighbours listed in the
fixed order north, south, east, west.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

# (drow, dcol) for north, south, east, west
NEIGHBOR_OFFSETS = ((-1, 0), (1, 0), (0, 1), (0, -1))
# lane orientation for each entry of NEIGHBOR_OFFSETS: +1 north-south, -1 east-west
NEIGHBOR_SIGNS = (1, 1, -1, -1)


@dataclass(frozen=True)
class LatticeCity:
    L: int
    neighbors: np.ndarray = field(repr=False, compare=False)  # (n, 4) int64
    signs: np.ndarray = field(repr=False, compare=False)  # (n, 4) int8

    @property
    def n(self) -> int:
        return self.L * self.L

    def node_id(self, row: int, col: int) -> int:
        return (row % self.L) * self.L + (col % self.L)

    def coords(self, i: int) -> tuple[int, int]:
        if not 0 <= i < self.n:
            raise IndexError(f"node {i} out of range for L={self.L}")
        return divmod(int(i), self.L)

    def lanes(self) -> np.ndarray:
        """Directed lanes as an array of ``(i, j)`` rows, meaning traffic from j into i.

        Rows are grouped by receiving node, then neighbour order.
        """
        i = np.repeat(np.arange(self.n), 4)
        return np.column_stack([i, self.neighbors.ravel()])

    def lane_signs(self) -> np.ndarray:
        return self.signs.ravel().astype(np.int8)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        return adjacency(self)

    def torus_displacement(self, i: int, j: int) -> tuple[int, int]:
        """Smallest signed (drow, dcol) taking node i to node j."""
        ri, ci = self.coords(i)
        rj, cj = self.coords(j)
        return _wrap(rj - ri, self.L), _wrap(cj - ci, self.L)

    def distance(self, i: int, j: int) -> float:
        dr, dc = self.torus_displacement(i, j)
        return float(np.hypot(dr, dc))


def _wrap(d: int, L: int) -> int:
    d %= L
    return d - L if d > L // 2 else d


def build_lattice(L: int) -> LatticeCity:
    """Build the L x L periodic city. Requires L >= 3 so the four neighbours are distinct."""
    if int(L) != L or L < 3:
        raise ValueError(f"lattice size must be an integer >= 3, got {L!r}")
    L = int(L)
    rows, cols = np.divmod(np.arange(L * L), L)
    neighbors = np.empty((L * L, 4), dtype=np.int64)
    for k, (dr, dc) in enumerate(NEIGHBOR_OFFSETS):
        neighbors[:, k] = ((rows + dr) % L) * L + (cols + dc) % L
    signs = np.tile(np.array(NEIGHBOR_SIGNS, dtype=np.int8), (L * L, 1))
    neighbors.setflags(write=False)
    signs.setflags(write=False)
    return LatticeCity(L=L, neighbors=neighbors, signs=signs)


def adjacency(city: LatticeCity) -> sp.csr_matrix:
    """Symmetric 0/1 adjacency matrix of the torus in CSR form, four nonzeros per row."""
    n = city.n
    indptr = np.arange(0, 4 * n + 1, 4)
    # CSR wants column indices sorted inside each row
    indices = np.sort(city.neighbors, axis=1).ravel()
    data = np.ones(4 * n, dtype=np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def lane_sign(city: LatticeCity, i: int, j: int) -> int:
    """+1 for a north-south lane between i and j, -1 for east-west.

    Raises ValueError if the two nodes are not adjacent.
    """
    hits = np.nonzero(city.neighbors[i] == j)[0]
    if hits.size == 0:
        raise ValueError(f"nodes {i} and {j} are not adjacent")
    return int(city.signs[i, hits[0]])


def toroidal_distance_grid(L: int) -> np.ndarray:
    """(L, L) array of Euclidean torus distances from the origin to displacement (dr, dc)."""
    d = np.arange(L)
    d = np.minimum(d, L - d)
    return np.hypot(d[:, None], d[None, :])
