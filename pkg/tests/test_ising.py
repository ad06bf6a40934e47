from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sigising.dynamics import ModelParams
from sigising.ising import (
    IsingProblem,
    build_problem,
    coupling_matrix,
    delta_energy,
    direct_objective,
    evaluate,
    measured_sparseness,
    read_problem,
    sparseness,
    write_problem,
)
from sigising.lattice import build_lattice

from .conftest import random_signals


def _dense_oracle(x, sigma_prev, alpha, eta, L):
    # dense re-derivation from the lattice definition, independent of the sparse builder
    n = L * L
    A = np.zeros((n, n))
    for r in range(L):
        for c in range(L):
            i = r * L + c
            for dr, dc in ((-1, 0), (1, 0), (0, 1), (0, -1)):
                A[i, ((r + dr) % L) * L + (c + dc) % L] = 1
    B = -np.eye(n) + alpha / 4 * A
    J = B.T @ B + eta * np.eye(n)
    h = 2 * B.T @ x - 2 * eta * sigma_prev
    c = x @ x + eta * n
    return J, h, c


def test_build_matches_dense_oracle(rng):
    L, alpha, eta = 6, 0.7, 1.3
    city = build_lattice(L)
    x = rng.uniform(-5, 5, city.n)
    prev = random_signals(rng, city.n)
    pr = build_problem(x, prev, ModelParams(alpha=alpha, eta=eta), city.adjacency)
    J, h, c = _dense_oracle(x, prev.astype(float), alpha, eta, L)
    assert np.allclose(pr.dense_J(), J, atol=1e-14)
    assert np.allclose(pr.h, h, atol=1e-12)
    assert pr.c == pytest.approx(c, rel=1e-14)


def test_coupling_entries():
    a, eta, L = 0.6, 1.0, 7
    city = build_lattice(L)
    J = coupling_matrix(a, eta, city.adjacency).toarray()
    i = city.node_id(3, 3)
    assert J[i, i] == pytest.approx(1 + eta + a * a / 4)
    assert J[i, city.node_id(2, 3)] == pytest.approx(-a / 2)
    assert J[i, city.node_id(2, 4)] == pytest.approx(a * a / 8)
    assert J[i, city.node_id(1, 3)] == pytest.approx(a * a / 16)
    assert J[i, city.node_id(1, 4)] == 0


@pytest.mark.parametrize("L", [5, 6, 8, 11])
@pytest.mark.parametrize("alpha", [0.1, -0.5, 0.995])
def test_thirteen_nonzeros_per_row(L, alpha):
    J = coupling_matrix(alpha, 1.0, build_lattice(L).adjacency)
    assert J.nnz == 13 * L * L
    assert np.all(np.diff(J.indptr) == 13)
    assert (abs(J - J.T)).nnz == 0


def test_alpha_zero_gives_diagonal_coupling():
    J = coupling_matrix(0.0, 1.0, build_lattice(5).adjacency)
    assert J.nnz == 25
    assert np.allclose(J.diagonal(), 2.0)


def test_translation_symmetry():
    city = build_lattice(6)
    J = coupling_matrix(0.8, 0.5, city.adjacency).toarray()
    for i in range(city.n):
        for j in range(city.n):
            dr, dc = city.torus_displacement(i, j)
            assert J[i, j] == J[0, city.node_id(dr, dc)]


def test_sparseness_values():
    assert round(sparseness(50), 4) == 0.9948
    assert sparseness(5) == pytest.approx(0.48)
    Ls = [5, 10, 50, 200]
    assert all(a < b for a, b in zip(map(sparseness, Ls), map(sparseness, Ls[1:])))
    assert sparseness(10**4) > 0.9999
    with pytest.raises(ValueError):
        sparseness(4)


@pytest.mark.parametrize("L", [5, 8])
def test_measured_sparseness(L):
    J = coupling_matrix(0.5, 1.0, build_lattice(L).adjacency)
    assert measured_sparseness(J) == (L**4 - 13 * L**2) / L**4


@settings(max_examples=80, deadline=None)
@given(
    L=st.sampled_from([3, 5, 8]),
    alpha=st.floats(-1, 1),
    eta=st.floats(0, 10),
    seed=st.integers(0, 2**31),
)
def test_ising_form_equals_direct_objective(L, alpha, eta, seed):
    rng = np.random.default_rng(seed)
    city = build_lattice(L)
    p = ModelParams(alpha=alpha, eta=eta)
    x = rng.uniform(-5, 5, city.n)
    prev, s = random_signals(rng, city.n), random_signals(rng, city.n)
    direct = direct_objective(x, s, prev, p, city.adjacency)
    ising = evaluate(build_problem(x, prev, p, city.adjacency), s)
    assert abs(direct - ising) <= 1e-9 * abs(direct)


def test_constant_only_shifts_energies(rng):
    city = build_lattice(3)
    pr = build_problem(rng.normal(size=9), random_signals(rng, 9), ModelParams(alpha=0.5), city.adjacency)
    shifted = IsingProblem(J=pr.J, h=pr.h, c=pr.c + 17.0)
    for _ in range(10):
        s = random_signals(rng, 9)
        assert evaluate(shifted, s) - evaluate(pr, s) == pytest.approx(17.0)


def test_delta_energy_trivial_cases():
    pr = IsingProblem(J=sp.csr_matrix((2, 2)), h=np.zeros(2), c=0.0)
    assert delta_energy(pr, np.array([1, -1]), 0) == 0.0
    with pytest.raises(IndexError):
        delta_energy(pr, np.array([1, -1]), 2)


def test_delta_energy_telescopes(rng):
    city = build_lattice(8)
    pr = build_problem(rng.uniform(-5, 5, 64), random_signals(rng, 64), ModelParams(alpha=0.9, eta=2.0), city.adjacency)
    s = random_signals(rng, 64)
    start = evaluate(pr, s)
    total = 0.0
    for i in rng.integers(0, 64, size=10_000):
        d = delta_energy(pr, s, int(i))
        total += d
        s[i] = -s[i]
    assert abs(start + total - evaluate(pr, s)) <= 1e-7
    # flipping the same spin twice returns to the start
    before = evaluate(pr, s)
    d1 = delta_energy(pr, s, 5)
    s[5] = -s[5]
    d2 = delta_energy(pr, s, 5)
    s[5] = -s[5]
    assert d1 + d2 == pytest.approx(0.0, abs=1e-12)
    assert evaluate(pr, s) == before


def test_export_round_trip(tmp_path, rng):
    city = build_lattice(5)
    pr = build_problem(rng.uniform(-5, 5, 25), random_signals(rng, 25), ModelParams(alpha=0.37, eta=0.9), city.adjacency)
    path = tmp_path / "p.txt"
    write_problem(pr, path)
    back = read_problem(path)
    assert (back.J != pr.J).nnz == 0
    assert np.array_equal(back.h, pr.h) and back.c == pr.c
    lines = path.read_text().splitlines()
    assert len(lines) == 13 * 25 + 25 + 1
    assert lines[-1].startswith("c ")


def test_read_problem_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("0 0 1.0\nh 0 1.0\nnonsense\nc 0\n")
    with pytest.raises(ValueError):
        read_problem(bad)
    bad.write_text("0 0 1.0\nh 0 1.0\n")
    with pytest.raises(ValueError):
        read_problem(bad)


def test_build_problem_validates_shapes(rng):
    city = build_lattice(3)
    with pytest.raises(ValueError):
        build_problem(np.zeros(8), np.ones(9), ModelParams(alpha=0.1), city.adjacency)
    with pytest.raises(ValueError):
        build_problem(np.zeros(9), np.zeros(9), ModelParams(alpha=0.1), city.adjacency)
