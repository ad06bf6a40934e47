from __future__ import annotations

import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sigising.dynamics import ModelParams, TrafficState, init_state, step_bias
from sigising.harness.experiments import run_trajectory
from sigising.ising import IsingProblem, build_problem, delta_energy, evaluate
from sigising.lattice import build_lattice
from sigising.solvers import (
    SolverConfig,
    control_step,
    local_control,
    solve_exact,
    solve_problem,
    solve_sa,
)

from .conftest import random_signals

FAST = SolverConfig(num_reads=20, sweeps=300)


def _random_problem(rng, L=3, alpha=0.8, eta=1.0):
    city = build_lattice(L)
    x = rng.uniform(-5, 5, city.n)
    return build_problem(x, random_signals(rng, city.n), ModelParams(alpha=alpha, eta=eta), city.adjacency)


def _brute(problem):
    best = None
    for bits in itertools.product((-1, 1), repeat=problem.n):
        e = evaluate(problem, np.array(bits))
        if best is None or e < best[0]:
            best = (e, bits)
    return best


def test_local_control_example():
    out = local_control(np.array([5.0, -5.0, 0.0]), np.array([-1, 1, -1]), 1.0)
    assert out.tolist() == [1, -1, -1]


def test_local_control_boundary_and_validation():
    out = local_control(np.array([1.0, -1.0, 0.999]), np.array([-1, 1, 1]), 1.0)
    assert out.tolist() == [1, -1, 1]
    with pytest.raises(ValueError):
        local_control(np.zeros(2), np.ones(2), -0.5)


def test_single_spin_follows_field():
    pr = IsingProblem(J=sp.csr_matrix((1, 1)), h=np.array([2.0]), c=0.0)
    for res in (solve_exact(pr), solve_sa(pr, FAST, np.array([1]))):
        assert res.sigma.tolist() == [-1]
        assert res.energy == -2.0


def test_flat_landscape_returns_constant():
    pr = IsingProblem(J=sp.csr_matrix((4, 4)), h=np.zeros(4), c=3.5)
    assert solve_exact(pr).energy == 3.5
    assert solve_sa(pr, FAST, np.ones(4)).energy == 3.5
    # exact ties resolve lexicographically, -1 first
    assert solve_exact(pr).sigma.tolist() == [-1, -1, -1, -1]


def test_exact_matches_enumeration(rng):
    for _ in range(5):
        pr = _random_problem(rng, L=3, alpha=rng.uniform(-1, 1), eta=rng.uniform(0, 3))
        e, bits = _brute(pr)
        res = solve_exact(pr)
        assert res.energy == pytest.approx(e, abs=1e-9)
        assert res.sigma.tolist() == list(bits)


def test_exact_small_chunks_agree(rng):
    pr = _random_problem(rng)
    assert np.array_equal(solve_exact(pr, chunk=7).sigma, solve_exact(pr).sigma)


def test_exact_is_spin_flip_stable(rng):
    for _ in range(10):
        pr = _random_problem(rng, alpha=0.9)
        s = solve_exact(pr).sigma
        assert all(delta_energy(pr, s, i) >= -1e-9 for i in range(pr.n))


def test_exact_size_limit():
    pr = IsingProblem(J=sp.csr_matrix((26, 26)), h=np.zeros(26), c=0.0)
    with pytest.raises(ValueError):
        solve_exact(pr)


def test_ferromagnet_ground_state_is_uniform():
    city = build_lattice(3)
    pr = IsingProblem(J=sp.csr_matrix(-city.adjacency), h=np.zeros(9), c=0.0)
    exact = solve_exact(pr)
    assert len(set(exact.sigma.tolist())) == 1
    e, bits = _brute(pr)
    assert exact.energy == e
    sa = solve_sa(pr, SolverConfig(num_reads=10, sweeps=200, warm_start=False), np.ones(9))
    assert len(set(sa.sigma.tolist())) == 1 and sa.energy == e


def test_sa_finds_optimum_on_small_problems(rng):
    for _ in range(10):
        pr = _random_problem(rng, alpha=0.95)
        res = solve_sa(pr, SolverConfig(num_reads=100), random_signals(rng, 9))
        assert res.energy == pytest.approx(solve_exact(pr).energy, abs=1e-9)
        assert res.energy == evaluate(pr, res.sigma)
        assert res.energy == pytest.approx(min(res.read_energies), rel=1e-12)


def test_sa_best_so_far_is_monotone(rng):
    pr = _random_problem(rng, L=6)
    _, trace = solve_sa(pr, SolverConfig(num_reads=5, sweeps=200), np.ones(36), return_trace=True)
    assert trace.shape == (5, 200)
    assert np.all(np.diff(trace, axis=1) <= 1e-12)


def test_sa_is_deterministic_and_seed_sensitive(rng):
    pr = _random_problem(rng, L=8)
    init = random_signals(rng, 64)
    cfg = SolverConfig(num_reads=4, sweeps=50, seed=3)
    a, b = solve_sa(pr, cfg, init), solve_sa(pr, cfg, init)
    assert np.array_equal(a.sigma, b.sigma) and a.read_energies == b.read_energies
    short = SolverConfig(num_reads=4, sweeps=3, seed=3, warm_start=False)
    other = SolverConfig(num_reads=4, sweeps=3, seed=4, warm_start=False)
    assert solve_sa(pr, short, init).read_energies != solve_sa(pr, other, init).read_energies


def test_random_restart_mode_runs(rng):
    pr = _random_problem(rng)
    res = solve_sa(pr, SolverConfig(num_reads=50, warm_start=False), np.ones(9))
    assert res.energy == pytest.approx(solve_exact(pr).energy)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=st.floats(-1, 1), eta=st.floats(0, 4))
def test_gauge_symmetry(seed, alpha, eta):
    rng = np.random.default_rng(seed)
    city = build_lattice(3)
    p = ModelParams(alpha=alpha, eta=eta)
    x = rng.uniform(-5, 5, 9)
    prev = random_signals(rng, 9)
    a = solve_exact(build_problem(x, prev, p, city.adjacency))
    b = solve_exact(build_problem(-x, -prev, p, city.adjacency))
    assert b.energy == pytest.approx(a.energy, rel=1e-12, abs=1e-9)
    assert evaluate(build_problem(-x, -prev, p, city.adjacency), -a.sigma) == pytest.approx(b.energy, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), eta=st.floats(0.05, 5))
def test_alpha_zero_argmin_is_local_rule(seed, eta):
    rng = np.random.default_rng(seed)
    city = build_lattice(3)
    x = rng.uniform(-5, 5, 9)
    prev = random_signals(rng, 9)
    res = solve_exact(build_problem(x, prev, ModelParams(alpha=0.0, eta=eta), city.adjacency))
    assert np.array_equal(res.sigma, local_control(x, prev, eta))


def test_sa_trace_equals_local_trace_at_alpha_zero():
    p = ModelParams(alpha=0.0, eta=1.0)
    for seed in range(3):
        loc = run_trajectory(5, p, 40, SolverConfig(kind="local", theta=1.0), seed)
        sa = run_trajectory(5, p, 40, SolverConfig(kind="sa", num_reads=20, sweeps=300), seed)
        assert np.array_equal(loc.sigma, sa.sigma)


def test_exact_lower_bounds_other_controllers():
    city = build_lattice(3)
    p = ModelParams(alpha=0.8, eta=1.0)
    x, prev = init_state(3, 11)
    for _ in range(15):
        state = TrafficState(x=x, sigma_prev=prev)
        e_exact = control_step(state, p, SolverConfig(kind="exact"), city)[1].energy
        e_sa = control_step(state, p, FAST, city)[1].energy
        e_loc = control_step(state, p, SolverConfig(kind="local", theta=1.0), city)[1].energy
        assert e_exact <= e_sa + 1e-9 and e_exact <= e_loc + 1e-9
        s = control_step(state, p, SolverConfig(kind="local", theta=1.0), city)[0]
        x, prev = step_bias(x, s, p, city.adjacency), s


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(kind="qpu")
    with pytest.raises(ValueError):
        SolverConfig(num_reads=0)
    with pytest.raises(ValueError):
        SolverConfig(beta_min=2.0, beta_max=1.0)
    with pytest.raises(ValueError):
        SolverConfig(inner="tabu")
    d = SolverConfig()
    assert d.num_reads == 100 and d.sweeps == 1000 and d.warm_start
    b = d.betas()
    assert b[0] == pytest.approx(0.1) and b[-1] == pytest.approx(10.0) and b.size == 1000


def test_solve_problem_dispatch(rng):
    pr = _random_problem(rng)
    assert solve_problem(pr, SolverConfig(kind="exact"), np.ones(9)).energy == solve_exact(pr).energy
    with pytest.raises(ValueError):
        solve_problem(pr, SolverConfig(kind="local"), np.ones(9))
