"""Trajectory execution, threshold calibration and parameter sweeps."""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from ..dynamics import ModelParams, TrafficState, init_state, step_bias
from ..ising import build_problem, coupling_matrix, evaluate
from ..lattice import build_lattice
from ..metrics import (
    DegenerateSeriesError,
    TrajectoryLog,
    default_burn_in,
    fit_damped_cosine,
    spatial_autocorrelation,
    temporal_autocorrelation,
    time_average,
)
from ..partition import partition_lattice
from ..solvers import SolverConfig, control_step
from .artifacts import (
    CALIBRATION_HEADER,
    CURVE_HEADER,
    FITS_HEADER,
    RATIO_HEADER,
    SUMMARY_HEADER,
    TRACE_HEADER,
    fmt,
    render_snapshot,
    write_csv,
)
from .config import ExperimentConfig

log = logging.getLogger(__name__)


def step_seed(seed: int, t: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(t)]).generate_state(1, dtype=np.uint32)[0])


def run_trajectory(L: int, params: ModelParams, steps: int, solver: SolverConfig, seed: int) -> TrajectoryLog:
    """Simulate ``steps`` control decisions from the seeded initial state.

    Record t holds the flow bias x(t) seen by the controller, its decision
    sigma(t) and the Hamiltonian of that decision. Record 0 is the random
    initial display, scored with itself as the previous display.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    city = build_lattice(L)
    A = city.adjacency
    J = coupling_matrix(params.alpha, params.eta, A)
    x, sigma = init_state(L, seed)
    xs = np.empty((steps + 1, city.n))
    sigmas = np.empty((steps + 1, city.n), dtype=np.int8)
    H = np.empty(steps + 1)
    xs[0], sigmas[0] = x, sigma
    H[0] = evaluate(build_problem(x, sigma, params, A, J=J), sigma)
    partition = None
    if solver.kind == "partitioned":
        partition = partition_lattice(city, build_problem(x, sigma, params, A, J=J), solver.max_size, seed)
    for t in range(1, steps + 1):
        x = step_bias(x, sigma, params, A)
        cfg = replace(solver, seed=step_seed(seed, t))
        sigma, res = control_step(TrafficState(x=x, sigma_prev=sigma), params, cfg, city, J=J, partition=partition)
        xs[t], sigmas[t], H[t] = x, sigma, res.energy
    meta = {
        "L": L,
        "alpha": params.alpha,
        "eta": params.eta,
        "steps": steps,
        "method": solver.kind,
        "seed": seed,
    }
    if partition is not None:
        meta["groups"] = len(partition.groups)
    return TrajectoryLog(sigma=sigmas, x=xs, H=H, meta=meta)


def recompute_energies(log_: TrajectoryLog, params: ModelParams) -> np.ndarray:
    """Hamiltonian of every logged decision, rebuilt from the logged states alone."""
    L = log_.meta["L"]
    A = build_lattice(L).adjacency
    out = np.empty(log_.T + 1)
    for t in range(log_.T + 1):
        prev = log_.sigma[max(t - 1, 0)]
        out[t] = evaluate(build_problem(log_.x[t], prev, params, A), log_.sigma[t])
    return out


def calibrate_theta(
    eta: float,
    alpha: float,
    thetas: Sequence[float],
    L: int,
    steps: int,
    seeds: Sequence[int],
    burn_in: int | None = None,
) -> tuple[float, list[tuple[float, float]]]:
    """Pick the local-control threshold minimising the time-averaged objective at this eta.

    H-bar for each candidate is averaged over ``seeds``; ties go to the smaller
    threshold.
    """
    if len(thetas) == 0:
        raise ValueError("candidate threshold set is empty")
    if burn_in is None:
        burn_in = default_burn_in(steps)
    params = ModelParams(alpha=alpha, eta=eta)
    table = []
    for theta in sorted(float(t) for t in thetas):
        cfg = SolverConfig(kind="local", theta=theta)
        hbar = [time_average(run_trajectory(L, params, steps, cfg, s).H, burn_in) for s in seeds]
        table.append((theta, math.fsum(hbar) / len(hbar)))
    best = min(table, key=lambda row: (row[1], row[0]))
    return best[0], table


def _safe_fit(curve_fn):
    try:
        curve = curve_fn()
        return curve, fit_damped_cosine(curve)
    except (DegenerateSeriesError, ValueError) as exc:
        log.warning("correlation fit skipped: %s", exc)
        return None, None


def run_cell(cfg: ExperimentConfig, method: str, alpha: float, eta: float, seed: int, theta: float | None) -> dict:
    """One (method, alpha, eta, seed) trajectory plus its metrics, as plain data."""
    params = ModelParams(alpha=alpha, eta=eta)
    solver = cfg.solver(method, theta=theta)
    traj = run_trajectory(cfg.L, params, cfg.steps, solver, seed)
    burn = cfg.resolved_burn_in
    m = traj.magnetization()
    city = build_lattice(cfg.L)
    t_snap = cfg.resolved_snapshot_time
    tcurve, tfit = _safe_fit(lambda: temporal_autocorrelation(traj, cfg.resolved_max_lag))
    scurve, sfit = _safe_fit(
        lambda: spatial_autocorrelation(traj.sigma[t_snap], city, cfg.spatial_bin_width, cfg.spatial_max_distance)
    )
    return {
        "key": (method, alpha, eta, seed),
        "theta": solver.theta if method == "local" else None,
        "H": traj.H,
        "m": m,
        "H_bar": time_average(traj.H, burn),
        "m_bar": time_average(m, burn),
        "tcurve": tcurve,
        "tfit": tfit,
        "scurve": scurve,
        "sfit": sfit,
        "snapshot": traj.sigma[t_snap].copy(),
    }


def _run_cell_args(args):
    return run_cell(*args)


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0 or np.all(np.isnan(v)):
        return float("nan"), float("nan")
    v = v[~np.isnan(v)]
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return math.fsum(v) / v.size, std


def _fit_value(fit, attr):
    return float("nan") if fit is None else getattr(fit, attr)


class CellFailure(RuntimeError):
    pass


def sweep(cfg: ExperimentConfig, out_dir=None, workers: int | None = None) -> dict:
    """Run every method x alpha x eta x seed cell and write the CSV/SVG/JSON artifacts.

    Cells may run in worker processes; results are gathered and written in a
    fixed order so output bytes do not depend on scheduling.
    """
    started = time.time()
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = workers or cfg.workers

    thetas: dict = {}
    calibration_rows: dict = {}
    if any(cfg.calibrates(m) for m in cfg.methods):
        for alpha in cfg.alpha:
            for eta in cfg.eta:
                theta_hat, table = calibrate_theta(
                    eta, alpha, cfg.theta_candidates, cfg.L, cfg.steps, cfg.seeds, cfg.resolved_burn_in
                )
                thetas[(alpha, eta)] = theta_hat
                calibration_rows[(alpha, eta)] = table

    jobs = [
        (cfg, method, alpha, eta, seed, thetas.get((alpha, eta)) if cfg.calibrates(method) else None)
        for method in cfg.methods
        for alpha in cfg.alpha
        for eta in cfg.eta
        for seed in cfg.seeds
    ]
    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_cell_args, job): job[1:5] for job in jobs}
            for fut, cell in futures.items():
                try:
                    res = fut.result()
                except Exception as exc:
                    raise CellFailure(f"cell method={cell[0]} alpha={cell[1]} eta={cell[2]} seed={cell[3]} failed: {exc}") from exc
                results[res["key"]] = res
    else:
        for job in jobs:
            try:
                res = run_cell(*job)
            except Exception as exc:
                raise CellFailure(f"cell method={job[1]} alpha={job[2]} eta={job[3]} seed={job[4]} failed: {exc}") from exc
            results[res["key"]] = res

    keys = [job[1:5] for job in jobs]
    _write_artifacts(cfg, out, keys, results, thetas, calibration_rows)
    meta = {
        "config": cfg.to_dict(),
        "burn_in": cfg.resolved_burn_in,
        "theta_hat": [{"alpha": a, "eta": e, "theta": t} for (a, e), t in sorted(thetas.items())],
        "versions": _versions(),
        "wall_time_s": round(time.time() - started, 3),
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return {"out": out, "results": results, "thetas": thetas}


def _versions() -> dict:
    import scipy

    from .. import __version__

    return {"sigising": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def _write_artifacts(cfg, out: Path, keys, results, thetas, calibration_rows) -> None:
    city = build_lattice(cfg.L)
    trace_rows, fit_rows, curve_rows, summary_rows = [], [], [], []
    for key in keys:
        method, alpha, eta, seed = key
        r = results[key]
        for t, (H, m) in enumerate(zip(r["H"], r["m"])):
            trace_rows.append((t, method, alpha, eta, seed, float(H), float(m)))
        fit_rows.append((
            method, alpha, eta, seed, r["H_bar"], r["m_bar"],
            _fit_value(r["tfit"], "lam"), _fit_value(r["tfit"], "omega"), _fit_value(r["tfit"], "residual"),
            _fit_value(r["sfit"], "lam"), _fit_value(r["sfit"], "omega"), _fit_value(r["sfit"], "residual"),
        ))
        for kind in ("temporal", "spatial"):
            curve = r["tcurve" if kind == "temporal" else "scurve"]
            if curve is not None:
                curve_rows.extend((method, alpha, eta, seed, kind, float(z), float(v)) for z, v in zip(curve.z, curve.R))

    cells = sorted({k[:3] for k in keys}, key=lambda c: (cfg.methods.index(c[0]), c[1], c[2]))
    hbar_by_cell = {}
    for cell in cells:
        rs = [results[(*cell, s)] for s in cfg.seeds]
        H_mean, H_std = _mean_std([r["H_bar"] for r in rs])
        m_mean, m_std = _mean_std([abs(r["m_bar"]) for r in rs])
        hbar_by_cell[cell] = H_mean
        summary_rows.append((
            *cell, H_mean, H_std, m_mean, m_std,
            _mean_std([_fit_value(r["tfit"], "lam") for r in rs])[0],
            _mean_std([_fit_value(r["tfit"], "omega") for r in rs])[0],
            _mean_std([_fit_value(r["sfit"], "lam") for r in rs])[0],
            _mean_std([_fit_value(r["sfit"], "omega") for r in rs])[0],
        ))
        r0 = results[(*cell, cfg.seeds[0])]
        render_snapshot(
            r0["snapshot"], city,
            out / "snapshots" / f"{cell[0]}_alpha{fmt(cell[1])}_eta{fmt(cell[2])}_seed{cfg.seeds[0]}.svg",
        )

    write_csv(out / "traces.csv", TRACE_HEADER, trace_rows)
    write_csv(out / "fits.csv", FITS_HEADER, fit_rows)
    write_csv(out / "correlations.csv", CURVE_HEADER, curve_rows)
    write_csv(out / "summary.csv", SUMMARY_HEADER, summary_rows)

    for (alpha, eta), table in sorted(calibration_rows.items()):
        write_csv(out / f"calibration_alpha{fmt(alpha)}_eta{fmt(eta)}.csv", CALIBRATION_HEADER, table)
    if thetas:
        write_csv(
            out / "theta_hat.csv", ["alpha", "eta", "theta_hat"],
            [(a, e, t) for (a, e), t in sorted(thetas.items())],
        )

    if "sa" in cfg.methods and "partitioned" in cfg.methods:
        ratio_rows = []
        for alpha in cfg.alpha:
            for eta in cfg.eta:
                hp = hbar_by_cell[("partitioned", alpha, eta)]
                hu = hbar_by_cell[("sa", alpha, eta)]
                ratio_rows.append((alpha, eta, hp, hu, hp / hu))
        write_csv(out / "ratio.csv", RATIO_HEADER, ratio_rows)
