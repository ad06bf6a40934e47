"""Command-line entry point: ``sigising {run,sweep,calibrate,partition,fit,export-ising}``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..dynamics import ModelParams, init_state
from ..ising import build_problem, write_problem
from ..lattice import build_lattice
from ..metrics import CorrelationCurve, fit_damped_cosine
from ..partition import partition_lattice, read_partition, write_partition
from ..solvers import SOLVER_KINDS
from .artifacts import CALIBRATION_HEADER, TRACE_HEADER, read_csv, render_snapshot, write_csv
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import calibrate_theta, run_trajectory, sweep

log = logging.getLogger("sigising")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--preset", default="desk", help="base preset: desk (L=8) or full (L=50)")
    p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    p.add_argument("--method", choices=SOLVER_KINDS)
    p.add_argument("--alpha", type=_floats)
    p.add_argument("--eta", type=_floats)
    p.add_argument("--steps", type=int)
    p.add_argument("--L", type=int, dest="L")
    p.add_argument("--out", type=str)
    p.add_argument("--workers", type=int)


def _resolve(args) -> ExperimentConfig:
    overrides = {
        "L": args.L,
        "alpha": args.alpha,
        "eta": args.eta,
        "steps": args.steps,
        "out": args.out,
        "workers": args.workers,
        "seeds": [args.seed] if args.seed is not None else None,
        "methods": [args.method] if args.method else None,
    }
    return load_config(args.config, overrides, preset=args.preset)


def cmd_run(args) -> int:
    cfg = _resolve(args)
    method = cfg.methods[0]
    seed = cfg.seeds[0]
    alpha, eta = cfg.alpha[0], cfg.eta[0]
    theta = None
    if cfg.calibrates(method):
        theta, _ = calibrate_theta(eta, alpha, cfg.theta_candidates, cfg.L, cfg.steps, [seed], cfg.resolved_burn_in)
    traj = run_trajectory(cfg.L, ModelParams(alpha=alpha, eta=eta), cfg.steps, cfg.solver(method, theta), seed)
    out = Path(cfg.out)
    m = traj.magnetization()
    write_csv(
        out / "trace.csv", TRACE_HEADER,
        [(t, method, alpha, eta, seed, float(traj.H[t]), float(m[t])) for t in range(traj.T + 1)],
    )
    render_snapshot(traj.sigma[cfg.resolved_snapshot_time], build_lattice(cfg.L), out / "snapshot.svg")
    meta = {"config": cfg.to_dict(), "method": method, "seed": seed, "theta": theta}
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'trace.csv'}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve(args)
    res = sweep(cfg)
    print(f"wrote artifacts to {res['out']}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _resolve(args)
    out = Path(cfg.out)
    for alpha in cfg.alpha:
        for eta in cfg.eta:
            theta, table = calibrate_theta(eta, alpha, cfg.theta_candidates, cfg.L, cfg.steps, cfg.seeds, cfg.resolved_burn_in)
            path = out / f"calibration_alpha{alpha!r}_eta{eta!r}.csv"
            write_csv(path, CALIBRATION_HEADER, table)
            print(f"alpha={alpha!r} eta={eta!r} theta_hat={theta!r} ({path})")
    return 0


def cmd_partition(args) -> int:
    cfg = _resolve(args)
    city = build_lattice(cfg.L)
    x, sigma = init_state(cfg.L, cfg.seeds[0])
    problem = build_problem(x, sigma, ModelParams(alpha=cfg.alpha[0], eta=cfg.eta[0]), city.adjacency)
    cap = args.max_size or cfg.partition_cap
    if args.inspect:
        part = read_partition(args.inspect, cap, problem)
    else:
        part = partition_lattice(city, problem, cap, cfg.seeds[0])
        path = Path(cfg.out) / "partition.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_partition(part, path)
        print(f"wrote {path}")
    sizes = [len(g) for g in part.groups]
    print(f"groups={len(sizes)} min_size={min(sizes)} max_size={max(sizes)} cut_edges={part.cut_edges} cut_weight={part.cut_weight!r}")
    return 0


def cmd_fit(args) -> int:
    rows = read_csv(args.input)
    if args.kind:
        rows = [r for r in rows if r.get("kind") == args.kind]
    for col, val in (("method", args.filter_method), ("alpha", args.filter_alpha), ("seed", args.filter_seed)):
        if val is not None:
            rows = [r for r in rows if r.get(col) == val]
    if not rows or "z" not in rows[0] or "R" not in rows[0]:
        raise ConfigError(f"{args.input}: need rows with z and R columns")
    curve = CorrelationCurve(z=np.array([float(r["z"]) for r in rows]), R=np.array([float(r["R"]) for r in rows]))
    fit = fit_damped_cosine(curve)
    print(f"lambda={fit.lam!r} omega={fit.omega!r} residual={fit.residual!r}")
    return 0


def cmd_export(args) -> int:
    cfg = _resolve(args)
    city = build_lattice(cfg.L)
    x, sigma = init_state(cfg.L, cfg.seeds[0])
    problem = build_problem(x, sigma, ModelParams(alpha=cfg.alpha[0], eta=cfg.eta[0]), city.adjacency)
    path = Path(cfg.out) / "problem.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_problem(problem, path)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigising", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a single trajectory")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the methods x alpha x eta x seeds grid")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="choose the local-control threshold for each (alpha, eta)")
    _common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("partition", help="emit or inspect a lattice partition")
    _common(p)
    p.add_argument("--max-size", type=int)
    p.add_argument("--inspect", type=Path, help="partition file to read and summarise")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("fit", help="fit exp(-lambda z) cos(omega z) to a CSV correlation curve")
    p.add_argument("input", type=Path)
    p.add_argument("--kind", choices=["temporal", "spatial"])
    p.add_argument("--filter-method")
    p.add_argument("--filter-alpha")
    p.add_argument("--filter-seed")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("export-ising", help="write the initial-step Ising problem as text")
    _common(p)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure of any kind maps to exit code 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
