"""Experiment configuration: JSON file plus CLI overrides, validated up front."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from ..solvers import SOLVER_KINDS, SolverConfig


class ConfigError(ValueError):
    pass


DEFAULT_THETAS = [0.25 * k for k in range(13)]  # 0.0, 0.25, ..., 3.0

_SOLVER_FIELDS = {f.name for f in dataclasses.fields(SolverConfig)} - {"kind", "seed"}


@dataclass
class ExperimentConfig:
    L: int = 8
    alpha: list = field(default_factory=lambda: [0.8])
    eta: list = field(default_factory=lambda: [1.0])
    steps: int = 200
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    methods: list = field(default_factory=lambda: ["local", "sa"])
    # per-method SolverConfig overrides; local "theta" may be "calibrate"
    solvers: dict = field(default_factory=dict)
    burn_in: Optional[int] = None
    out: str = "runs/default"
    partition_cap: int = 64
    theta_candidates: list = field(default_factory=lambda: list(DEFAULT_THETAS))
    workers: int = 1
    snapshot_time: int = 100
    max_lag: int = 30
    spatial_bin_width: Optional[float] = 1.0
    spatial_max_distance: float = 10.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.L, int) or self.L < 3:
            raise ConfigError(f"L must be an integer >= 3, got {self.L!r}")
        self.alpha = _as_list("alpha", self.alpha)
        self.eta = _as_list("eta", self.eta)
        for a in self.alpha:
            if not -1.0 <= a <= 1.0:
                raise ConfigError(f"alpha values must lie in [-1, 1], got {a}")
        for e in self.eta:
            if e < 0:
                raise ConfigError(f"eta values must be nonnegative, got {e}")
        if not isinstance(self.steps, int) or self.steps < 1:
            raise ConfigError(f"steps must be a positive integer, got {self.steps!r}")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of integers")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        for m in self.methods:
            if m not in SOLVER_KINDS:
                raise ConfigError(f"unknown method {m!r}; expected one of {SOLVER_KINDS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must not repeat")
        for name, overrides in self.solvers.items():
            if name not in SOLVER_KINDS:
                raise ConfigError(f"solver settings given for unknown method {name!r}")
            unknown = set(overrides) - _SOLVER_FIELDS
            if unknown:
                raise ConfigError(f"unknown solver setting(s) for {name}: {sorted(unknown)}")
        if self.burn_in is not None and not 0 <= self.burn_in <= self.steps:
            raise ConfigError(f"burn_in must lie in [0, steps], got {self.burn_in}")
        if self.partition_cap < 1:
            raise ConfigError("partition_cap must be positive")
        if not self.theta_candidates or any(t < 0 for t in self.theta_candidates):
            raise ConfigError("theta_candidates must be a non-empty list of nonnegative numbers")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.max_lag < 1:
            raise ConfigError("max_lag must be positive")
        if self.spatial_bin_width is not None and self.spatial_bin_width <= 0:
            raise ConfigError("spatial_bin_width must be positive or null")
        # build every solver once so bad values fail before any run starts
        for m in self.methods:
            self.solver(m)

    @property
    def resolved_burn_in(self) -> int:
        return self.steps // 4 if self.burn_in is None else self.burn_in

    @property
    def resolved_snapshot_time(self) -> int:
        return min(self.snapshot_time, self.steps)

    @property
    def resolved_max_lag(self) -> int:
        return min(self.max_lag, self.steps - 1)

    def calibrates(self, method: str) -> bool:
        return method == "local" and self.solvers.get("local", {}).get("theta", "calibrate") == "calibrate"

    def solver(self, method: str, theta: Optional[float] = None) -> SolverConfig:
        settings = dict(self.solvers.get(method, {}))
        if method == "local":
            t = settings.pop("theta", "calibrate")
            settings["theta"] = theta if t == "calibrate" and theta is not None else (1.0 if t == "calibrate" else t)
        if method == "partitioned":
            settings.setdefault("max_size", self.partition_cap)
        try:
            return SolverConfig(kind=method, **settings)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad solver settings for {method}: {exc}") from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _as_list(name: str, value: Any) -> list:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)]
    if isinstance(value, list) and value and all(isinstance(v, (int, float)) for v in value):
        return [float(v) for v in value]
    raise ConfigError(f"{name} must be a number or a non-empty list of numbers")


PRESETS = {
    "desk": {},
    # L=50 with the default SA settings takes several hours on one core
    "full": {"L": 50, "alpha": [0.0, 0.2, 0.4, 0.6, 0.8, 0.9], "seeds": [0], "methods": ["local", "sa", "partitioned"]},
}


def load_config(path: Union[str, Path, None] = None, overrides: Optional[dict] = None, preset: str = "desk") -> ExperimentConfig:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    data: dict = dict(PRESETS[preset])
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        data.update(loaded)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
