"""Run configuration: one YAML file per experiment, validated up front.

A config is a mapping of blocks (system, grid, forward, data, ot, infer,
io) plus a top-level thread count. Unknown keys anywhere are rejected
with the allowed set named, every numeric range is checked before any
compute starts, and the fully-resolved mapping (defaults filled in) can
be echoed beside a run's outputs so the run is re-creatable from that
file alone.
"""

from __future__ import annotations

import copy
import importlib
import os

import numpy as np
import yaml

from .dynamics import (
    DEFAULT_BOUNDS,
    DEFAULT_THETA,
    ParameterVector,
    SystemSpec,
    make_system,
)
from .errors import ConfigError
from .gradient import LossConfig
from .grid import Grid
from .optimize import BacktrackingConfig, InferenceConfig
from .ot import CostSpec
from .simulate import NoiseSpec

__all__ = ["RunConfig", "load_config"]

_DEFAULTS = {
    "system": {
        "kind": None,
        "theta": None,
        "theta0": None,
        "bounds": None,
        "factory": None,
    },
    "grid": {"lo": None, "hi": None, "dx": None, "counts": None},
    "forward": {
        "epsilon": 1e-6,
        "safety": 0.9,
        "k_smooth": 0.0,
        "c": None,
        "solver": "direct",
        "power_tol": 1e-12,
        "power_max_iters": 500_000,
    },
    "data": {
        "dt": 1e-3,
        "T": 1000.0,
        "x0": None,
        "seed": 0,
        "noise": {"kind": "none", "sigma": 0.0, "mode": "sde"},
        "subsample": None,
        "subsample_seed": 1,
        "burn_in": 0.01,
        "bin_size": None,
        "subsample_sweep": None,
        "sweep_pairs": 3,
        "sweep_seed": 0,
    },
    "ot": {
        "p": 2.0,
        "eta_start_scale": 1e-1,
        "eta_floor_scale": 5e-4,
        "eta_shrink": 0.5,
        "tol": 1e-7,
        "max_iters": 10000,
        "polish_rounds": 1,
        "frozen_iters": None,
        "warm_start_at_floor": True,
        "omega": 1.7,
    },
    "infer": {
        "mode": "coordinate",
        "gradient_method": "adjoint",
        "tau0": 1.0,
        "beta": 0.5,
        "sigma": 1e-4,
        "max_halvings": 60,
        "max_iters": 100,
        "grad_tol": None,
        "early_stop_loss": None,
        "coordinate_order": "cyclic",
        "seed": 0,
        "scale_tau": True,
    },
    "io": {"out_dir": ".", "reference": None, "trajectory": None, "mu": None, "nu": None},
}


def _check_unknown(name: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(
            f"unknown key(s) {unknown} in {name!r}; allowed: {sorted(allowed)}"
        )


def _merge_block(name: str, defaults: dict, given) -> dict:
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(f"block {name!r} must be a mapping")
    _check_unknown(name, given, defaults)
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(defaults.get(key), dict) and defaults[key]:
            out[key] = _merge_block(f"{name}.{key}", defaults[key], value)
        else:
            out[key] = value
    return out


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


class RunConfig:
    """Validated, fully-resolved experiment configuration."""

    def __init__(self, raw: dict | None):
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping of blocks")
        allowed = set(_DEFAULTS) | {"threads"}
        _check_unknown("config", raw, allowed)
        self.data = {
            name: _merge_block(name, defaults, raw.get(name))
            for name, defaults in _DEFAULTS.items()
        }
        threads = raw.get("threads", 0)
        _require(
            isinstance(threads, int) and threads >= 0,
            "threads must be a nonnegative integer (0 = all cores)",
        )
        self.data["threads"] = threads
        self._validate()

    # -- validation ----------------------------------------------------

    def _validate(self) -> None:
        sysb = self.data["system"]
        if sysb["kind"] is not None:
            kinds = tuple(DEFAULT_THETA) + ("custom",)
            _require(
                sysb["kind"] in kinds,
                f"system.kind must be one of {sorted(kinds)}, got {sysb['kind']!r}",
            )
            if sysb["kind"] == "custom":
                _require(
                    isinstance(sysb["factory"], str),
                    "system.factory (dotted path) is required for kind 'custom'",
                )
        for key in ("theta", "theta0"):
            if sysb[key] is not None:
                _require(
                    isinstance(sysb[key], (list, tuple))
                    and all(isinstance(v, (int, float)) for v in sysb[key]),
                    f"system.{key} must be a list of numbers",
                )
        if sysb["bounds"] is not None:
            ok = isinstance(sysb["bounds"], (list, tuple)) and all(
                isinstance(b, (list, tuple)) and len(b) == 2 for b in sysb["bounds"]
            )
            _require(ok, "system.bounds must be a list of [lo, hi] pairs")

        fwd = self.data["forward"]
        _require(0 < fwd["epsilon"] < 1, "forward.epsilon must lie in (0, 1)")
        _require(0 < fwd["safety"] < 1, "forward.safety must lie in (0, 1)")
        _require(fwd["k_smooth"] >= 0, "forward.k_smooth must be nonnegative")
        _require(
            fwd["c"] is None or fwd["c"] > 0, "forward.c must be positive when given"
        )
        _require(
            fwd["solver"] in ("direct", "power"),
            "forward.solver must be 'direct' or 'power'",
        )

        dat = self.data["data"]
        _require(dat["dt"] > 0, "data.dt must be positive")
        _require(dat["T"] > 0, "data.T must be positive")
        _require(0 <= dat["burn_in"] < 1, "data.burn_in must lie in [0, 1)")
        noise = dat["noise"]
        _require(
            noise["kind"] in ("none", "intrinsic", "extrinsic"),
            "data.noise.kind must be none, intrinsic or extrinsic",
        )
        _require(noise["sigma"] >= 0, "data.noise.sigma must be nonnegative")
        _require(
            noise["mode"] in ("sde", "per-step"),
            "data.noise.mode must be sde or per-step",
        )
        if dat["subsample"] is not None:
            _require(
                isinstance(dat["subsample"], int) and dat["subsample"] > 0,
                "data.subsample must be a positive integer",
            )
        if dat["subsample_sweep"] is not None:
            ok = isinstance(dat["subsample_sweep"], (list, tuple)) and all(
                isinstance(v, int) and v > 0 for v in dat["subsample_sweep"]
            )
            _require(ok, "data.subsample_sweep must be a list of positive integers")
        if dat["bin_size"] is not None:
            _require(dat["bin_size"] > 0, "data.bin_size must be positive")

        # these two construct validated objects; surface their message
        # as a config error with the block named
        try:
            self.cost_spec()
        except ValueError as exc:
            raise ConfigError(f"ot block: {exc}") from exc
        try:
            inf = self.data["infer"]
            BacktrackingConfig(
                tau0=inf["tau0"],
                beta=inf["beta"],
                sigma=inf["sigma"],
                max_halvings=inf["max_halvings"],
            )
            _require(inf["mode"] in ("joint", "coordinate"), "infer.mode invalid")
            _require(
                inf["gradient_method"] in ("ift", "adjoint"),
                "infer.gradient_method must be 'ift' or 'adjoint'",
            )
            _require(
                inf["coordinate_order"] in ("cyclic", "random"),
                "infer.coordinate_order must be 'cyclic' or 'random'",
            )
            _require(
                isinstance(inf["max_iters"], int) and inf["max_iters"] > 0,
                "infer.max_iters must be a positive integer",
            )
        except ValueError as exc:
            raise ConfigError(f"infer block: {exc}") from exc

    # -- builders ------------------------------------------------------

    def system(self) -> SystemSpec:
        sysb = self.data["system"]
        _require(sysb["kind"] is not None, "system.kind is required")
        if sysb["kind"] == "custom":
            path = sysb["factory"]
            mod_name, sep, attr = path.partition(":")
            if not sep:
                mod_name, _, attr = path.rpartition(".")
            _require(bool(mod_name) and bool(attr), f"malformed factory path {path!r}")
            try:
                factory = getattr(importlib.import_module(mod_name), attr)
            except (ImportError, AttributeError) as exc:
                raise ConfigError(f"cannot load system.factory {path!r}: {exc}") from exc
            spec = factory()
            _require(
                isinstance(spec, SystemSpec),
                f"system.factory {path!r} did not return a system description",
            )
            return spec
        return make_system(sysb["kind"])

    def theta(self, system: SystemSpec) -> np.ndarray:
        sysb = self.data["system"]
        if sysb["theta"] is not None:
            val = np.asarray(sysb["theta"], dtype=float)
        elif system.kind in DEFAULT_THETA:
            val = np.asarray(DEFAULT_THETA[system.kind], dtype=float)
        else:
            raise ConfigError("system.theta is required for custom systems")
        _require(
            val.size == system.n_params,
            f"system.theta needs {system.n_params} entries, got {val.size}",
        )
        return val

    def theta0(self, system: SystemSpec) -> ParameterVector:
        sysb = self.data["system"]
        _require(sysb["theta0"] is not None, "system.theta0 is required for inversion")
        val = np.asarray(sysb["theta0"], dtype=float)
        _require(
            val.size == system.n_params,
            f"system.theta0 needs {system.n_params} entries, got {val.size}",
        )
        bounds = sysb["bounds"]
        try:
            return ParameterVector(val, None if bounds is None else tuple(bounds))
        except ValueError as exc:
            raise ConfigError(f"system block: {exc}") from exc

    def grid(self, system: SystemSpec | None = None) -> Grid:
        g = self.data["grid"]
        lo, hi = g["lo"], g["hi"]
        if lo is None or hi is None:
            _require(
                system is not None and system.kind in DEFAULT_BOUNDS,
                "grid.lo/grid.hi are required (no default box for this system)",
            )
            box = DEFAULT_BOUNDS[system.kind]
            lo = [a for a, _ in box] if lo is None else lo
            hi = [b for _, b in box] if hi is None else hi
        _require(
            g["dx"] is not None or g["counts"] is not None,
            "grid needs dx or counts",
        )
        _require(
            g["dx"] is None or g["counts"] is None,
            "give grid.dx or grid.counts, not both",
        )
        try:
            if g["counts"] is not None:
                return Grid(lo=tuple(lo), hi=tuple(hi), counts=tuple(g["counts"]))
            return Grid.from_spacing(lo, hi, g["dx"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"grid block: {exc}") from exc

    def cost_spec(self) -> CostSpec:
        ot = self.data["ot"]
        return CostSpec(
            p=float(ot["p"]),
            eta_start_scale=float(ot["eta_start_scale"]),
            eta_floor_scale=float(ot["eta_floor_scale"]),
            eta_shrink=float(ot["eta_shrink"]),
            marginal_tol=float(ot["tol"]),
            max_iters=int(ot["max_iters"]),
            polish_rounds=int(ot["polish_rounds"]),
            frozen_iters=ot["frozen_iters"],
            warm_start_at_floor=bool(ot["warm_start_at_floor"]),
            omega=float(ot["omega"]),
        )

    def noise_spec(self) -> NoiseSpec:
        n = self.data["data"]["noise"]
        try:
            return NoiseSpec(kind=n["kind"], sigma=float(n["sigma"]), mode=n["mode"])
        except ValueError as exc:
            raise ConfigError(f"data.noise block: {exc}") from exc

    def loss_config(self, grid: Grid) -> LossConfig:
        fwd = self.data["forward"]
        try:
            return LossConfig(
                grid=grid,
                epsilon=float(fwd["epsilon"]),
                safety=float(fwd["safety"]),
                k_smooth=float(fwd["k_smooth"]),
                c=None if fwd["c"] is None else float(fwd["c"]),
                cost=self.cost_spec(),
                method=self.data["infer"]["gradient_method"],
            )
        except ValueError as exc:
            raise ConfigError(f"forward block: {exc}") from exc

    def inference_config(self, system: SystemSpec, grid: Grid) -> InferenceConfig:
        inf = self.data["infer"]
        return InferenceConfig(
            theta0=self.theta0(system),
            loss=self.loss_config(grid),
            mode=inf["mode"],
            gradient_method=inf["gradient_method"],
            backtracking=BacktrackingConfig(
                tau0=float(inf["tau0"]),
                beta=float(inf["beta"]),
                sigma=float(inf["sigma"]),
                max_halvings=int(inf["max_halvings"]),
            ),
            max_iters=int(inf["max_iters"]),
            grad_tol=None if inf["grad_tol"] is None else float(inf["grad_tol"]),
            early_stop_loss=(
                None
                if inf["early_stop_loss"] is None
                else float(inf["early_stop_loss"])
            ),
            coordinate_order=inf["coordinate_order"],
            seed=int(inf["seed"]),
            scale_tau=bool(inf["scale_tau"]),
        )

    def x0(self, system: SystemSpec) -> np.ndarray:
        raw = self.data["data"]["x0"]
        if raw is None:
            return np.ones(system.dim)
        val = np.asarray(raw, dtype=float)
        _require(
            val.size == system.dim,
            f"data.x0 needs {system.dim} entries, got {val.size}",
        )
        return val

    def threads(self) -> int:
        env = os.environ.get("MEASINV_THREADS")
        if env is not None:
            try:
                val = int(env)
            except ValueError as exc:
                raise ConfigError(f"MEASINV_THREADS must be an integer, got {env!r}") from exc
            _require(val >= 0, "MEASINV_THREADS must be nonnegative")
            return val
        return self.data["threads"]

    # -- echo ----------------------------------------------------------

    def resolved(self) -> dict:
        return copy.deepcopy(self.data)

    def echo(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.resolved(), fh, sort_keys=False)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    return RunConfig(raw)
