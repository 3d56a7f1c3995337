"""Velocity fields of the benchmark systems and their parameter derivatives.

Each system is a first-order ODE x' = v(x; theta) on R^3 (custom systems
may use a different dimension). Parameters enter v smoothly and
`velocity_param_jacobian` returns the exact derivative of v with respect
to each parameter; operator assembly downstream trusts these derivatives,
so they are tested against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "SystemSpec",
    "ParameterVector",
    "KINDS",
    "DEFAULT_THETA",
    "DEFAULT_BOUNDS",
    "PARAM_NAMES",
    "make_system",
    "custom_system",
    "velocity",
    "velocity_param_jacobian",
]

# Saturation level of the arctan-limited variant.
ARCTAN_CAP = 50.0

KINDS = ("lorenz", "rossler", "chen", "arctan_lorenz", "custom")

DEFAULT_THETA = {
    "lorenz": (10.0, 28.0, 8.0 / 3.0),
    "rossler": (0.1, 0.1, 14.0),
    "chen": (40.0, 3.0, 28.0),
    "arctan_lorenz": (10.0, 28.0, 8.0 / 3.0),
}

# Default boxes chosen to contain the attractor for the default theta
# with margin; all overridable in the grid config block. The z-interval
# keeps the spiral points (+-sqrt(beta(rho-1)), ., rho-1) away from cell
# centers on round coarse grids: dead-center alignment turns those cells
# into numerical sinks of the upwind chain and the small-teleportation
# density collapses onto them.
DEFAULT_BOUNDS = {
    "lorenz": ((-25.0, 25.0), (-30.0, 30.0), (-4.0, 56.0)),
    "arctan_lorenz": ((-25.0, 25.0), (-30.0, 30.0), (-4.0, 56.0)),
    "rossler": ((-24.0, 27.0), (-26.0, 22.0), (-2.0, 42.0)),
    "chen": ((-28.0, 28.0), (-30.0, 30.0), (0.0, 48.0)),
}

PARAM_NAMES = {
    "lorenz": ("sigma", "rho", "beta"),
    "rossler": ("a", "b", "c"),
    "chen": ("a", "b", "c"),
    "arctan_lorenz": ("sigma", "rho", "beta"),
}


@dataclass(frozen=True)
class SystemSpec:
    """Which system, which parameters, and where it lives.

    For kind "custom", `velocity_fn(theta, x) -> (..., dim)` and
    `jacobian_fn(theta, x) -> (m, ..., dim)` must be supplied; built-in
    kinds ignore those fields.
    """

    kind: str
    param_names: tuple[str, ...]
    domain_bounds: tuple[tuple[float, float], ...]
    dim: int = 3
    velocity_fn: Callable | None = None
    jacobian_fn: Callable | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "custom":
            if self.velocity_fn is None or self.jacobian_fn is None:
                raise ValueError("custom systems need velocity_fn and jacobian_fn")
        if len(self.domain_bounds) != self.dim:
            raise ValueError("domain_bounds must have one (lo, hi) pair per dimension")
        for d, (a, b) in enumerate(self.domain_bounds):
            if not b > a:
                raise ValueError(f"domain axis {d}: hi must exceed lo")

    @property
    def n_params(self) -> int:
        return len(self.param_names)


@dataclass
class ParameterVector:
    """Parameter values with optional per-component box bounds."""

    values: np.ndarray
    bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.bounds is not None:
            self.bounds = tuple((float(a), float(b)) for a, b in self.bounds)
            if len(self.bounds) != self.values.size:
                raise ValueError("bounds length must match values length")
            for k, (a, b) in enumerate(self.bounds):
                if not b > a:
                    raise ValueError(f"parameter {k}: bound hi must exceed lo")

    def clamped(self, values: np.ndarray | None = None) -> np.ndarray:
        v = self.values if values is None else np.asarray(values, dtype=float)
        if self.bounds is None:
            return v.copy()
        lo = np.array([a for a, _ in self.bounds])
        hi = np.array([b for _, b in self.bounds])
        return np.clip(v, lo, hi)


def make_system(kind: str, domain_bounds=None) -> SystemSpec:
    """Construct a built-in system, with the default box unless overridden."""
    if kind == "custom":
        raise ValueError("use custom_system() for custom kinds")
    if kind not in PARAM_NAMES:
        raise ValueError(f"unknown system kind {kind!r}; expected one of {KINDS}")
    bounds = DEFAULT_BOUNDS[kind] if domain_bounds is None else tuple(
        (float(a), float(b)) for a, b in domain_bounds
    )
    return SystemSpec(kind=kind, param_names=PARAM_NAMES[kind], domain_bounds=bounds)


def custom_system(velocity_fn, jacobian_fn, param_names, domain_bounds, dim=3) -> SystemSpec:
    return SystemSpec(
        kind="custom",
        param_names=tuple(param_names),
        domain_bounds=tuple((float(a), float(b)) for a, b in domain_bounds),
        dim=dim,
        velocity_fn=velocity_fn,
        jacobian_fn=jacobian_fn,
    )


# -- velocity fields ---------------------------------------------------
# All built-ins broadcast over leading axes: x of shape (..., 3) gives
# a velocity of shape (..., 3) and a jacobian of shape (m, ..., 3).


def _check_theta(spec: SystemSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != spec.n_params:
        raise ValueError(
            f"{spec.kind} expects {spec.n_params} parameters, got {theta.size}"
        )
    return theta


def _lorenz_core(theta, x):
    s, r, b = theta
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([s * (Y - X), X * (r - Z) - Y, X * Y - b * Z], axis=-1)


def _lorenz_core_jac(theta, x):
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    zero = np.zeros_like(X)
    return np.stack(
        [
            np.stack([Y - X, zero, zero], axis=-1),
            np.stack([zero, X, zero], axis=-1),
            np.stack([zero, zero, -Z], axis=-1),
        ],
        axis=0,
    )


def _velocity_builtin(spec: SystemSpec, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    if spec.kind == "lorenz":
        return _lorenz_core(theta, x)
    if spec.kind == "rossler":
        a, b, c = theta
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([-Y - Z, X + a * Y, b + Z * (X - c)], axis=-1)
    if spec.kind == "chen":
        a, b, c = theta
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        return np.stack(
            [a * (Y - X), (c - a) * X - X * Z + c * Y, X * Y - b * Z], axis=-1
        )
    if spec.kind == "arctan_lorenz":
        u = _lorenz_core(theta, x)
        return ARCTAN_CAP * np.arctan(u / ARCTAN_CAP)
    raise AssertionError(spec.kind)


def velocity(spec: SystemSpec, theta, x) -> np.ndarray:
    """Evaluate v(x; theta) for points x of shape (..., dim)."""
    theta = _check_theta(spec, theta)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim:
        raise ValueError(f"points must have {spec.dim} coordinates")
    if spec.kind == "custom":
        v = np.asarray(spec.velocity_fn(theta, x), dtype=float)
        if v.shape != x.shape:
            raise ValueError("custom velocity_fn returned a mismatched shape")
        return v
    return _velocity_builtin(spec, theta, x)


def velocity_param_jacobian(spec: SystemSpec, theta, x) -> np.ndarray:
    """Exact d v / d theta_k at points x.

    Returns an array of shape (m,) + x.shape, row k holding the
    derivative of the velocity with respect to parameter k.
    """
    theta = _check_theta(spec, theta)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim:
        raise ValueError(f"points must have {spec.dim} coordinates")
    if spec.kind == "custom":
        jac = np.asarray(spec.jacobian_fn(theta, x), dtype=float)
        if jac.shape != (spec.n_params,) + x.shape:
            raise ValueError("custom jacobian_fn returned a mismatched shape")
        return jac
    if spec.kind == "lorenz":
        return _lorenz_core_jac(theta, x)
    if spec.kind == "rossler":
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        zero = np.zeros_like(X)
        one = np.ones_like(X)
        return np.stack(
            [
                np.stack([zero, Y, zero], axis=-1),
                np.stack([zero, zero, one], axis=-1),
                np.stack([zero, zero, -Z], axis=-1),
            ],
            axis=0,
        )
    if spec.kind == "chen":
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        zero = np.zeros_like(X)
        return np.stack(
            [
                np.stack([Y - X, -X, zero], axis=-1),
                np.stack([zero, zero, -Z], axis=-1),
                np.stack([zero, X + Y, zero], axis=-1),
            ],
            axis=0,
        )
    if spec.kind == "arctan_lorenz":
        # chain rule through the saturation: d/dtheta cap*arctan(u/cap)
        # is du/dtheta / (1 + (u/cap)^2)
        u = _lorenz_core(theta, x)
        ju = _lorenz_core_jac(theta, x)
        return ju / (1.0 + (u / ARCTAN_CAP) ** 2)[None, ...]
    raise AssertionError(spec.kind)
