"""Synthetic velocity fields with known structure, for tests and demos.

These are real systems (usable from configs via system.factory), kept in
the package so the sanity properties they encode stay exercisable from
the command line as well as from the test suite.
"""

from __future__ import annotations

import numpy as np

from .dynamics import SystemSpec, custom_system

__all__ = [
    "zero_system",
    "axis_relaxation_system",
    "blend_system",
]


def zero_system(dim: int = 3) -> SystemSpec:
    """v = 0 with one inert parameter: the operator must vanish."""

    def vel(theta, x):
        return np.zeros_like(x)

    def jac(theta, x):
        return np.zeros((1,) + x.shape)

    return custom_system(
        vel, jac, ("mu",), tuple((-1.0, 1.0) for _ in range(dim)), dim=dim
    )


def axis_relaxation_system(
    centers=(0.0, 0.0, 0.0), half_width: float = 2.0
) -> SystemSpec:
    """v_d = -theta_d (x_d - center_d): each parameter owns one axis.

    The stationary density factorizes over axes and parameter k only
    moves the axis-k marginal, so a coordinate and a joint optimizer
    must find the same minimizer.
    """
    centers = np.asarray(centers, dtype=float)
    dim = centers.size

    def vel(theta, x):
        return -theta * (x - centers)

    def jac(theta, x):
        out = np.zeros((dim,) + x.shape)
        for k in range(dim):
            out[k, ..., k] = -(x[..., k] - centers[k])
        return out

    bounds = tuple((c - half_width, c + half_width) for c in centers)
    return custom_system(vel, jac, tuple(f"k{d}" for d in range(dim)), bounds, dim=dim)


def blend_system(m: int, dim: int = 3, half_width: float = 2.0) -> SystemSpec:
    """v(x) = sum_k theta_k b_k(x) with m fixed smooth basis fields.

    Linear in theta (the jacobian is theta-independent), bounded on the
    box, deterministic. Used to scale the parameter count in timing
    checks without changing anything else.
    """
    if m < 1:
        raise ValueError("need at least one basis field")
    freqs = 1 + np.arange(m) % 3
    comps = np.arange(m) % dim
    phases = 0.5 * np.arange(m)

    def basis(k, x):
        out = np.zeros_like(x)
        trig = np.cos(freqs[k] * x[..., (comps[k] + 1) % dim] + phases[k])
        out[..., comps[k]] = np.sin(freqs[k] * x[..., comps[k]]) + 0.5 * trig
        return out

    def vel(theta, x):
        out = np.zeros_like(x)
        for k in range(m):
            out += theta[k] * basis(k, x)
        return out

    def jac(theta, x):
        return np.stack([basis(k, x) for k in range(m)], axis=0)

    bounds = tuple((-half_width, half_width) for _ in range(dim))
    return custom_system(vel, jac, tuple(f"c{k}" for k in range(m)), bounds, dim=dim)
