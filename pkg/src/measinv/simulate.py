"""Direct numerical simulation and occupation statistics.

Trajectories come from explicit Euler steps, optionally with intrinsic
noise (a Gaussian forcing inside the step) or extrinsic noise (Gaussian
perturbation of the recorded observations). Occupation histograms bin
states onto a Grid and normalize over the points that landed inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ARCTAN_CAP, SystemSpec, velocity
from .errors import NumericalError
from .grid import DensityField, Grid

__all__ = [
    "NoiseSpec",
    "Trajectory",
    "integrate",
    "subsample",
    "occupation_histogram",
]

_DIVERGENCE_LIMIT = 1e8
_BLOCK = 1 << 14


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model for a simulation run.

    kind "intrinsic" forces the dynamics inside each Euler step; mode
    "sde" scales the increment by sigma * sqrt(dt) (Euler-Maruyama),
    mode "per-step" adds dt * sigma * N(0, I) to the step instead.
    kind "extrinsic" leaves the dynamics clean and perturbs every
    recorded state by sigma * N(0, I).
    """

    kind: str = "none"
    sigma: float = 0.0
    mode: str = "sde"

    def __post_init__(self):
        if self.kind not in ("none", "intrinsic", "extrinsic"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.mode not in ("sde", "per-step"):
            raise ValueError(f"unknown intrinsic mode {self.mode!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


@dataclass
class Trajectory:
    """Euler states (n_steps + 1, dim) with uniform time stamps."""

    times: np.ndarray
    states: np.ndarray
    dt: float
    theta: np.ndarray
    seed: int | None
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __len__(self) -> int:
        return self.states.shape[0]


def _scalar_rhs(spec: SystemSpec, theta: np.ndarray):
    """Plain-float step kernels for the built-in systems.

    The generic path pays numpy dispatch overhead on every step, which
    dominates at millions of steps; these closures keep long runs cheap.
    """
    if spec.kind == "lorenz":
        s, r, b = (float(v) for v in theta)

        def f(x, y, z):
            return s * (y - x), x * (r - z) - y, x * y - b * z

        return f
    if spec.kind == "rossler":
        a, bb, c = (float(v) for v in theta)

        def f(x, y, z):
            return -y - z, x + a * y, bb + z * (x - c)

        return f
    if spec.kind == "chen":
        a, bb, c = (float(v) for v in theta)

        def f(x, y, z):
            return a * (y - x), (c - a) * x - x * z + c * y, x * y - bb * z

        return f
    if spec.kind == "arctan_lorenz":
        s, r, b = (float(v) for v in theta)
        cap = ARCTAN_CAP
        atan = math.atan

        def f(x, y, z):
            return (
                cap * atan(s * (y - x) / cap),
                cap * atan((x * (r - z) - y) / cap),
                cap * atan((x * y - b * z) / cap),
            )

        return f
    return None


def integrate(
    spec: SystemSpec,
    theta,
    x0,
    dt: float,
    n_steps: int,
    noise: NoiseSpec | None = None,
    seed: int | None = None,
) -> Trajectory:
    """Explicit Euler from x0 for n_steps steps of size dt.

    Raises NumericalError with the offending step index if the state
    leaves the finite range (divergence).
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != spec.dim:
        raise ValueError(f"x0 must have {spec.dim} coordinates")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    noise = noise or NoiseSpec()
    rng = np.random.default_rng(seed)

    states = np.empty((n_steps + 1, spec.dim))
    states[0] = x0

    intrinsic = noise.kind == "intrinsic" and noise.sigma > 0
    if intrinsic:
        amp = noise.sigma * (math.sqrt(dt) if noise.mode == "sde" else dt)
    else:
        amp = 0.0

    fast = _scalar_rhs(spec, theta) if spec.dim == 3 else None
    if fast is not None:
        x, y, z = (float(v) for v in x0)
        step = 0
        while step < n_steps:
            block = min(_BLOCK, n_steps - step)
            if intrinsic:
                w = rng.standard_normal((block, 3))
            for i in range(block):
                vx, vy, vz = fast(x, y, z)
                if intrinsic:
                    wx, wy, wz = w[i]
                    x += dt * vx + amp * wx
                    y += dt * vy + amp * wy
                    z += dt * vz + amp * wz
                else:
                    x += dt * vx
                    y += dt * vy
                    z += dt * vz
                states[step + i + 1, 0] = x
                states[step + i + 1, 1] = y
                states[step + i + 1, 2] = z
                if not (
                    math.isfinite(x)
                    and math.isfinite(y)
                    and math.isfinite(z)
                    and abs(x) < _DIVERGENCE_LIMIT
                    and abs(y) < _DIVERGENCE_LIMIT
                    and abs(z) < _DIVERGENCE_LIMIT
                ):
                    raise NumericalError(
                        f"trajectory diverged at step {step + i + 1}"
                    )
            step += block
    else:
        x = x0.copy()
        for i in range(n_steps):
            v = velocity(spec, theta, x)
            if intrinsic:
                x = x + dt * v + amp * rng.standard_normal(spec.dim)
            else:
                x = x + dt * v
            states[i + 1] = x
            if not np.all(np.isfinite(x)) or np.any(np.abs(x) >= _DIVERGENCE_LIMIT):
                raise NumericalError(f"trajectory diverged at step {i + 1}")

    if noise.kind == "extrinsic" and noise.sigma > 0:
        states = states + noise.sigma * rng.standard_normal(states.shape)

    times = dt * np.arange(n_steps + 1)
    return Trajectory(
        times=times, states=states, dt=dt, theta=theta.copy(), seed=seed, noise=noise
    )


def subsample(
    states: np.ndarray,
    n: int,
    seed: int | None = None,
    burn_in: float = 0.0,
) -> np.ndarray:
    """Uniform sample of n rows without replacement, after burn-in.

    burn_in is the fraction of leading rows discarded before sampling.
    n equal to the remaining count returns every remaining row.
    """
    states = np.asarray(states)
    if not 0.0 <= burn_in < 1.0:
        raise ValueError("burn_in must lie in [0, 1)")
    start = int(math.floor(burn_in * states.shape[0]))
    avail = states.shape[0] - start
    if n <= 0:
        raise ValueError("subsample size must be positive")
    if n > avail:
        raise ValueError(
            f"requested {n} samples but only {avail} states remain after burn-in"
        )
    rng = np.random.default_rng(seed)
    idx = rng.choice(avail, size=n, replace=False)
    idx.sort()
    return states[start + idx]


def occupation_histogram(
    states: np.ndarray, grid: Grid
) -> tuple[DensityField, int]:
    """Bin states onto the grid and normalize over the inside points.

    Returns the probability field and the number of dropped (outside)
    points. Raises NumericalError when no state lands inside the box.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    flat, inside = grid.locate(states)
    n_in = int(inside.sum())
    if n_in == 0:
        raise NumericalError("empty histogram: every state fell outside the grid box")
    counts = np.bincount(flat[inside], minlength=grid.n).astype(float)
    return DensityField(grid, counts / n_in), states.shape[0] - n_in
