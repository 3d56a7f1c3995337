"""Upwind finite-volume discretization of the transport generator.

The continuity equation d rho / dt = -div(v rho) on a box, with zero
flux through the boundary, is discretized on a uniform grid with the
first-order upwind scheme. `assemble_K` returns the sparse generator K
whose columns sum to zero (mass conservation in exact arithmetic); the
one-step transfer operator is M = I + c K for a step constant c small
enough to keep M entrywise nonnegative, and `teleport` mixes M with the
uniform distribution to make the chain irreducible.

Boundary faces carry velocity exactly zero by construction, so no mass
ever crosses the box boundary, whatever the field does outside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .dynamics import SystemSpec, velocity, velocity_param_jacobian
from .errors import CFLViolation
from .grid import Grid

__all__ = [
    "FaceVelocities",
    "UpwindOperator",
    "MarkovOperator",
    "face_velocities",
    "assemble_K",
    "assemble_dK",
    "cfl_constant",
    "teleport",
    "smoothed_heaviside",
]


@dataclass
class FaceVelocities:
    """Normal velocity component on every cell face, one array per axis.

    Axis d has shape counts with counts[d] + 1 along axis d. The first
    and last slab along axis d (the box boundary) are exactly zero.
    """

    grid: Grid
    arrays: tuple[np.ndarray, ...]

    def max_abs(self, axis: int) -> float:
        return float(np.abs(self.arrays[axis]).max())


@dataclass
class UpwindOperator:
    """Sparse generator K with the grid and parameter snapshot it came from."""

    K: sp.csc_matrix
    grid: Grid
    theta: np.ndarray
    faces: FaceVelocities


@dataclass
class MarkovOperator:
    """Teleported one-step operator M_eps = (1-eps)(I + cK) + (eps/n) 1 1^T.

    The rank-one teleportation term is applied implicitly; the matrix is
    never formed. Column sums are exactly 1 in exact arithmetic, so
    repeated application conserves total mass.
    """

    op: UpwindOperator
    c: float
    epsilon: float

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.c <= 0:
            raise ValueError("step constant c must be positive")
        diag = 1.0 + self.c * self.op.K.diagonal()
        worst = float(diag.min())
        if worst < 0:
            raise CFLViolation(
                f"step constant too large: min diagonal of I + cK is {worst:.3e}"
            )
        self._KT = None

    @property
    def n(self) -> int:
        return self.op.grid.n

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        base = x + self.c * (self.op.K @ x)
        return (1.0 - self.epsilon) * base + (self.epsilon / self.n) * x.sum()

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        if self._KT is None:
            self._KT = self.op.K.T.tocsc()
        y = np.asarray(y, dtype=float)
        base = y + self.c * (self._KT @ y)
        return (1.0 - self.epsilon) * base + (self.epsilon / self.n) * y.sum()

    def dense(self) -> np.ndarray:
        """Materialized matrix, for small-grid cross-checks only."""
        n = self.n
        if n > 20000:
            raise ValueError("refusing to densify a large operator")
        base = np.eye(n) + self.c * self.op.K.toarray()
        return (1.0 - self.epsilon) * base + self.epsilon / n


def _face_points(grid: Grid, axis: int) -> np.ndarray:
    """Coordinates of all faces normal to `axis`, shape (*face_shape, ndim)."""
    coords = []
    for d in range(grid.ndim):
        coords.append(grid.faces(d) if d == axis else grid.centers(d))
    mesh = np.meshgrid(*coords, indexing="ij")
    return np.stack(mesh, axis=-1)


def face_velocities(spec: SystemSpec, theta, grid: Grid) -> FaceVelocities:
    """Evaluate the normal velocity at face centers, zeroing the boundary."""
    if grid.ndim != spec.dim:
        raise ValueError(f"grid is {grid.ndim}-D but the system lives in {spec.dim}-D")
    arrays = []
    for d in range(grid.ndim):
        pts = _face_points(grid, d)
        vd = velocity(spec, theta, pts)[..., d]
        vd = np.ascontiguousarray(vd)
        _zero_boundary(vd, d)
        arrays.append(vd)
    return FaceVelocities(grid=grid, arrays=tuple(arrays))


def _zero_boundary(arr: np.ndarray, axis: int) -> None:
    idx = [slice(None)] * arr.ndim
    idx[axis] = 0
    arr[tuple(idx)] = 0.0
    idx[axis] = arr.shape[axis] - 1
    arr[tuple(idx)] = 0.0


def _axis_take(arr: np.ndarray, axis: int, lo: int, hi: int) -> np.ndarray:
    idx = [slice(None)] * arr.ndim
    idx[axis] = slice(lo, hi)
    return arr[tuple(idx)]


def _assemble_from_splits(grid: Grid, plus, minus) -> sp.csc_matrix:
    """Generator from per-axis face splits (plus >= 0 flows up-axis).

    For each axis the column of a cell gets: outflow -plus(right)/dx and
    +minus(left)/dx on the diagonal, transfer plus(right)/dx to the
    up-axis neighbor and -minus(left)/dx to the down-axis neighbor.
    Boundary faces are zero, so boundary columns simply lose those terms.
    """
    n = grid.n
    diag = np.zeros(n)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    all_flat = np.arange(n, dtype=np.int64)
    axis_idx = grid.axis_indices(all_flat)

    for d in range(grid.ndim):
        dx = grid.spacing[d]
        nd = grid.counts[d]
        stride = int(np.prod(grid.counts[:d])) if d > 0 else 1
        p_left = grid.from_array(_axis_take(plus[d], d, 0, nd))
        m_left = grid.from_array(_axis_take(minus[d], d, 0, nd))
        p_right = grid.from_array(_axis_take(plus[d], d, 1, nd + 1))
        m_right = grid.from_array(_axis_take(minus[d], d, 1, nd + 1))

        diag += (m_left - p_right) / dx

        has_up = axis_idx[d] < nd - 1
        rows.append(all_flat[has_up] + stride)
        cols.append(all_flat[has_up])
        data.append(p_right[has_up] / dx)

        has_down = axis_idx[d] > 0
        rows.append(all_flat[has_down] - stride)
        cols.append(all_flat[has_down])
        data.append(-m_left[has_down] / dx)

    rows.append(all_flat)
    cols.append(all_flat)
    data.append(diag)
    K = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return K.tocsc()


def assemble_K(
    spec: SystemSpec, theta, grid: Grid, faces: FaceVelocities | None = None
) -> UpwindOperator:
    """Assemble the upwind generator at theta (faces reused if given)."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if faces is None:
        faces = face_velocities(spec, theta, grid)
    plus = tuple(np.maximum(a, 0.0) for a in faces.arrays)
    minus = tuple(np.minimum(a, 0.0) for a in faces.arrays)
    K = _assemble_from_splits(grid, plus, minus)
    return UpwindOperator(K=K, grid=grid, theta=theta.copy(), faces=faces)


def cfl_constant(faces: FaceVelocities, safety: float = 0.9) -> float:
    """Step constant keeping I + cK entrywise nonnegative.

    Uses the summed bound c = safety / sum_d (2/dx_d) max|v_d|, which
    dominates the worst diagonal of K, so nonnegativity follows by
    arithmetic; `teleport` still asserts it after assembly. An all-zero
    field has no constraint; the sentinel c = 1.0 is returned (K = 0, so
    any positive constant works).
    """
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    denom = 0.0
    for d in range(faces.grid.ndim):
        denom += 2.0 / faces.grid.spacing[d] * faces.max_abs(d)
    if denom == 0.0:
        return 1.0
    return safety / denom


def teleport(op: UpwindOperator, c: float, epsilon: float) -> MarkovOperator:
    """Wrap the generator into the teleported one-step Markov operator."""
    return MarkovOperator(op=op, c=c, epsilon=epsilon)


def smoothed_heaviside(v: np.ndarray, k: float) -> np.ndarray:
    """Upwind switch H(v); k > 0 replaces the step by a logistic ramp.

    k = 0 is the exact switch with the symmetric convention H(0) = 1/2.
    """
    v = np.asarray(v, dtype=float)
    if k < 0:
        raise ValueError("smoothing width must be nonnegative")
    if k == 0:
        return np.where(v > 0, 1.0, np.where(v < 0, 0.0, 0.5))
    return expit(v / k)


def assemble_dK(
    spec: SystemSpec,
    theta,
    grid: Grid,
    faces: FaceVelocities | None = None,
    k_smooth: float = 0.0,
) -> list[sp.csc_matrix]:
    """Exact derivative of K with respect to each parameter.

    The upwind split differentiates as d v+ = H(v) dv and
    d v- = (1 - H(v)) dv with H the (optionally smoothed) switch; the
    stencil is unchanged, so each dK has the sparsity of K. Boundary
    faces are pinned at velocity zero for every theta and contribute
    nothing.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if faces is None:
        faces = face_velocities(spec, theta, grid)
    m = spec.n_params
    plus_per_param: list[list[np.ndarray]] = [[] for _ in range(m)]
    minus_per_param: list[list[np.ndarray]] = [[] for _ in range(m)]
    for d in range(grid.ndim):
        pts = _face_points(grid, d)
        jac = velocity_param_jacobian(spec, theta, pts)[..., d]
        H = smoothed_heaviside(faces.arrays[d], k_smooth)
        for k in range(m):
            dv = np.ascontiguousarray(jac[k])
            _zero_boundary(dv, d)
            plus_per_param[k].append(H * dv)
            minus_per_param[k].append((1.0 - H) * dv)
    return [
        _assemble_from_splits(grid, tuple(plus_per_param[k]), tuple(minus_per_param[k]))
        for k in range(m)
    ]
