"""Optimal-transport costs and Kantorovich potentials between mass fields.

Three routes to the transport cost T_c(mu, nu) with c(x, y) = |x - y|^p
between cell centers of a shared grid:

* `sinkhorn`: log-domain entropic iterations with a geometric eta
  schedule and warm starts. For p = 2 the Gibbs kernel factorizes per
  axis, so one kernel application is a few small matrix products and no
  n x n matrix is ever formed. The returned potentials are rounded
  through exact c-transforms, hence feasible, and the reported cost is
  their dual objective (a lower bound on the true cost).
* `transport_cost_exact_1d`: exact quantile (CDF-inverse) coupling for
  1-D fields, with duals recovered by walking the monotone plan.
* `brute_force_lp`: the Kantorovich linear program solved exactly on
  small supports, used as the verification oracle. Optimality is
  certified against the recovered duals before anything is returned.

Mass vectors may contain zeros; the entropic solver floors them at
1e-300 in the log domain and keeps potentials defined on every cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import NumericalError
from .grid import DensityField, Grid

__all__ = [
    "CostSpec",
    "DualPotentials",
    "TransportPlan",
    "SinkhornResult",
    "LPResult",
    "sinkhorn",
    "c_transform",
    "transport_cost_exact_1d",
    "brute_force_lp",
    "pairwise_cost",
]

MASS_FLOOR = 1e-300
_LOG_TINY = 1e-300
_DENSE_LIMIT = 4096


@dataclass(frozen=True)
class CostSpec:
    """Ground cost |x - y|^p plus the entropic solver's knobs.

    eta runs a geometric schedule from eta_start_scale * diam^p down to
    eta_floor_scale * diam^p (diam = cell-center diameter of the grid).
    marginal_tol is the l1 marginal violation target per level;
    frozen_iters, when set, runs exactly that many iterations per level
    with no tolerance-based exit, making the solve a deterministic
    function of its inputs (used by finite-difference checks).
    """

    p: float = 2.0
    eta_start_scale: float = 1e-1
    eta_floor_scale: float = 5e-4
    eta_shrink: float = 0.5
    marginal_tol: float = 1e-7
    max_iters: int = 10_000
    polish_rounds: int = 1
    frozen_iters: int | None = None
    warm_start_at_floor: bool = True
    omega: float = 1.7

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("cost exponent p must be >= 1")
        if not 0 < self.omega < 2:
            raise ValueError("relaxation omega must lie in (0, 2)")
        if not 0 < self.eta_floor_scale <= self.eta_start_scale:
            raise ValueError("need 0 < eta_floor_scale <= eta_start_scale")
        if not 0 < self.eta_shrink < 1:
            raise ValueError("eta_shrink must lie in (0, 1)")
        if self.marginal_tol <= 0:
            raise ValueError("marginal_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.polish_rounds < 1:
            raise ValueError("polish_rounds must be at least 1")

    def eta_floor(self, grid: Grid) -> float:
        return self.eta_floor_scale * grid.diameter() ** self.p

    def eta_schedule(self, grid: Grid) -> list[float]:
        scale = grid.diameter() ** self.p
        floor = self.eta_floor_scale * scale
        eta = self.eta_start_scale * scale
        out = []
        while eta > floor * (1 + 1e-12):
            out.append(eta)
            eta *= self.eta_shrink
        out.append(floor)
        return out


@dataclass
class DualPotentials:
    """A dual pair (phi on the source side, psi on the target side)."""

    phi: np.ndarray
    psi: np.ndarray
    p: float
    cconcave: bool = False

    def objective(self, mu: np.ndarray, nu: np.ndarray) -> float:
        return float(self.phi @ mu + self.psi @ nu)


@dataclass
class TransportPlan:
    """Sparse coupling support, oracle output."""

    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray

    def marginals(self, n_rows: int, n_cols: int) -> tuple[np.ndarray, np.ndarray]:
        r = np.bincount(self.rows, weights=self.masses, minlength=n_rows)
        c = np.bincount(self.cols, weights=self.masses, minlength=n_cols)
        return r, c


@dataclass
class SinkhornResult:
    """cost is the rounded pair's dual objective, a certified lower
    bound on T_c; raw holds the converged pre-rounding potentials, whose
    own objective is the smooth functional that analytic gradients
    differentiate."""

    cost: float
    potentials: DualPotentials
    iterations: int
    marginal_err: float
    eta_final: float
    raw: DualPotentials | None = None

    def smooth_objective(self, mu: np.ndarray, nu: np.ndarray) -> float:
        pair = self.raw if self.raw is not None else self.potentials
        return pair.objective(mu, nu)


@dataclass
class LPResult:
    cost: float
    plan: TransportPlan
    u: np.ndarray
    v: np.ndarray


def pairwise_cost(xa: np.ndarray, xb: np.ndarray, p: float) -> np.ndarray:
    """|x - y|^p between two point sets, shape (len(xa), len(xb))."""
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = np.atleast_2d(np.asarray(xb, dtype=float))
    d2 = ((xa[:, None, :] - xb[None, :, :]) ** 2).sum(axis=-1)
    if p == 2.0:
        return d2
    return d2 ** (p / 2.0)


def _grid_points(grid: Grid) -> np.ndarray:
    """All cell centers as an (n, ndim) array in flat order."""
    axes = [grid.centers(d) for d in range(grid.ndim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1, order="F") for m in mesh], axis=-1)
    return pts


def _dense_cost(grid: Grid, p: float) -> np.ndarray:
    if grid.n > _DENSE_LIMIT:
        raise ValueError(
            f"the non-factorized cost path densifies an n x n matrix; "
            f"n = {grid.n} exceeds the limit {_DENSE_LIMIT}"
        )
    pts = _grid_points(grid)
    return pairwise_cost(pts, pts, p)


def _separable(grid: Grid, p: float) -> bool:
    # the squared Euclidean cost splits across axes; other exponents only
    # in one dimension where the full cost is itself one-axis
    return p == 2.0 or grid.ndim == 1


def _axis_cost(grid: Grid, d: int, p: float) -> np.ndarray:
    x = grid.centers(d)
    diff = np.abs(x[:, None] - x[None, :])
    return diff ** p if (grid.ndim == 1 and p != 2.0) else diff**2


# -- entropic solver ---------------------------------------------------


def _lse_apply_axis(arr: np.ndarray, W: np.ndarray, d: int) -> np.ndarray:
    """out[i, rest] = log sum_k W[i, k] * exp(arr[k, rest]), stabilized."""
    moved = np.moveaxis(arr, d, 0)
    s = moved.shape[0]
    M = moved.reshape(s, -1)
    amax = M.max(axis=0)
    P = W @ np.exp(M - amax[None, :])
    out = np.log(np.maximum(P, _LOG_TINY)) + amax[None, :]
    return np.moveaxis(out.reshape(moved.shape), 0, d)


def _lse_apply_axis_shifted(arr: np.ndarray, negD: np.ndarray, d: int) -> np.ndarray:
    """out[i, rest] = LSE_k(negD[i, k] + arr[k, rest]) with per-row shifts.

    The kernel-multiply variant forms exp(negD), whose entries underflow
    to exact zero once -negD exceeds ~745 and silently sever those
    transport edges; this variant never leaves the log domain. Blocks
    bound the expanded (rows x k x rest) tensor."""
    moved = np.moveaxis(arr, d, 0)
    s = moved.shape[0]
    M = moved.reshape(s, -1)
    rest = M.shape[1]
    out = np.empty((s, rest))
    block = max(1, int(2_000_000 // max(1, s * rest)))
    for i0 in range(0, s, block):
        B = negD[i0 : i0 + block, :, None] + M[None, :, :]
        m = B.max(axis=1)
        out[i0 : i0 + block] = m + np.log(np.exp(B - m[:, None, :]).sum(axis=1))
    return np.moveaxis(out.reshape(moved.shape), 0, d)


def _lse_pass_separable(grid: Grid, T: np.ndarray, Ws) -> np.ndarray:
    arr = grid.to_array(T)
    for d, W in enumerate(Ws):
        arr = _lse_apply_axis(arr, W, d)
    return grid.from_array(arr)


def _lse_pass_separable_shifted(grid: Grid, T: np.ndarray, negDs) -> np.ndarray:
    arr = grid.to_array(T)
    for d, negD in enumerate(negDs):
        arr = _lse_apply_axis_shifted(arr, negD, d)
    return grid.from_array(arr)


def _lse_pass_dense(T: np.ndarray, W: np.ndarray) -> np.ndarray:
    amax = T.max()
    P = W @ np.exp(T - amax)
    return np.log(np.maximum(P, _LOG_TINY)) + amax


def _lse_pass_dense_shifted(T: np.ndarray, negC: np.ndarray) -> np.ndarray:
    n = negC.shape[0]
    out = np.empty(n)
    block = max(1, int(2_000_000 // max(1, n)))
    for i0 in range(0, n, block):
        B = negC[i0 : i0 + block, :] + T[None, :]
        m = B.max(axis=1)
        out[i0 : i0 + block] = m + np.log(np.exp(B - m[:, None]).sum(axis=1))
    return out


# largest cost-to-eta ratio the kernel-multiply paths may see; above it
# exp(-cost/eta) would underflow to zero and cut edges, so the shifted
# log-domain passes take over
_EXP_SAFE = 700.0


def sinkhorn(
    mu: DensityField,
    nu: DensityField,
    cost: CostSpec,
    warm: DualPotentials | None = None,
) -> SinkhornResult:
    """Entropic transport cost with c-transform-rounded potentials.

    Alternating log-domain updates run down the eta schedule; the floor
    level must reach marginal_tol (l1) or NumericalError is raised with
    the last violation. A warm start (potentials from a nearby problem)
    skips straight to the floor level. The returned pair is feasible by
    construction and its dual objective, the reported cost, is a lower
    bound on T_c.
    """
    grid = mu.grid
    if nu.grid != grid:
        raise ValueError("mu and nu live on different grids")
    a = np.asarray(mu.values, dtype=float)
    b = np.asarray(nu.values, dtype=float)
    if a.min() < 0 or b.min() < 0:
        raise ValueError("mass vectors must be nonnegative")
    ta, tb = float(a.sum()), float(b.sum())
    if ta <= 0 or tb <= 0:
        raise ValueError("mass vectors must carry positive total mass")
    if abs(ta - tb) > 1e-12 * max(1.0, ta, tb):
        raise ValueError(f"total mass mismatch: {ta!r} vs {tb!r}")

    loga = np.log(np.maximum(a, MASS_FLOOR))
    logb = np.log(np.maximum(b, MASS_FLOOR))
    separable = _separable(grid, cost.p)
    frozen = cost.frozen_iters is not None

    etas = cost.eta_schedule(grid)
    f = np.zeros(grid.n)
    g = np.zeros(grid.n)
    if warm is not None and not frozen:
        f = np.asarray(warm.phi, dtype=float).copy()
        g = np.asarray(warm.psi, dtype=float).copy()
        if cost.warm_start_at_floor:
            etas = [etas[-1]]

    dense_C = None if separable else _dense_cost(grid, cost.p)
    total_iters = 0
    err = float("inf")

    def lse_for(eta):
        if separable:
            Ds = [_axis_cost(grid, d, cost.p) for d in range(grid.ndim)]
            if max(D.max() for D in Ds) / eta > _EXP_SAFE:
                negDs = [-D / eta for D in Ds]
                return lambda T: _lse_pass_separable_shifted(grid, T, negDs)
            Ws = [np.exp(-D / eta) for D in Ds]
            return lambda T: _lse_pass_separable(grid, T, Ws)
        if dense_C.max() / eta > _EXP_SAFE:
            negC = -dense_C / eta
            return lambda T: _lse_pass_dense_shifted(T, negC)
        W = np.exp(-dense_C / eta)
        return lambda T: _lse_pass_dense(T, W)

    def run_level(eta, n_iters, level_tol):
        nonlocal f, g, total_iters, err
        lse = lse_for(eta)
        if not frozen and (f.any() or g.any()):
            # inherited potentials can carry error modes that contract
            # too slowly to remove at small eta; when a cold start gives
            # a smaller one-sweep violation (near-identical marginals do
            # exactly that) restart the level from zero instead
            f_w = -eta * lse(g / eta + logb)
            g_w = -eta * lse(f_w / eta + loga)
            err_w = float(np.abs(b * (np.exp(np.clip((g - g_w) / eta, None, 700.0)) - 1.0)).sum())
            f_z = -eta * lse(logb)
            g_z = -eta * lse(f_z / eta + loga)
            err_z = float(np.abs(b * (np.exp(np.clip(-g_z / eta, None, 700.0)) - 1.0)).sum())
            if err_z < err_w:
                f, g = f_z, g_z
            else:
                f, g = f_w, g_w
            total_iters += 1
        # over-relaxation accelerates the small-eta tail; fall back to
        # plain updates if the error ever grows instead of contracting
        omega = cost.omega
        best = float("inf")
        for _ in range(n_iters):
            f_new = -eta * lse(g / eta + logb)
            f = f_new if omega == 1.0 else (1.0 - omega) * f + omega * f_new
            g_new = -eta * lse(f / eta + loga)
            z = np.clip((g - g_new) / eta, None, 700.0)
            err = float(np.abs(b * (np.exp(z) - 1.0)).sum())
            g = g_new if omega == 1.0 else (1.0 - omega) * g + omega * g_new
            total_iters += 1
            if not frozen and err < level_tol:
                return True
            # drop the relaxation for good if the error ever grows
            # instead of contracting
            if omega != 1.0 and err > 2.0 * best:
                omega = 1.0
            best = min(best, err)
        return frozen

    inter_budget = max(200, cost.max_iters // 10)
    inter_tol = 100.0 * cost.marginal_tol
    for level, eta in enumerate(etas):
        last_level = level == len(etas) - 1
        # intermediate levels only seed the next warm start, so they
        # run on a loose tolerance and a capped budget; the floor level
        # gets the full budget and the real tolerance
        if frozen:
            run_level(eta, cost.frozen_iters, 0.0)
        elif not last_level:
            run_level(eta, inter_budget, inter_tol)
        elif not run_level(eta, cost.max_iters, cost.marginal_tol):
            # a single shrink step into the floor can overshoot what the
            # warm start contracts from on coarse grids; retry through a
            # denser eta ladder before giving up
            eta_hi = etas[-2] if len(etas) > 1 else eta / cost.eta_shrink
            n_sub = 6
            ratio = (eta / eta_hi) ** (1.0 / n_sub)
            converged = False
            for k in range(1, n_sub + 1):
                eta_k = eta_hi * ratio**k
                if k < n_sub:
                    run_level(eta_k, inter_budget, inter_tol)
                else:
                    converged = run_level(eta_k, cost.max_iters, cost.marginal_tol)
            if not converged:
                raise NumericalError(
                    f"entropic iterations did not meet marginal tolerance "
                    f"{cost.marginal_tol:.1e} at eta = {eta:.3e} "
                    f"(last l1 violation {err:.3e})"
                )

    if not np.all(np.isfinite(f)) or not np.all(np.isfinite(g)):
        raise NumericalError("entropic potentials left the finite range")

    raw = DualPotentials(phi=f.copy(), psi=g.copy(), p=cost.p)
    phi = f
    psi = None
    for _ in range(cost.polish_rounds):
        psi = c_transform(phi, cost, grid)
        phi = c_transform(psi, cost, grid)
    pot = DualPotentials(phi=phi, psi=psi, p=cost.p, cconcave=True)
    value = pot.objective(a, b)
    return SinkhornResult(
        cost=value,
        potentials=pot,
        iterations=total_iters,
        marginal_err=err,
        eta_final=etas[-1],
        raw=raw,
    )


# -- exact transforms --------------------------------------------------


def _minplus_axis(arr: np.ndarray, D: np.ndarray, d: int) -> np.ndarray:
    """out[i, rest] = min_k (D[i, k] + arr[k, rest])."""
    moved = np.moveaxis(arr, d, 0)
    s = moved.shape[0]
    M = moved.reshape(s, -1)
    rest = M.shape[1]
    out = np.empty_like(M)
    block = max(1, int(4_000_000 // max(1, s * rest)))
    for i0 in range(0, s, block):
        i1 = min(s, i0 + block)
        out[i0:i1] = (D[i0:i1, :, None] + M[None, :, :]).min(axis=1)
    return np.moveaxis(out.reshape(moved.shape), 0, d)


def c_transform(phi: np.ndarray, cost: CostSpec, grid: Grid) -> np.ndarray:
    """Exact transform psi(y) = min_x { c(x, y) - phi(x) } over all cells.

    Separable costs (p = 2, or any p in one dimension) run as ndim
    sequential 1-D min-plus transforms; other cases fall back to the
    dense cost matrix on small grids.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (grid.n,):
        raise ValueError(f"potential must have {grid.n} entries")
    if not np.all(np.isfinite(phi)):
        raise ValueError("potential must be finite")
    if _separable(grid, cost.p):
        arr = grid.to_array(-phi)
        for d in range(grid.ndim):
            arr = _minplus_axis(arr, _axis_cost(grid, d, cost.p), d)
        return grid.from_array(arr)
    C = _dense_cost(grid, cost.p)
    return (C - phi[:, None]).min(axis=0)


# -- exact 1-D solver --------------------------------------------------


def _chunked_restricted_min(
    targets: np.ndarray, sources: np.ndarray, vals: np.ndarray, p: float
) -> np.ndarray:
    """min over sources of |t - s|^p - vals, for each target, chunked."""
    out = np.empty(targets.size)
    block = max(1, int(4_000_000 // max(1, sources.size)))
    for i0 in range(0, targets.size, block):
        i1 = min(targets.size, i0 + block)
        D = np.abs(targets[i0:i1, None] - sources[None, :]) ** p
        out[i0:i1] = (D - vals[None, :]).min(axis=1)
    return out


def transport_cost_exact_1d(
    mu: np.ndarray, nu: np.ndarray, centers: np.ndarray, p: float = 2.0
) -> tuple[float, DualPotentials]:
    """Exact W_p^p between two mass vectors on one shared 1-D grid.

    Mass is carried at the cell centers; the cost is the quantile
    (CDF-inverse) coupling, optimal in one dimension for convex |.|^p.
    Potentials come from walking the monotone plan (phi is set to 0 on
    the first source atom, the remaining values follow from tightness on
    plan edges) and are then extended to every cell by exact
    c-transforms, so the returned pair is feasible on the whole grid.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    nu = np.asarray(nu, dtype=float).reshape(-1)
    centers = np.asarray(centers, dtype=float).reshape(-1)
    if mu.size != centers.size or nu.size != centers.size:
        raise ValueError("mu, nu, centers must have equal length")
    if np.any(np.diff(centers) <= 0):
        raise ValueError("centers must be strictly increasing")
    if mu.min() < 0 or nu.min() < 0:
        raise ValueError("mass vectors must be nonnegative")
    if p < 1:
        raise ValueError("cost exponent p must be >= 1")
    ta, tb = float(mu.sum()), float(nu.sum())
    if ta <= 0:
        raise ValueError("mass vectors must carry positive total mass")
    if abs(ta - tb) > 1e-12 * max(1.0, ta, tb):
        raise ValueError(f"total mass mismatch: {ta!r} vs {tb!r}")

    si = np.flatnonzero(mu > 0)
    tj = np.flatnonzero(nu > 0)
    cm = np.cumsum(mu[si])
    cn = np.cumsum(nu[tj])
    levels = np.union1d(cm, cn)
    starts = np.concatenate(([0.0], levels[:-1]))
    w = levels - starts
    keep = w > 1e-15 * max(1.0, ta)
    starts, levels, w = starts[keep], levels[keep], w[keep]
    mids = 0.5 * (starts + levels)
    ii = np.minimum(np.searchsorted(cm, mids), cm.size - 1)
    jj = np.minimum(np.searchsorted(cn, mids), cn.size - 1)
    xs = centers[si[ii]]
    ys = centers[tj[jj]]
    value = float(np.sum(w * np.abs(xs - ys) ** p))

    # duals by tightness along the plan: each edge (i, j) of the
    # monotone coupling satisfies phi_i + psi_j = c_ij at an optimal pair
    phi_s = np.full(si.size, np.nan)
    psi_s = np.full(tj.size, np.nan)
    for a, b in zip(ii, jj):
        cab = abs(centers[si[a]] - centers[tj[b]]) ** p
        if np.isnan(phi_s[a]) and np.isnan(psi_s[b]):
            known = ~np.isnan(psi_s)
            if not known.any():
                phi_s[a] = 0.0
            else:
                # new connected component: start as high as feasibility
                # against the already-fixed psi values allows
                cand = (
                    np.abs(centers[si[a]] - centers[tj[known]]) ** p - psi_s[known]
                )
                phi_s[a] = float(cand.min())
        if np.isnan(psi_s[b]):
            psi_s[b] = cab - phi_s[a]
        elif np.isnan(phi_s[a]):
            phi_s[a] = cab - psi_s[b]

    # atoms never touched by the plan cannot occur (every support atom
    # carries mass), but guard against NaN leaking out anyway
    if np.isnan(phi_s).any() or np.isnan(psi_s).any():
        raise NumericalError("dual recovery left unset values on the plan support")

    psi_full = _chunked_restricted_min(centers, centers[si], phi_s, p)
    phi_full = _chunked_restricted_min(centers, centers, psi_full, p)
    pot = DualPotentials(phi=phi_full, psi=psi_full, p=p, cconcave=True)
    return value, pot


# -- LP oracle ---------------------------------------------------------

_LP_SUPPORT_LIMIT = 400


def brute_force_lp(mu: np.ndarray, nu: np.ndarray, C: np.ndarray) -> LPResult:
    """Exact Kantorovich LP on small supports, certified before return.

    The equality-form LP over the positive-mass cells is handed to a
    simplex solver; the recovered duals must then pass feasibility,
    complementary slackness, and a duality-gap check against the plan
    cost, otherwise NumericalError is raised. Duals are extended to
    zero-mass cells by c-transforms so the returned vectors are feasible
    on the full index sets.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    nu = np.asarray(nu, dtype=float).reshape(-1)
    C = np.asarray(C, dtype=float)
    if C.shape != (mu.size, nu.size):
        raise ValueError(
            f"cost matrix shape {C.shape} does not match ({mu.size}, {nu.size})"
        )
    if mu.min() < 0 or nu.min() < 0:
        raise ValueError("mass vectors must be nonnegative")
    ta, tb = float(mu.sum()), float(nu.sum())
    if ta <= 0:
        raise ValueError("mass vectors must carry positive total mass")
    if abs(ta - tb) > 1e-12 * max(1.0, ta, tb):
        raise ValueError(f"total mass mismatch: {ta!r} vs {tb!r}")

    si = np.flatnonzero(mu > 0)
    tj = np.flatnonzero(nu > 0)
    ns, nt = si.size, tj.size
    if ns > _LP_SUPPORT_LIMIT or nt > _LP_SUPPORT_LIMIT:
        raise ValueError(
            f"support sizes {ns} x {nt} exceed the oracle limit "
            f"{_LP_SUPPORT_LIMIT}; this solver is for verification scale"
        )
    Cs = C[np.ix_(si, tj)]

    A_eq = sp.vstack(
        [
            sp.kron(sp.identity(ns, format="csr"), np.ones((1, nt))),
            sp.kron(np.ones((1, ns)), sp.identity(nt, format="csr")),
        ],
        format="csr",
    )
    b_eq = np.concatenate([mu[si], nu[tj]])
    res = linprog(
        Cs.reshape(-1),
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        raise NumericalError(f"transport LP failed: {res.message}")
    P = res.x.reshape(ns, nt)
    value = float(np.sum(P * Cs))

    y = np.asarray(res.eqlin.marginals, dtype=float)
    us, vs = y[:ns], y[ns:]
    scale_c = max(1.0, float(np.abs(Cs).max()))
    scale_m = max(1.0, ta)
    if abs(value - (us @ mu[si] + vs @ nu[tj])) > 1e-8 * max(1.0, abs(value)):
        us, vs = -us, -vs
        if abs(value - (us @ mu[si] + vs @ nu[tj])) > 1e-8 * max(1.0, abs(value)):
            raise NumericalError("LP duals do not close the duality gap")

    slack = Cs - us[:, None] - vs[None, :]
    if slack.min() < -1e-8 * scale_c:
        raise NumericalError(
            f"LP duals infeasible (worst violation {slack.min():.3e})"
        )
    active = P > 1e-12 * scale_m
    if active.any() and np.abs(slack[active]).max() > 1e-7 * scale_c:
        raise NumericalError(
            "complementary slackness failed on the LP plan "
            f"(worst slack {np.abs(slack[active]).max():.3e})"
        )
    r_marg = P.sum(axis=1) - mu[si]
    c_marg = P.sum(axis=0) - nu[tj]
    if max(np.abs(r_marg).max(), np.abs(c_marg).max()) > 1e-9 * scale_m:
        raise NumericalError("LP plan violates its marginals")

    rows, cols = np.nonzero(active)
    plan = TransportPlan(
        rows=si[rows], cols=tj[cols], masses=P[rows, cols].copy()
    )
    # extend duals to zero-mass cells, keeping global feasibility:
    # first rows against the support columns, then columns against all rows
    u_full = (C[:, tj] - vs[None, :]).min(axis=1)
    u_full[si] = us
    v_full = (C - u_full[:, None]).min(axis=0)
    v_full[tj] = vs
    return LPResult(cost=value, plan=plan, u=u_full, v=v_full)
