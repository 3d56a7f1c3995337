"""Outer inversion loop: joint and coordinate gradient descent.

Both modes share one warm-started objective (operator rebuild + one
transport solve per evaluation) and an Armijo backtracking line search.
The coordinate mode steps one parameter at a time; with the adjoint
gradient the full gradient vector is computed once per cycle and its
components are reused across the cycle, while the sensitivity route
refreshes the stepped component before each inner step.

Initial step sizes are scaled to the parameter magnitude
(tau = tau0 |theta| / |grad| in the relevant norm) so a unit tau0 means
"try a full-size relative move first". Accepted objective values are
nonincreasing along every trace by construction.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ParameterVector, SystemSpec
from .gradient import InversionObjective, LossConfig
from .grid import DensityField

__all__ = [
    "BacktrackingConfig",
    "InferenceConfig",
    "TraceRecord",
    "InferenceTrace",
    "backtracking_step",
    "gradient_descent",
    "coordinate_descent",
]


@dataclass(frozen=True)
class BacktrackingConfig:
    tau0: float = 1.0
    beta: float = 0.5
    sigma: float = 1e-4
    max_halvings: int = 60

    def __post_init__(self):
        if self.tau0 <= 0:
            raise ValueError("initial step tau0 must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("shrink factor beta must lie in (0, 1)")
        if not 0 < self.sigma < 1:
            raise ValueError("Armijo constant sigma must lie in (0, 1)")
        if self.max_halvings < 1:
            raise ValueError("max_halvings must be positive")


@dataclass(frozen=True)
class InferenceConfig:
    theta0: ParameterVector
    loss: LossConfig
    mode: str = "coordinate"
    gradient_method: str = "adjoint"
    backtracking: BacktrackingConfig = field(default_factory=BacktrackingConfig)
    max_iters: int = 100
    grad_tol: float | None = None  # None -> 1e-6 (1 + f at theta0)
    early_stop_loss: float | None = None
    coordinate_order: str = "cyclic"
    seed: int = 0
    scale_tau: bool = True

    def __post_init__(self):
        if self.mode not in ("joint", "coordinate"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.gradient_method not in ("ift", "adjoint"):
            raise ValueError(f"unknown gradient method {self.gradient_method!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.coordinate_order not in ("cyclic", "random"):
            raise ValueError(f"unknown coordinate order {self.coordinate_order!r}")


@dataclass
class TraceRecord:
    iter: int
    k: int  # stepped coordinate; -1 in joint mode and for the start record
    theta: np.ndarray
    f: float
    grad_norm: float
    tau: float
    wall_ms: float


@dataclass
class InferenceTrace:
    records: list
    status: str
    theta_final: np.ndarray
    f_final: float
    n_evals: int

    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])

    def fs(self) -> np.ndarray:
        return np.array([r.f for r in self.records])

    def header(self) -> list[str]:
        m = self.theta_final.size
        return (
            ["iter", "k"]
            + [f"theta_{i + 1}" for i in range(m)]
            + ["f", "grad_norm", "tau", "wall_ms"]
        )

    def rows(self) -> list[list]:
        out = []
        for r in self.records:
            out.append(
                [r.iter, r.k]
                + [f"{v:.12g}" for v in r.theta]
                + [f"{r.f:.12g}", f"{r.grad_norm:.6g}", f"{r.tau:.6g}", f"{r.wall_ms:.3f}"]
            )
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            w.writerows(self.rows())


def _clip(theta: np.ndarray, bounds) -> np.ndarray:
    if bounds is None:
        return theta
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return np.clip(theta, lo, hi)


def backtracking_step(
    evalf,
    theta: np.ndarray,
    grad: np.ndarray,
    direction: np.ndarray,
    cfg: BacktrackingConfig,
    bounds=None,
    f0: float | None = None,
):
    """Armijo search along direction with bound clamping.

    Returns (theta_next, tau, f_next, status); status is "accepted",
    "zero_gradient" (no move requested), or "line_search_failed". The
    sufficient-decrease test uses the projected displacement, so a step
    clamped by the bounds is judged against the move actually taken.
    """
    theta = np.asarray(theta, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if f0 is None:
        f0 = evalf(theta)
    if not np.any(direction):
        return theta, 0.0, f0, "zero_gradient"
    tau = cfg.tau0
    for _ in range(cfg.max_halvings + 1):
        cand = _clip(theta + tau * direction, bounds)
        step = cand - theta
        slope = float(grad @ step)
        if slope < 0:
            f_new = evalf(cand)
            if f_new <= f0 + cfg.sigma * slope:
                return cand, tau, f_new, "accepted"
        tau *= cfg.beta
    return theta, 0.0, f0, "line_search_failed"


def _tau_scale(cfg: InferenceConfig, size_theta: float, size_grad: float) -> BacktrackingConfig:
    if not cfg.scale_tau or size_grad == 0 or size_theta == 0:
        return cfg.backtracking
    bt = cfg.backtracking
    return BacktrackingConfig(
        tau0=bt.tau0 * size_theta / size_grad,
        beta=bt.beta,
        sigma=bt.sigma,
        max_halvings=bt.max_halvings,
    )


def _finish(records, status, theta, f, obj) -> InferenceTrace:
    return InferenceTrace(
        records=records,
        status=status,
        theta_final=theta.copy(),
        f_final=f,
        n_evals=obj.n_evals,
    )


def gradient_descent(
    system: SystemSpec, rho_star: DensityField, cfg: InferenceConfig
) -> InferenceTrace:
    """Full-vector descent with backtracking; stops on gradient norm,
    iteration budget, line-search failure, or the early-stop loss."""
    obj = InversionObjective(
        system, rho_star, cfg.loss.replace(method=cfg.gradient_method)
    )
    theta = np.asarray(cfg.theta0.values, dtype=float).copy()
    bounds = cfg.theta0.bounds
    obj.freeze_c(theta)
    t0 = time.perf_counter()
    rep = obj.f_and_grad(theta)
    f, g = rep.f_value, rep.grad
    grad_tol = cfg.grad_tol if cfg.grad_tol is not None else 1e-6 * (1.0 + f)
    records = [
        TraceRecord(0, -1, theta.copy(), f, float(np.linalg.norm(g)), 0.0,
                    1e3 * (time.perf_counter() - t0))
    ]
    status = "max_iters"
    for it in range(1, cfg.max_iters + 1):
        gn = float(np.linalg.norm(g))
        if gn < grad_tol:
            status = "converged"
            break
        if cfg.early_stop_loss is not None and f < cfg.early_stop_loss:
            status = "early_stop"
            break
        t_it = time.perf_counter()
        bt = _tau_scale(cfg, float(np.linalg.norm(theta)), gn)
        theta_new, tau, f_new, st = backtracking_step(
            obj.f_only, theta, g, -g, bt, bounds=bounds, f0=f
        )
        if st != "accepted":
            status = "line_search_failed"
            break
        theta, f = theta_new, f_new
        rep = obj.f_and_grad(theta)
        g = rep.grad
        records.append(
            TraceRecord(it, -1, theta.copy(), f, float(np.linalg.norm(g)), tau,
                        1e3 * (time.perf_counter() - t_it))
        )
    return _finish(records, status, theta, f, obj)


def coordinate_descent(
    system: SystemSpec, rho_star: DensityField, cfg: InferenceConfig
) -> InferenceTrace:
    """One-parameter-at-a-time descent cycling over all components.

    A cycle in which no coordinate can make progress ends the run with
    line_search_failed; a single stuck coordinate is simply skipped.
    max_iters counts inner (per-coordinate) steps.
    """
    obj = InversionObjective(
        system, rho_star, cfg.loss.replace(method=cfg.gradient_method)
    )
    theta = np.asarray(cfg.theta0.values, dtype=float).copy()
    bounds = cfg.theta0.bounds
    m = theta.size
    obj.freeze_c(theta)
    rng = np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    rep = obj.f_and_grad(theta)
    f, g = rep.f_value, rep.grad.copy()
    grad_tol = cfg.grad_tol if cfg.grad_tol is not None else 1e-6 * (1.0 + f)
    records = [
        TraceRecord(0, -1, theta.copy(), f, float(np.linalg.norm(g)), 0.0,
                    1e3 * (time.perf_counter() - t0))
    ]
    status = "max_iters"
    it = 0
    stop = False
    while it < cfg.max_iters and not stop:
        if float(np.linalg.norm(g)) < grad_tol:
            status = "converged"
            break
        if cfg.early_stop_loss is not None and f < cfg.early_stop_loss:
            status = "early_stop"
            break
        order = rng.permutation(m) if cfg.coordinate_order == "random" else range(m)
        progressed = False
        for k in order:
            if it >= cfg.max_iters:
                break
            t_it = time.perf_counter()
            if cfg.gradient_method == "ift":
                f, gk = obj.grad_component(theta, k)
                g[k] = gk
            else:
                gk = g[k]
            if gk == 0.0:
                continue
            direction = np.zeros(m)
            direction[k] = -gk
            bt = _tau_scale(cfg, abs(theta[k]), abs(gk))
            theta_new, tau, f_new, st = backtracking_step(
                obj.f_only, theta, g, direction, bt, bounds=bounds, f0=f
            )
            it += 1
            if st != "accepted":
                records.append(
                    TraceRecord(it, int(k), theta.copy(), f,
                                float(np.linalg.norm(g)), 0.0,
                                1e3 * (time.perf_counter() - t_it))
                )
                continue
            progressed = True
            theta, f = theta_new, f_new
            records.append(
                TraceRecord(it, int(k), theta.copy(), f,
                            float(np.linalg.norm(g)), tau,
                            1e3 * (time.perf_counter() - t_it))
            )
            if cfg.early_stop_loss is not None and f < cfg.early_stop_loss:
                status = "early_stop"
                stop = True
                break
        else:
            if not progressed:
                status = "line_search_failed"
                break
            # refresh the gradient only; f stays the accepted line-search
            # value so the Armijo chain is monotone by construction
            rep = obj.f_and_grad(theta)
            g = rep.grad.copy()
    return _finish(records, status, theta, f, obj)
