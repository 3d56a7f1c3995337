"""Stationary distributions of the teleported transfer operator.

With teleportation strength eps in (0, 1) the operator M_eps has a
unique stationary probability vector with strictly positive entries.
The fixed-point equation reduces to one sparse linear solve,

    ((1 - eps) (I + cK) - I) rho = -(eps / n) 1,

whose exact solution already has total mass 1; the factorization of
that matrix is kept because the sensitivity and adjoint solves in the
gradient module reuse it (the transpose solve included).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NumericalError
from .fvm import MarkovOperator
from .grid import DensityField

__all__ = [
    "SparseFactor",
    "StationaryInfo",
    "solve_stationary_direct",
    "solve_stationary_power",
    "epsilon_sweep",
    "EpsilonSweepResult",
]

_RESIDUAL_TOL = 1e-10


class SparseFactor:
    """LU factorization of A = (1 - eps)(I + cK) - I, immutable once built."""

    def __init__(self, markov: MarkovOperator):
        if markov.epsilon <= 0:
            raise ValueError("stationary solves need epsilon > 0 (A is singular at 0)")
        self.markov = markov
        n = markov.n
        one_minus = 1.0 - markov.epsilon
        K = markov.op.K
        A = (one_minus * markov.c) * K + sp.identity(n, format="csc") * (
            one_minus - 1.0
        )
        self.A = A.tocsc()
        self._lu = splu(self.A)

    def solve(self, b: np.ndarray, refine: int = 1) -> np.ndarray:
        """Solve A x = b with optional iterative refinement sweeps."""
        x = self._lu.solve(b)
        for _ in range(refine):
            r = b - self.A @ x
            x = x + self._lu.solve(r)
        return x

    def solve_t(self, b: np.ndarray, refine: int = 1) -> np.ndarray:
        """Solve A^T x = b (adjoint systems share the factorization)."""
        x = self._lu.solve(b, trans="T")
        AT = self.A.T
        for _ in range(refine):
            r = b - AT @ x
            x = x + self._lu.solve(r, trans="T")
        return x


@dataclass
class StationaryInfo:
    method: str
    residual_inf: float
    iterations: int = 0
    factor: SparseFactor | None = field(default=None, repr=False)


def _residual_inf(markov: MarkovOperator, rho: np.ndarray) -> float:
    return float(np.abs(markov.matvec(rho) - rho).max())


def solve_stationary_direct(
    markov: MarkovOperator, factor: SparseFactor | None = None
) -> tuple[DensityField, StationaryInfo]:
    """Stationary density by one sparse LU solve.

    Certifies the result: the fixed-point residual must beat 1e-10 in
    the max norm and every entry must be strictly positive (the
    teleportation floor guarantees rho_i >= eps / n in exact
    arithmetic). Violations raise NumericalError.
    """
    if factor is None:
        factor = SparseFactor(markov)
    n = markov.n
    rhs = np.full(n, -markov.epsilon / n)
    rho = factor.solve(rhs)
    total = rho.sum()
    if not np.isfinite(total) or total <= 0:
        raise NumericalError("stationary solve produced a nonpositive mass")
    rho = rho / total
    if rho.min() <= 0:
        raise NumericalError(
            f"stationary density lost positivity (min entry {rho.min():.3e})"
        )
    res = _residual_inf(markov, rho)
    if res >= _RESIDUAL_TOL:
        raise NumericalError(
            f"stationary residual {res:.3e} exceeds {_RESIDUAL_TOL:.0e}"
        )
    info = StationaryInfo(method="direct", residual_inf=res, factor=factor)
    return DensityField(markov.op.grid, rho), info


def solve_stationary_power(
    markov: MarkovOperator,
    tol: float = 1e-12,
    max_iters: int = 500_000,
    x0: np.ndarray | None = None,
) -> tuple[DensityField, StationaryInfo]:
    """Stationary density by renormalized power iteration.

    Stops when consecutive iterates differ by less than tol in l1;
    exceeding max_iters raises NumericalError with the last gap.
    """
    n = markov.n
    x = np.full(n, 1.0 / n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if x.min() < 0 or x.sum() <= 0:
        raise ValueError("power iteration needs a nonnegative starting vector")
    x = x / x.sum()
    for it in range(1, max_iters + 1):
        y = markov.matvec(x)
        y /= y.sum()
        gap = float(np.abs(y - x).sum())
        x = y
        if gap < tol:
            res = _residual_inf(markov, x)
            info = StationaryInfo(method="power", residual_inf=res, iterations=it)
            return DensityField(markov.op.grid, x), info
    raise NumericalError(
        f"power iteration did not reach tol {tol:.1e} in {max_iters} steps "
        f"(last l1 gap {gap:.3e})"
    )


@dataclass
class EpsilonSweepResult:
    """Per-epsilon misfits against a small-eps reference density."""

    epsilons: list[float]
    l1_misfit: list[float]
    w2_misfit: list[float]
    slope: float

    def monotone_decreasing(self) -> bool:
        v = self.l1_misfit
        return all(a > b for a, b in zip(v, v[1:]))

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.epsilons, self.l1_misfit, self.w2_misfit))


def epsilon_sweep(
    markov_builder,
    epsilons,
    eps_ref: float,
    ot_distance=None,
) -> EpsilonSweepResult:
    """Misfit of rho_eps against rho_{eps_ref} for decreasing eps.

    markov_builder(eps) must return the teleported operator at that
    teleportation strength, sharing K and c across calls so only eps
    varies. The log-log slope of the l1 column is fit by least squares;
    ot_distance(rho_a, rho_b), when given, fills the transport column,
    otherwise it is NaN.
    """
    epsilons = sorted((float(e) for e in epsilons), reverse=True)
    if eps_ref >= min(epsilons):
        raise ValueError("reference eps must be smaller than every probe eps")
    ref, _ = solve_stationary_direct(markov_builder(eps_ref))
    l1 = []
    w2 = []
    for eps in epsilons:
        rho, _ = solve_stationary_direct(markov_builder(eps))
        l1.append(float(np.abs(rho.values - ref.values).sum()))
        if ot_distance is None:
            w2.append(float("nan"))
        else:
            w2.append(float(ot_distance(rho, ref)))
    slope = float(np.polyfit(np.log(epsilons), np.log(l1), 1)[0])
    return EpsilonSweepResult(
        epsilons=list(epsilons), l1_misfit=l1, w2_misfit=w2, slope=slope
    )
