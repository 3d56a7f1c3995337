"""Uniform box grids and mass fields stored as flat vectors.

The memory layout is fixed package-wide: the first axis varies fastest,
so a cell with axis indices (i, j, k) on an (nx, ny, nz) grid sits at
flat position i + nx * (j + ny * k). Every field (histogram, stationary
density, dual potential) is a flat float64 vector in this order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Grid", "DensityField"]


@dataclass(frozen=True)
class Grid:
    """Axis-aligned box split into equal-width cells along each axis.

    Parameters
    ----------
    lo, hi : tuple of float
        Box corners, one entry per axis, with hi[d] > lo[d].
    counts : tuple of int
        Cells per axis, at least 2 on every axis.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        counts = tuple(int(v) for v in self.counts)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "counts", counts)
        if not (len(lo) == len(hi) == len(counts)):
            raise ValueError("lo, hi, counts must have the same length")
        if len(counts) == 0:
            raise ValueError("grid needs at least one axis")
        for d, (a, b, n) in enumerate(zip(lo, hi, counts)):
            if n < 2:
                raise ValueError(f"axis {d}: need at least 2 cells, got {n}")
            if not b > a:
                raise ValueError(f"axis {d}: hi must exceed lo ({a!r} >= {b!r})")

    # -- geometry -----------------------------------------------------

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def n(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / n for a, b, n in zip(self.lo, self.hi, self.counts))

    def centers(self, axis: int) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        dx = self.spacing[axis]
        return self.lo[axis] + dx * (np.arange(self.counts[axis]) + 0.5)

    def faces(self, axis: int) -> np.ndarray:
        """Face coordinates along one axis (counts[axis] + 1 values)."""
        dx = self.spacing[axis]
        return self.lo[axis] + dx * np.arange(self.counts[axis] + 1)

    def cell_center(self, flat: int) -> np.ndarray:
        """Center point of the cell at a flat index."""
        if not 0 <= flat < self.n:
            raise IndexError(f"flat index {flat} out of range for {self.n} cells")
        idx = self.axis_indices(np.asarray([flat]))
        return np.array([self.centers(d)[idx[d][0]] for d in range(self.ndim)])

    def axis_indices(self, flat: np.ndarray) -> tuple[np.ndarray, ...]:
        """Split flat indices into per-axis indices (first axis fastest)."""
        flat = np.asarray(flat)
        out = []
        rem = flat
        for n in self.counts:
            out.append(rem % n)
            rem = rem // n
        return tuple(out)

    def flat_index(self, *axis_idx: np.ndarray) -> np.ndarray:
        """Combine per-axis indices into flat indices."""
        if len(axis_idx) != self.ndim:
            raise ValueError("need one index array per axis")
        flat = np.zeros_like(np.asarray(axis_idx[0]))
        stride = 1
        for n, idx in zip(self.counts, axis_idx):
            flat = flat + stride * np.asarray(idx)
            stride *= n
        return flat

    def diameter(self) -> float:
        """Largest distance between two cell centers."""
        spans = [(n - 1) * dx for n, dx in zip(self.counts, self.spacing)]
        return float(np.sqrt(sum(s * s for s in spans)))

    # -- layout helpers ----------------------------------------------

    def to_array(self, flat: np.ndarray) -> np.ndarray:
        """View a flat vector as an ndim array (first axis fastest)."""
        flat = np.asarray(flat)
        if flat.shape[-1] != self.n and flat.size != self.n:
            raise ValueError(f"expected {self.n} values, got {flat.size}")
        return flat.reshape(self.counts, order="F")

    def from_array(self, arr: np.ndarray) -> np.ndarray:
        if tuple(arr.shape) != self.counts:
            raise ValueError(f"expected shape {self.counts}, got {arr.shape}")
        return arr.reshape(-1, order="F")

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map points to flat cell indices.

        Returns (flat, inside). Points on or past the upper box face fall
        outside; the flat entry for an outside point is unspecified.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[-1] != self.ndim:
            raise ValueError(f"points must have {self.ndim} coordinates")
        inside = np.ones(points.shape[0], dtype=bool)
        per_axis = []
        for d in range(self.ndim):
            dx = self.spacing[d]
            idx = np.floor((points[:, d] - self.lo[d]) / dx).astype(np.int64)
            inside &= (idx >= 0) & (idx < self.counts[d])
            per_axis.append(np.clip(idx, 0, self.counts[d] - 1))
        return self.flat_index(*per_axis), inside

    def axes_meta(self) -> list[dict]:
        """Per-axis {lo, hi, count} records, the on-disk header form."""
        return [
            {"lo": a, "hi": b, "count": n}
            for a, b, n in zip(self.lo, self.hi, self.counts)
        ]

    @classmethod
    def from_spacing(cls, lo, hi, dx) -> "Grid":
        """Build a grid from a target cell width.

        The count per axis is round(width / dx) clamped to >= 2; effective
        spacing is then width / count, which can differ slightly from dx
        when dx does not divide the width.
        """
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        if np.isscalar(dx):
            dx = (float(dx),) * len(lo)
        counts = tuple(
            max(2, int(round((b - a) / d))) for a, b, d in zip(lo, hi, dx)
        )
        return cls(lo, hi, counts)


@dataclass
class DensityField:
    """A nonnegative mass vector attached to its grid.

    `values` is flat in the package layout. Probability fields carry
    total mass 1; `normalized()` returns a rescaled copy and is a no-op
    on an already normalized field up to roundoff.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.grid.n:
            raise ValueError(
                f"field has {self.values.size} entries, grid has {self.grid.n} cells"
            )

    def total(self) -> float:
        return float(self.values.sum())

    def normalized(self) -> "DensityField":
        tot = self.total()
        if tot <= 0:
            raise ValueError("cannot normalize a field with nonpositive mass")
        return DensityField(self.grid, self.values / tot)

    def as_array(self) -> np.ndarray:
        return self.grid.to_array(self.values)
