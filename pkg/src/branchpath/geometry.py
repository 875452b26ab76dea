"""Axis-aligned cubes, dyadic grids and their skeletons, sup-norm distance,
and atom-avoiding grid placement.

All values are immutable after construction and safe to share between
concurrent tasks.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

# Skeleton membership tolerance, relative to the edge length of the cube
# whose grid is being tested.
SKELETON_RTOL = 1e-12


def as_point(p) -> np.ndarray:
    """Coerce to a read-only float64 coordinate vector; require d >= 1, finite."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"point must be a 1-d coordinate vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point has non-finite coordinates")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


def sup_dist(z, x) -> float:
    """Sup-norm distance max_i |z_i - x_i| between two points of equal dimension."""
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    if z.shape != x.shape:
        raise ValueError(f"dimension mismatch: {z.shape} vs {x.shape}")
    return float(np.max(np.abs(z - x)))


class Cube:
    """Closed axis-aligned cube given by its center and edge length."""

    __slots__ = ("center", "edge")

    def __init__(self, center, edge: float):
        edge = float(edge)
        if not (edge > 0) or not math.isfinite(edge):
            raise ValueError(f"cube edge must be positive and finite, got {edge}")
        object.__setattr__(self, "center", as_point(center))
        object.__setattr__(self, "edge", edge)

    def __setattr__(self, name, value):
        raise AttributeError("Cube is immutable")

    @property
    def d(self) -> int:
        return self.center.size

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.edge / 2.0

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.edge / 2.0

    @property
    def diameter(self) -> float:
        """Euclidean diameter, edge * sqrt(d)."""
        return self.edge * math.sqrt(self.d)

    def contains(self, p, strict: bool = False) -> bool:
        gap = self.edge / 2.0 - sup_dist(p, self.center)
        return gap > 0.0 if strict else gap >= 0.0

    def boundary_gap(self, p) -> float:
        """Signed sup-norm distance from the boundary: > 0 inside, < 0 outside."""
        return self.edge / 2.0 - sup_dist(p, self.center)

    def __repr__(self) -> str:
        return f"Cube(center={self.center.tolist()}, edge={self.edge})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Cube)
            and self.edge == other.edge
            and np.array_equal(self.center, other.center)
        )

    def __hash__(self) -> int:
        return hash((tuple(self.center), self.edge))

    def to_json(self) -> dict:
        return {"center": self.center.tolist(), "edge": self.edge}

    @classmethod
    def from_json(cls, obj: dict) -> "Cube":
        return cls(obj["center"], obj["edge"])


def enlarge(Q: Cube, rho: float) -> Cube:
    """Concentric cube with edge scaled by the homothety ratio rho > 0."""
    rho = float(rho)
    if rho <= 0:
        raise ValueError(f"homothety ratio must be positive, got {rho}")
    return Cube(Q.center, rho * Q.edge)


class Grid:
    """Dyadic subdivision of a root cube into 2^(k*d) cells.

    Cells are indexed lexicographically by their integer multi-index
    (row-major over axes), so cell 0 sits at the lower corner of the root
    and the last cell at the upper corner.
    """

    __slots__ = ("root", "k")

    def __init__(self, root: Cube, k: int):
        k = int(k)
        if k < 0:
            raise ValueError(f"subdivision level must be >= 0, got {k}")
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "k", k)

    def __setattr__(self, name, value):
        raise AttributeError("Grid is immutable")

    @property
    def d(self) -> int:
        return self.root.d

    @property
    def n_per_axis(self) -> int:
        return 1 << self.k

    @property
    def n_cells(self) -> int:
        return self.n_per_axis**self.d

    @property
    def cell_edge(self) -> float:
        return self.root.edge / self.n_per_axis

    def cell_center(self, index: int) -> np.ndarray:
        multi = np.array(
            np.unravel_index(int(index), (self.n_per_axis,) * self.d), dtype=float
        )
        return self.root.lo + (multi + 0.5) * self.cell_edge

    def cell(self, index: int) -> Cube:
        return Cube(self.cell_center(index), self.cell_edge)

    def cells(self) -> list[Cube]:
        return [self.cell(i) for i in range(self.n_cells)]

    def cell_centers(self) -> np.ndarray:
        """All cell centers, shape (n_cells, d), in lexicographic index order."""
        n = self.n_per_axis
        axes = [self.root.lo[j] + (np.arange(n) + 0.5) * self.cell_edge for j in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel(order="C") for m in mesh], axis=-1)

    def multi_index(self, p) -> np.ndarray:
        """Integer cell coordinates of a point, clipped to the grid range.

        Uses the half-open convention: a point exactly on an interior face
        belongs to the upper cell.  Callers that cannot tolerate face
        ambiguity must check ``on_skeleton`` first.
        """
        p = np.asarray(p, dtype=float)
        if p.shape != (self.d,):
            raise ValueError(f"dimension mismatch: {p.shape} vs d={self.d}")
        idx = np.floor((p - self.root.lo) / self.cell_edge).astype(int)
        return np.clip(idx, 0, self.n_per_axis - 1)

    def cell_index(self, p) -> int:
        multi = self.multi_index(p)
        return int(np.ravel_multi_index(tuple(multi), (self.n_per_axis,) * self.d))

    def skeleton_gap(self, p) -> float:
        """Distance from p to the nearest grid hyperplane (any axis, any level-k face)."""
        p = np.asarray(p, dtype=float)
        rel = (p - self.root.lo) / self.cell_edge
        return float(np.min(np.abs(rel - np.round(rel))) * self.cell_edge)

    def on_skeleton(self, p, tol: float | None = None) -> bool:
        """Whether p lies on the (d-1)-skeleton of the grid, within tolerance.

        A point outside the closed root cube is never on the skeleton.
        """
        if tol is None:
            tol = SKELETON_RTOL * self.root.edge
        if self.root.boundary_gap(p) < -tol:
            return False
        return self.skeleton_gap(p) <= tol


def subdivide(Q: Cube, k: int) -> Grid:
    """Dyadic grid obtained by dividing each edge of Q into 2^k equal parts."""
    return Grid(Q, k)


def _axis_clear(coords: np.ndarray, lo: float, edge: float, kmax: int, tol: float) -> bool:
    """True when no coordinate in `coords` is within tol of a level-<=kmax plane."""
    for k in range(kmax + 1):
        step = edge / (1 << k)
        rel = (coords - lo) / step
        if np.any(np.abs(rel - np.round(rel)) * step <= tol):
            return False
    return True


def shift_grid_avoiding(Q: Cube, atoms: Sequence, kmax: int) -> Cube:
    """Enlarged and shifted cube Q' containing Q whose dyadic skeletons miss all atoms.

    Returns Q' with Q'.edge >= Q.edge + 2 such that no atom lies on the
    skeleton of ``subdivide(Q', k)`` for any k <= kmax.  Only finitely many
    atoms and levels are tested, so a finite per-axis search over candidate
    offsets succeeds; the result is verified exhaustively before returning.
    """
    kmax = int(kmax)
    if kmax < 0:
        raise ValueError(f"kmax must be >= 0, got {kmax}")
    pts = [as_point(a) for a in atoms]
    d = Q.d
    for p in pts:
        if p.size != d:
            raise ValueError("atom dimension does not match the cube")

    # Integer edge with at least unit margin on every side of Q.
    edge = float(math.floor(Q.edge) + 4)
    tol = SKELETON_RTOL * edge

    lo = np.empty(d)
    for j in range(d):
        coords = np.array([p[j] for p in pts]) if pts else np.empty(0)
        base = Q.lo[j] - 1.0
        n_cand = 64
        found = None
        while found is None:
            for m in range(n_cand):
                rho = m / (n_cand + 1.0)
                if _axis_clear(coords, base - rho, edge, kmax, tol):
                    found = base - rho
                    break
            else:
                n_cand *= 2
                if n_cand > 1 << 22:
                    raise RuntimeError("could not place grid away from atoms")
        lo[j] = found

    # margins stay >= 1 on both sides for any rho in [0, 1)
    shifted = Cube(lo + edge / 2.0, edge)
    for k in range(kmax + 1):
        grid = Grid(shifted, k)
        for p in pts:
            if grid.on_skeleton(p):  # pragma: no cover - defensive
                raise RuntimeError("grid shift verification failed")
    return shifted
