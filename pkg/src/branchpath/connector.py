"""Constructive connection of two equal-mass atomic measures through a dyadic
grid of cones, with a certified energy bound, plus the dyadic-refinement
transport chain that exhibits the summability threshold of the cost exponent.
"""

from __future__ import annotations

import numpy as np

from .geometry import Cube, subdivide
from .measures import (
    MERGE_TOL,
    CostSpec,
    MassMismatch,
    SignedAtomicMeasure,
    h_mass_measure,
)
from .currents import PolyhedralCurrent, cone, h_mass

# cap on the number of grid cells a single discretization may use
CELL_BUDGET = 1 << 22


class AtomOnSkeleton(ValueError):
    """An atom lies on the grid skeleton; shift the grid first."""


class ConnectionResult:
    """A connecting current with its grid level, certified bound, and the
    coarse cell-imbalance measure used by the center cone."""

    __slots__ = ("current", "k", "bound", "sigma")

    def __init__(self, current: PolyhedralCurrent, k: int, bound: float, sigma):
        object.__setattr__(self, "current", current)
        object.__setattr__(self, "k", int(k))
        object.__setattr__(self, "bound", float(bound))
        object.__setattr__(self, "sigma", sigma)

    def __setattr__(self, name, value):
        raise AttributeError("ConnectionResult is immutable")

    def __repr__(self) -> str:
        return f"ConnectionResult(k={self.k}, bound={self.bound:.6g})"


def connect(
    mu: SignedAtomicMeasure,
    nu: SignedAtomicMeasure,
    Q: Cube,
    k: int,
    cost: CostSpec,
) -> ConnectionResult:
    """Connect equal-mass positive measures supported in Q through level-k cones.

    In each grid cell, a cone from the cell center spans the local part of
    mu - nu; a second cone from the center of Q spans the measure sigma of
    per-cell imbalances nu(cell) - mu(cell).  The difference of the two cone
    systems has boundary exactly mu - nu and energy at most

        2^-k * l * (cost(mu) + cost(nu)) + l * cost(sigma),

    with l the Euclidean diameter of Q.

    Raises MassMismatch for unbalanced inputs and AtomOnSkeleton when an
    atom sits on the level-k skeleton (shift the grid first).
    """
    if not (mu.is_positive and nu.is_positive):
        raise ValueError("connect requires positive measures")
    if abs(mu.total - nu.total) > 1e-9 * max(1.0, mu.total, nu.total):
        raise MassMismatch(f"total masses differ: {mu.total} vs {nu.total}")
    grid = subdivide(Q, k)
    delta = mu - nu
    for p in delta.points:
        if Q.boundary_gap(p) <= 0:
            raise ValueError(f"atom {p.tolist()} not strictly inside the cube")
        if grid.on_skeleton(p):
            raise AtomOnSkeleton(f"atom {p.tolist()} lies on the level-{k} skeleton")

    current = PolyhedralCurrent.empty(Q.d)
    sigma_points = []
    sigma_weights = []
    if not delta.is_empty:
        cells = np.array([grid.cell_index(p) for p in delta.points])
        for cell_id in np.unique(cells):
            sel = cells == cell_id
            local = SignedAtomicMeasure(delta.points[sel], delta.weights[sel])
            center = grid.cell_center(int(cell_id))
            current = current + cone(center, local)
            imbalance = -float(np.sum(delta.weights[sel]))  # nu(cell) - mu(cell)
            if abs(imbalance) >= MERGE_TOL:
                sigma_points.append(center)
                sigma_weights.append(imbalance)
    if sigma_points:
        sigma = SignedAtomicMeasure(np.array(sigma_points), np.array(sigma_weights))
    else:
        sigma = SignedAtomicMeasure.empty(Q.d)
    current = current - cone(Q.center, sigma)

    l = Q.diameter
    bound = 2.0 ** (-k) * l * (
        h_mass_measure(mu, cost) + h_mass_measure(nu, cost)
    ) + l * h_mass_measure(sigma, cost)
    return ConnectionResult(current, k, bound, sigma)


def dyadic_discretize(mu: SignedAtomicMeasure, Q: Cube, level: int) -> SignedAtomicMeasure:
    """Concentrate the mass of each level cell at its center.

    Cells are half-open (lower-closed), so atoms on interior faces are
    assigned deterministically to the upper cell.
    """
    grid = subdivide(Q, level)
    if grid.n_cells > CELL_BUDGET:
        raise ValueError(
            f"level {level} in dimension {Q.d} needs {grid.n_cells} cells, over budget"
        )
    if mu.is_empty:
        return mu
    n = grid.n_per_axis
    idx = np.floor((mu.points - Q.lo[None, :]) / grid.cell_edge).astype(int)
    if np.any(idx < 0) or np.any(idx > n):
        raise ValueError("measure not supported in the cube")
    idx = np.clip(idx, 0, n - 1)
    flat = np.ravel_multi_index(tuple(idx.T), (n,) * Q.d)
    order = np.argsort(flat, kind="stable")
    flat_sorted = flat[order]
    w_sorted = mu.weights[order]
    cut = np.ones(flat_sorted.size, dtype=bool)
    cut[1:] = flat_sorted[1:] != flat_sorted[:-1]
    cell_ids = flat_sorted[cut]
    sums = np.add.reduceat(w_sorted, np.nonzero(cut)[0])
    multi = np.stack(np.unravel_index(cell_ids, (n,) * Q.d), axis=-1).astype(float)
    centers = Q.lo[None, :] + (multi + 0.5) * grid.cell_edge
    return SignedAtomicMeasure(centers, sums)


def refinement_transport(mu: SignedAtomicMeasure, Q: Cube, level: int) -> PolyhedralCurrent:
    """Transport current from the level discretization to the level+1 one:
    a segment from each parent cell center to each occupied child center,
    carrying the child mass."""
    child = dyadic_discretize(mu, Q, level + 1)
    if child.is_empty:
        return PolyhedralCurrent.empty(Q.d)
    parent_grid = subdivide(Q, level)
    step = parent_grid.cell_edge
    multi = np.clip(
        np.floor((child.points - Q.lo[None, :]) / step).astype(int),
        0,
        parent_grid.n_per_axis - 1,
    ).astype(float)
    parents = Q.lo[None, :] + (multi + 0.5) * step
    return PolyhedralCurrent(parents, child.points, child.weights)


def dyadic_connection_cost(
    mu: SignedAtomicMeasure, Q: Cube, kmax: int, cost: CostSpec
) -> list[float]:
    """Per-level energies of the dyadic refinement chain of mu.

    Entry l is the energy of the transport between the level-l and
    level-(l+1) discretizations; partial sums upper-bound the cost of
    connecting the coarsest discretization to the level-kmax one.
    """
    if not mu.is_positive:
        raise ValueError("the refinement chain is defined for positive measures")
    costs = []
    for level in range(int(kmax)):
        costs.append(h_mass(refinement_transport(mu, Q, level), cost))
    return costs
