"""Finite signed atomic measures, concave transport-cost integrands, Jordan
decomposition, restriction to cube regions, and an exact Kantorovich
1-distance for equal-mass positive measures.

A measure is canonical when coincident atoms (within 1e-12 absolute) are
merged and zero weights dropped; every constructor enforces this.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np
from scipy.optimize import linprog

from .geometry import Cube

MERGE_TOL = 1e-12


class AtomOnBoundary(ValueError):
    """An atom lies on the boundary of the restriction region; shift the grid first."""


class MassMismatch(ValueError):
    """Two measures that must balance have different total masses."""


class CostSpec:
    """Transport-cost integrand H evaluated on edge or atom multiplicities.

    Three kinds:
      * power:   H(t) = |t|^alpha with alpha in (0, 1];
      * size:    H(t) = 1 for t != 0 and H(0) = 0;
      * general: a caller-supplied rule with asserted structural flags,
        spot-checked on sampled arguments at construction.
    """

    __slots__ = ("kind", "alpha", "_fn", "flags")

    def __init__(self, kind: str, alpha: float | None = None, fn=None, flags=None):
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "_fn", fn)
        object.__setattr__(self, "flags", dict(flags) if flags else {})

    def __setattr__(self, name, value):
        raise AttributeError("CostSpec is immutable")

    @classmethod
    def power(cls, alpha: float) -> "CostSpec":
        alpha = float(alpha)
        if not (0.0 < alpha <= 1.0):
            raise ValueError(f"power exponent must lie in (0, 1], got {alpha}")
        return cls("power", alpha=alpha)

    @classmethod
    def size(cls) -> "CostSpec":
        return cls("size")

    @classmethod
    def general(
        cls,
        fn: Callable[[float], float],
        *,
        even: bool = True,
        subadditive: bool = True,
        nondecreasing: bool = True,
        zero_at_zero: bool = True,
        continuous_at_zero: bool = True,
        n_checks: int = 1000,
        seed: int = 0,
    ) -> "CostSpec":
        flags = {
            "even": even,
            "subadditive": subadditive,
            "nondecreasing": nondecreasing,
            "zero_at_zero": zero_at_zero,
            "continuous_at_zero": continuous_at_zero,
        }
        spec = cls("general", fn=fn, flags=flags)
        spec._spot_check(n_checks, seed)
        return spec

    def _spot_check(self, n_checks: int, seed: int) -> None:
        rng = np.random.default_rng(seed)
        a = rng.uniform(1e-9, 10.0, n_checks)
        b = rng.uniform(1e-9, 10.0, n_checks)
        ha, hb, hab = self.h(a), self.h(b), self.h(a + b)
        if self.flags.get("zero_at_zero") and abs(self.h(0.0)) > 1e-12:
            raise ValueError("asserted H(0) = 0 fails")
        if self.flags.get("subadditive") and np.any(hab > ha + hb + 1e-9):
            raise ValueError("asserted subadditivity fails on sampled arguments")
        if self.flags.get("nondecreasing"):
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            if np.any(self.h(lo) > self.h(hi) + 1e-9):
                raise ValueError("asserted monotonicity fails on sampled arguments")
        if self.flags.get("continuous_at_zero"):
            # crude screen: a cost continuous at 0 with H(0)=0 must be small
            # on tiny arguments; catches mis-declared size-like costs
            if self.h(1e-15) > 0.9 * self.h(1.0) + 1e-12:
                raise ValueError("asserted continuity at 0 looks violated")

    @property
    def is_subadditive(self) -> bool:
        if self.kind in ("power", "size"):
            return True
        return bool(self.flags.get("subadditive"))

    def h(self, theta):
        """Evaluate H(|theta|); elementwise on arrays, scalar in scalar out."""
        t = np.abs(np.asarray(theta, dtype=float))
        if self.kind == "power":
            out = t**self.alpha
        elif self.kind == "size":
            out = (t > 0).astype(float)
        else:
            out = np.vectorize(self._fn, otypes=[float])(t)
        if np.ndim(theta) == 0:
            return float(out)
        return out

    def __repr__(self) -> str:
        if self.kind == "power":
            return f"CostSpec.power({self.alpha})"
        if self.kind == "size":
            return "CostSpec.size()"
        return f"CostSpec.general(flags={self.flags})"

    def to_json(self) -> dict:
        if self.kind == "power":
            return {"power": self.alpha}
        if self.kind == "size":
            return {"size": True}
        raise ValueError("general costs have no JSON form")

    @classmethod
    def from_json(cls, obj: dict) -> "CostSpec":
        if "power" in obj:
            return cls.power(obj["power"])
        if obj.get("size"):
            return cls.size()
        raise ValueError(f"unrecognized cost spec: {obj!r}")


def merge_points(points: np.ndarray, tol: float = MERGE_TOL):
    """Group near-coincident rows of a point array.

    Returns (unique_points, labels) where labels[i] is the group index of
    row i.  Points within `tol` in sup norm sort adjacently and are merged;
    group representatives are the first member in lexicographic order.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n == 0:
        return points.reshape(0, points.shape[1] if points.ndim == 2 else 0), np.empty(0, dtype=int)
    order = np.lexsort(points.T[::-1])
    sorted_pts = points[order]
    new_group = np.ones(n, dtype=bool)
    if n > 1:
        new_group[1:] = np.max(np.abs(np.diff(sorted_pts, axis=0)), axis=1) > tol
    labels_sorted = np.cumsum(new_group) - 1
    labels = np.empty(n, dtype=int)
    labels[order] = labels_sorted
    return sorted_pts[new_group], labels


class SignedAtomicMeasure:
    """Finite weighted sum of Dirac masses with nonzero real weights."""

    __slots__ = ("points", "weights")

    def __init__(self, points, weights):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        weights = np.asarray(weights, dtype=float).ravel()
        if points.size == 0:
            points = points.reshape(0, points.shape[1] if points.shape[-1] else 1)
        if points.shape[0] != weights.shape[0]:
            raise ValueError("points and weights length mismatch")
        if points.shape[0] > 0 and not np.all(np.isfinite(points)):
            raise ValueError("non-finite atom coordinates")
        if not np.all(np.isfinite(weights)):
            raise ValueError("non-finite atom weights")
        pts, w = self._canonicalize(points, weights)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        self.points.flags.writeable = False
        self.weights.flags.writeable = False

    def __setattr__(self, name, value):
        raise AttributeError("SignedAtomicMeasure is immutable")

    @staticmethod
    def _canonicalize(points, weights):
        if points.shape[0] == 0:
            return points.copy(), weights.copy()
        reps, labels = merge_points(points)
        merged = np.zeros(reps.shape[0])
        np.add.at(merged, labels, weights)
        keep = np.abs(merged) >= MERGE_TOL
        pts, w = reps[keep], merged[keep]
        if pts.shape[0] == 0:
            return pts, w
        sort = np.lexsort(pts.T[::-1])
        return pts[sort].copy(), w[sort].copy()

    # -- constructors -------------------------------------------------------

    @classmethod
    def empty(cls, d: int = 1) -> "SignedAtomicMeasure":
        return cls(np.empty((0, d)), np.empty(0))

    @classmethod
    def dirac(cls, point, weight: float = 1.0) -> "SignedAtomicMeasure":
        return cls([point], [weight])

    @classmethod
    def from_atoms(cls, atoms: Iterable) -> "SignedAtomicMeasure":
        atoms = list(atoms)
        if not atoms:
            return cls.empty()
        pts = [np.asarray(p, dtype=float) for p, _ in atoms]
        ws = [float(w) for _, w in atoms]
        return cls(np.array(pts), np.array(ws))

    # -- basic queries -------------------------------------------------------

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def is_empty(self) -> bool:
        return self.n_atoms == 0

    @property
    def total(self) -> float:
        """Signed total mass (the measure of the whole space)."""
        return float(np.sum(self.weights))

    @property
    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.weights)))

    @property
    def is_positive(self) -> bool:
        return bool(np.all(self.weights > 0)) if self.n_atoms else True

    def same_atoms(self, other: "SignedAtomicMeasure", tol: float = MERGE_TOL) -> bool:
        """Atom-by-atom equality of canonical forms within tolerance."""
        return (self - other).total_variation <= tol * max(1, self.n_atoms + other.n_atoms)

    # -- algebra -------------------------------------------------------------

    def __add__(self, other: "SignedAtomicMeasure") -> "SignedAtomicMeasure":
        if self.is_empty:
            return other
        if other.is_empty:
            return self
        return SignedAtomicMeasure(
            np.vstack([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
        )

    def __sub__(self, other: "SignedAtomicMeasure") -> "SignedAtomicMeasure":
        return self + (-other)

    def __neg__(self) -> "SignedAtomicMeasure":
        return SignedAtomicMeasure(self.points, -self.weights)

    def scale(self, t: float) -> "SignedAtomicMeasure":
        return SignedAtomicMeasure(self.points, t * self.weights)

    def __repr__(self) -> str:
        return f"SignedAtomicMeasure({self.n_atoms} atoms, total={self.total:.6g})"

    # -- serialization --------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "atoms": [
                {"x": p.tolist(), "w": float(w)} for p, w in zip(self.points, self.weights)
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SignedAtomicMeasure":
        atoms = obj.get("atoms", [])
        if not atoms:
            return cls.empty()
        return cls(
            np.array([a["x"] for a in atoms], dtype=float),
            np.array([a["w"] for a in atoms], dtype=float),
        )


def canonicalize(raw: Iterable) -> SignedAtomicMeasure:
    """Merge coincident atoms (tol 1e-12) and drop zero weights."""
    return SignedAtomicMeasure.from_atoms(raw)


def h_mass_measure(mu: SignedAtomicMeasure, cost: CostSpec) -> float:
    """Sum of H(|w|) over the atoms: the concave-cost mass of an atomic measure.

    Equals the cost of the positive part plus the cost of the negative part
    since canonical atoms are distinct.
    """
    if mu.is_empty:
        return 0.0
    return float(np.sum(cost.h(mu.weights)))


def jordan(mu: SignedAtomicMeasure) -> tuple[SignedAtomicMeasure, SignedAtomicMeasure]:
    """Positive and negative parts; both nonnegative, mutually singular."""
    pos = mu.weights > 0
    return (
        SignedAtomicMeasure(mu.points[pos], mu.weights[pos]),
        SignedAtomicMeasure(mu.points[~pos], -mu.weights[~pos]),
    )


def _region_cubes(region) -> list[Cube]:
    if isinstance(region, Cube):
        return [region]
    return list(region)


def restrict_measure(mu: SignedAtomicMeasure, region) -> SignedAtomicMeasure:
    """Restriction to a cube (or union of cubes): keep atoms strictly inside.

    Raises AtomOnBoundary when any atom lies within 1e-12 (relative to the
    cube edge) of a region boundary; the caller should shift the grid.
    """
    cubes = _region_cubes(region)
    if mu.is_empty:
        return mu
    inside = np.zeros(mu.n_atoms, dtype=bool)
    for cube in cubes:
        tol = MERGE_TOL * max(cube.edge, 1.0)
        for i in range(mu.n_atoms):
            gap = cube.boundary_gap(mu.points[i])
            if abs(gap) <= tol:
                raise AtomOnBoundary(
                    f"atom {mu.points[i].tolist()} lies on the boundary of {cube}"
                )
            if gap > 0:
                inside[i] = True
    return SignedAtomicMeasure(mu.points[inside], mu.weights[inside])


def w1_distance(mu: SignedAtomicMeasure, nu: SignedAtomicMeasure, tol: float = 1e-9) -> float:
    """Exact Kantorovich 1-distance between equal-mass positive atomic measures.

    Solves the transportation linear program on the bipartite atom graph
    with Euclidean ground cost.
    """
    if not (mu.is_positive and nu.is_positive):
        raise ValueError("transport distance requires positive measures")
    if abs(mu.total - nu.total) > tol * max(1.0, mu.total, nu.total):
        raise MassMismatch(f"total masses differ: {mu.total} vs {nu.total}")
    if mu.is_empty and nu.is_empty:
        return 0.0
    if mu.is_empty or nu.is_empty:
        raise MassMismatch("one measure is empty but the other has mass")
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    cost = np.sqrt(np.sum(diff**2, axis=2))
    m, n = cost.shape
    if m == 1 or n == 1:
        # the plan is forced
        return float(np.sum(cost * np.outer(mu.weights, nu.weights)) / mu.total)
    c = cost.ravel()
    a_rows = np.zeros((m, m * n))
    for i in range(m):
        a_rows[i, i * n : (i + 1) * n] = 1.0
    a_cols = np.zeros((n, m * n))
    for j in range(n):
        a_cols[j, j::n] = 1.0
    a_eq = np.vstack([a_rows, a_cols])
    b_eq = np.concatenate([mu.weights, nu.weights * (mu.total / nu.total)])
    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:  # pragma: no cover - defensive
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)
