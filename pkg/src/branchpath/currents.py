"""Polyhedral 1-currents with real multiplicities: mass and concave-cost
energy, boundary, restriction to cube regions, cone constructions, and
slicing by sup-norm spheres.

A current is a finite list of oriented segments (a -> b) with nonzero real
multiplicities.  Canonical form: degenerate segments (length <= 1e-12)
dropped, orientation normalized so the lexicographically smaller endpoint
comes first (with the multiplicity sign flipped), and segments sharing both
endpoints merged by summing multiplicities.  Exactly-collinear partial
overlaps are left unsplit; restriction is the only operation that splits
edges.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .geometry import Cube, as_point
from .measures import (
    MERGE_TOL,
    CostSpec,
    SignedAtomicMeasure,
    h_mass_measure,
    merge_points,
    restrict_measure,
)

EDGE_FLOOR = 1e-12


class NonGenericRadius(ValueError):
    """An edge endpoint or boundary atom lies on the slicing sphere; perturb r."""


class NoRadiusFound(RuntimeError):
    """Defensive: no admissible slicing radius among the sampled candidates."""


class PolyhedralCurrent:
    """Weighted oriented segments [a_i -> b_i] with multiplicities theta_i."""

    __slots__ = ("a", "b", "theta")

    def __init__(self, a, b, theta):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        theta = np.asarray(theta, dtype=float).ravel()
        if a.size == 0:
            d = a.shape[1] if a.ndim == 2 and a.shape[-1] else 1
            a = a.reshape(0, d)
            b = b.reshape(0, d)
        if a.shape != b.shape or a.shape[0] != theta.shape[0]:
            raise ValueError("endpoint/multiplicity arrays have mismatched shapes")
        if a.size and not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite segment endpoints")
        if not np.all(np.isfinite(theta)):
            raise ValueError("non-finite multiplicities")
        a, b, theta = self._canonicalize(a, b, theta)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "theta", theta)
        for arr in (self.a, self.b, self.theta):
            arr.flags.writeable = False

    def __setattr__(self, name, value):
        raise AttributeError("PolyhedralCurrent is immutable")

    @staticmethod
    def _canonicalize(a, b, theta):
        if a.shape[0] == 0:
            return a.copy(), b.copy(), theta.copy()
        lengths = np.linalg.norm(b - a, axis=1)
        keep = (lengths > EDGE_FLOOR) & (np.abs(theta) >= MERGE_TOL)
        a, b, theta = a[keep], b[keep], theta[keep].copy()
        if a.shape[0] == 0:
            return a.copy(), b.copy(), theta
        # orient each segment from its lexicographically smaller endpoint
        diff = a - b
        nz = diff != 0
        first = np.argmax(nz, axis=1)
        lead = np.take_along_axis(diff, first[:, None], axis=1).ravel()
        swap = lead > 0
        a = a.copy()
        b = b.copy()
        a[swap], b[swap] = b[swap].copy(), a[swap].copy()
        theta[swap] = -theta[swap]
        # merge segments sharing both endpoints
        keys = np.hstack([a, b])
        reps, labels = merge_points(keys)
        merged = np.zeros(reps.shape[0])
        np.add.at(merged, labels, theta)
        keep = np.abs(merged) >= MERGE_TOL
        d = a.shape[1]
        return (
            np.ascontiguousarray(reps[keep, :d]),
            np.ascontiguousarray(reps[keep, d:]),
            merged[keep],
        )

    # -- constructors ---------------------------------------------------------

    @classmethod
    def empty(cls, d: int = 1) -> "PolyhedralCurrent":
        return cls(np.empty((0, d)), np.empty((0, d)), np.empty(0))

    @classmethod
    def from_edges(cls, edges: Iterable) -> "PolyhedralCurrent":
        edges = list(edges)
        if not edges:
            return cls.empty()
        a = np.array([np.asarray(e[0], dtype=float) for e in edges])
        b = np.array([np.asarray(e[1], dtype=float) for e in edges])
        th = np.array([float(e[2]) for e in edges])
        return cls(a, b, th)

    @classmethod
    def segment(cls, a, b, theta: float = 1.0) -> "PolyhedralCurrent":
        return cls.from_edges([(a, b, theta)])

    @classmethod
    def polyline(cls, vertices, theta: float = 1.0) -> "PolyhedralCurrent":
        vs = np.atleast_2d(np.asarray(vertices, dtype=float))
        return cls(vs[:-1], vs[1:], np.full(vs.shape[0] - 1, float(theta)))

    # -- basic queries --------------------------------------------------------

    @property
    def n_edges(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.a.shape[1]

    @property
    def is_empty(self) -> bool:
        return self.n_edges == 0

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.b - self.a, axis=1)

    def endpoints(self) -> np.ndarray:
        """All segment endpoints stacked, shape (2*n_edges, d)."""
        return np.vstack([self.a, self.b]) if self.n_edges else self.a

    # -- algebra --------------------------------------------------------------

    def __add__(self, other: "PolyhedralCurrent") -> "PolyhedralCurrent":
        if self.is_empty:
            return other
        if other.is_empty:
            return self
        return PolyhedralCurrent(
            np.vstack([self.a, other.a]),
            np.vstack([self.b, other.b]),
            np.concatenate([self.theta, other.theta]),
        )

    def __sub__(self, other: "PolyhedralCurrent") -> "PolyhedralCurrent":
        return self + (-other)

    def __neg__(self) -> "PolyhedralCurrent":
        return PolyhedralCurrent(self.a, self.b, -self.theta)

    def scale(self, t: float) -> "PolyhedralCurrent":
        return PolyhedralCurrent(self.a, self.b, t * self.theta)

    def same_current(self, other: "PolyhedralCurrent", tol: float = 1e-9) -> bool:
        """Canonical equality: the difference has (relative) mass below tol."""
        scale = max(mass(self), mass(other), 1.0)
        return mass(self - other) <= tol * scale

    def __repr__(self) -> str:
        return f"PolyhedralCurrent({self.n_edges} edges, mass={mass(self):.6g})"

    # -- serialization ----------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "edges": [
                {"a": pa.tolist(), "b": pb.tolist(), "theta": float(t)}
                for pa, pb, t in zip(self.a, self.b, self.theta)
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PolyhedralCurrent":
        edges = obj.get("edges", [])
        if not edges:
            return cls.empty()
        return cls.from_edges([(e["a"], e["b"], e["theta"]) for e in edges])


def mass(T: PolyhedralCurrent) -> float:
    """Total variation: sum of |theta| times Euclidean segment length."""
    if T.is_empty:
        return 0.0
    return float(np.sum(np.abs(T.theta) * T.lengths))


def h_mass(T: PolyhedralCurrent, cost: CostSpec) -> float:
    """Concave-cost energy: sum of H(|theta|) times Euclidean segment length.

    Evaluated per segment, so multiplicities must already be combined
    wherever segments overlap.  Canonical form merges segments sharing both
    endpoints; exactly-collinear partial overlaps must be split at shared
    subdivision points first (restriction and the combined-multiplicity
    refinement do this internally), otherwise the subadditive cost of the
    overlap is over-counted.
    """
    if T.is_empty:
        return 0.0
    return float(np.sum(cost.h(T.theta) * T.lengths))


def boundary(T: PolyhedralCurrent) -> SignedAtomicMeasure:
    """The signed 0-dimensional boundary sum theta * (delta_b - delta_a)."""
    if T.is_empty:
        return SignedAtomicMeasure.empty(T.d)
    points = np.vstack([T.b, T.a])
    weights = np.concatenate([T.theta, -T.theta])
    return SignedAtomicMeasure(points, weights)


def _region_cubes(region) -> list[Cube]:
    if isinstance(region, Cube):
        return [region]
    return list(region)


def _inside_region(p, cubes: Sequence[Cube]) -> bool:
    return any(c.boundary_gap(p) > 0.0 for c in cubes)


def restrict_current(T: PolyhedralCurrent, region, complement: bool = False) -> PolyhedralCurrent:
    """Restriction T restricted to a union of open cubes (or its complement).

    Every edge is split where it crosses a face plane of a region cube;
    each sub-edge is kept, with unchanged multiplicity, when its midpoint
    lies inside the region (outside, when ``complement`` is set).  Edges
    tangent to a face get the midpoint decision.  Additivity holds:
    the restriction plus its complement reproduces T.
    """
    cubes = _region_cubes(region)
    if T.is_empty:
        return T
    out_a, out_b, out_t = [], [], []
    for idx in range(T.n_edges):
        a = T.a[idx]
        b = T.b[idx]
        v = b - a
        ts = {0.0, 1.0}
        for cube in cubes:
            lo, hi = cube.lo, cube.hi
            for i in range(T.d):
                if v[i] != 0.0:
                    for plane in (lo[i], hi[i]):
                        t = (plane - a[i]) / v[i]
                        if 0.0 < t < 1.0:
                            ts.add(float(t))
        ts = sorted(ts)
        for t0, t1 in zip(ts[:-1], ts[1:]):
            mid = a + 0.5 * (t0 + t1) * v
            if _inside_region(mid, cubes) != complement:
                p = a if t0 == 0.0 else a + t0 * v
                q = b if t1 == 1.0 else a + t1 * v
                out_a.append(p)
                out_b.append(q)
                out_t.append(T.theta[idx])
    if not out_a:
        return PolyhedralCurrent.empty(T.d)
    return PolyhedralCurrent(np.array(out_a), np.array(out_b), np.array(out_t))


def cone(x, mu: SignedAtomicMeasure) -> PolyhedralCurrent:
    """Cone current with vertex x over an atomic measure: segments x -> x_i
    weighted by the atom masses.  Atoms coincident with x contribute nothing.

    Its boundary is mu minus (total mass of mu) times the Dirac at x, and its
    concave-cost energy is at most l times the cost of mu whenever mu lives
    in a cube of Euclidean diameter l containing x.
    """
    x = as_point(x)
    if mu.is_empty:
        return PolyhedralCurrent.empty(x.size)
    if mu.d != x.size:
        raise ValueError("vertex/measure dimension mismatch")
    a = np.tile(x, (mu.n_atoms, 1))
    return PolyhedralCurrent(a, mu.points, mu.weights)


class ZeroSlice:
    """A sliced 0-current: atoms with crossing signs and positive magnitudes."""

    __slots__ = ("measure",)

    def __init__(self, measure: SignedAtomicMeasure):
        object.__setattr__(self, "measure", measure)

    def __setattr__(self, name, value):
        raise AttributeError("ZeroSlice is immutable")

    @property
    def points(self) -> np.ndarray:
        return self.measure.points

    @property
    def signs(self) -> np.ndarray:
        return np.sign(self.measure.weights)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.measure.weights)

    @property
    def total(self) -> float:
        return self.measure.total

    @property
    def is_empty(self) -> bool:
        return self.measure.is_empty

    def h_mass(self, cost: CostSpec) -> float:
        return h_mass_measure(self.measure, cost)

    def __repr__(self) -> str:
        return f"ZeroSlice({self.measure.n_atoms} atoms, total={self.total:.6g})"


def _sup_profile(a: np.ndarray, b: np.ndarray, x: np.ndarray):
    """Profile of t -> ||a + t(b-a) - x||_inf on [0, 1].

    The function is convex piecewise linear; its minimum over [0, 1] is
    attained at a breakpoint.  Returns (d0, d1, dmin).
    """
    g0 = a - x
    v = b - a
    d = a.size
    cands = [0.0, 1.0]
    for i in range(d):
        if v[i] != 0.0:
            t = -g0[i] / v[i]
            if 0.0 < t < 1.0:
                cands.append(t)
        for j in range(i + 1, d):
            dv = v[i] - v[j]
            if dv != 0.0:
                t = -(g0[i] - g0[j]) / dv
                if 0.0 < t < 1.0:
                    cands.append(t)
            sv = v[i] + v[j]
            if sv != 0.0:
                t = -(g0[i] + g0[j]) / sv
                if 0.0 < t < 1.0:
                    cands.append(t)
    ts = np.array(cands)
    vals = np.max(np.abs(g0[None, :] + ts[:, None] * v[None, :]), axis=1)
    return float(vals[0]), float(vals[1]), float(np.min(vals))


def sup_profiles(T: PolyhedralCurrent, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arrays (d0, d1, dmin) of the sup-distance profile of every edge."""
    x = as_point(x)
    n = T.n_edges
    d0 = np.empty(n)
    d1 = np.empty(n)
    dm = np.empty(n)
    for i in range(n):
        d0[i], d1[i], dm[i] = _sup_profile(T.a[i], T.b[i], x)
    return d0, d1, dm


def slice_current(T: PolyhedralCurrent, x, r: float, tol_generic: float = 1e-9) -> ZeroSlice:
    """Slice of T by the sup-norm sphere of radius r about x.

    Crossing atoms carry weight (crossing sign) * theta, where the sign is
    +1 where the sup-distance from x increases along the edge orientation
    and -1 where it decreases.  Equals the boundary of the restriction to
    the open sup-ball minus the restricted boundary of T.

    Raises NonGenericRadius when an edge endpoint (hence also any boundary
    atom) lies within ``tol_generic`` of the sphere.
    """
    x = as_point(x)
    r = float(r)
    if T.is_empty:
        return ZeroSlice(SignedAtomicMeasure.empty(x.size))
    if T.d != x.size:
        raise ValueError("center dimension mismatch")
    for p in (T.a, T.b):
        dist = np.max(np.abs(p - x[None, :]), axis=1)
        if np.any(np.abs(dist - r) <= tol_generic):
            raise NonGenericRadius(
                f"an edge endpoint lies within {tol_generic} of the sphere of radius {r}"
            )
    pts = []
    ws = []
    val_tol = MERGE_TOL * max(1.0, r)
    for idx in range(T.n_edges):
        a = T.a[idx]
        b = T.b[idx]
        v = b - a
        found: list[float] = []
        for i in range(T.d):
            if v[i] == 0.0:
                continue
            for face in (x[i] - r, x[i] + r):
                t = (face - a[i]) / v[i]
                if not (0.0 < t < 1.0):
                    continue
                p = a + t * v
                if np.max(np.abs(p - x)) > r + val_tol:
                    continue
                if any(abs(t - u) <= 1e-12 for u in found):
                    continue
                found.append(t)
                gi = p[i] - x[i]
                sign = 1.0 if gi * v[i] > 0 else -1.0
                pts.append(p)
                ws.append(sign * T.theta[idx])
    if not pts:
        return ZeroSlice(SignedAtomicMeasure.empty(T.d))
    return ZeroSlice(SignedAtomicMeasure(np.array(pts), np.array(ws)))


def slice_mass_by_radius(T: PolyhedralCurrent, x, radii: np.ndarray) -> np.ndarray:
    """Mass of the slice at each radius, via per-edge crossing counts.

    For each edge the sup-distance profile is convex, so the number of
    sphere crossings at radius r is [dmin < r < d0] + [dmin < r < d1].
    """
    radii = np.asarray(radii, dtype=float)
    if T.is_empty:
        return np.zeros(radii.shape)
    d0, d1, dm = sup_profiles(T, x)
    r = radii[:, None]
    counts = ((dm[None, :] < r) & (r < d0[None, :])).astype(float)
    counts += ((dm[None, :] < r) & (r < d1[None, :])).astype(float)
    return counts @ np.abs(T.theta)


def slice_h_mass_by_radius(
    T: PolyhedralCurrent, x, radii: np.ndarray, cost: CostSpec
) -> np.ndarray:
    """Concave-cost energy of the slice at each radius (crossing-count form).

    Coincident crossings are counted separately; by subadditivity this upper
    bounds the energy of the canonically merged slice.
    """
    radii = np.asarray(radii, dtype=float)
    if T.is_empty:
        return np.zeros(radii.shape)
    d0, d1, dm = sup_profiles(T, x)
    r = radii[:, None]
    counts = ((dm[None, :] < r) & (r < d0[None, :])).astype(float)
    counts += ((dm[None, :] < r) & (r < d1[None, :])).astype(float)
    return counts @ cost.h(T.theta)


def good_slice_radius(
    currents: Sequence[PolyhedralCurrent],
    x,
    y,
    r0: float,
    eta0: float,
    cost: CostSpec,
    n_candidates: int = 1000,
    tol_generic: float = 1e-9,
) -> float:
    """A radius in (r0, eta0*r0), generic for every listed current, at which
    the summed slice energies about x and y stay below the pigeonhole bound
    4 * energy(T) / ((eta0 - 1) * r0) for as many of the currents as possible
    (all of them whenever some sampled radius achieves that).
    """
    if not (1.0 < eta0 < 2.0):
        raise ValueError(f"eta0 must lie in (1, 2), got {eta0}")
    if not (r0 > 0):
        raise ValueError(f"r0 must be positive, got {r0}")
    currents = list(currents)
    if not currents:
        return r0 * (1.0 + eta0) / 2.0
    x = as_point(x)
    y = as_point(y)
    lo, hi = r0, eta0 * r0
    radii = lo + (np.arange(n_candidates) + 0.5) / n_candidates * (hi - lo)
    # genericity: stay clear of every endpoint's sup-distance to either center
    endpoint_dists = []
    for T in currents:
        if T.is_empty:
            continue
        eps = T.endpoints()
        for c in (x, y):
            endpoint_dists.append(np.max(np.abs(eps - c[None, :]), axis=1))
    if endpoint_dists:
        all_d = np.concatenate(endpoint_dists)
        generic = np.min(np.abs(radii[:, None] - all_d[None, :]), axis=1) > tol_generic
    else:
        generic = np.ones(n_candidates, dtype=bool)
    if not np.any(generic):
        raise NoRadiusFound("every sampled radius is non-generic")
    ok = np.zeros(n_candidates, dtype=int)
    for T in currents:
        bound = 4.0 * h_mass(T, cost) / ((eta0 - 1.0) * r0)
        hx = slice_h_mass_by_radius(T, x, radii, cost)
        hy = slice_h_mass_by_radius(T, y, radii, cost)
        ok += (hx + hy <= bound + 1e-12).astype(int)
    ok[~generic] = -1
    best = int(np.max(ok))
    if best < 0:  # pragma: no cover - defensive
        raise NoRadiusFound("no generic radius satisfies the slice bound")
    return float(radii[int(np.argmax(ok == best))])


def slice_identity_residual(T: PolyhedralCurrent, x, r: float) -> float:
    """Total-variation gap between the slice and its defining identity,
    boundary(T restricted to the open ball) minus (boundary T) restricted.
    Useful as a self-check; zero (to rounding) at generic radii.
    """
    ball = Cube(x, 2.0 * r)
    direct = slice_current(T, x, r).measure
    via_identity = boundary(restrict_current(T, ball)) - restrict_measure(boundary(T), ball)
    return (direct - via_identity).total_variation
