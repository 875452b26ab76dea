"""Flat-norm evaluation for planar chains on a triangulated lattice complex.

Currents are rasterized onto lattice edges; the flat norm of a chain is the
linear-program optimum of mass(R) + mass(S) over decompositions
chain = R + dS, with R an edge chain and S a triangle chain.  Computed on a
fixed complex, this upper-bounds the unrestricted flat norm, which is what
the convergence certificates need.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .geometry import Cube
from .currents import PolyhedralCurrent


class SnapError(ValueError):
    """A current vertex is not on the lattice; pre-snap the instance."""


class TriComplex:
    """Right-triangle mesh on a square lattice over a planar domain cube.

    Each lattice square is split by its main diagonal (lower-left to
    upper-right) into two triangles with consistent orientation.
    """

    __slots__ = (
        "domain",
        "n",
        "h",
        "vertices",
        "edges",
        "edge_lengths",
        "triangles",
        "areas",
        "boundary_matrix",
        "_edge_id",
    )

    def __init__(self, domain: Cube, step: float):
        if domain.d != 2:
            raise ValueError("triangulated complexes are built in dimension 2 only")
        n = int(round(domain.edge / step))
        if n < 1 or abs(n * step - domain.edge) > 1e-9 * domain.edge:
            raise ValueError(f"step {step} does not evenly divide the domain edge {domain.edge}")
        h = domain.edge / n
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "h", h)

        lo = domain.lo
        m = n + 1
        ix, iy = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        verts = np.stack([lo[0] + ix.ravel() * h, lo[1] + iy.ravel() * h], axis=-1)
        object.__setattr__(self, "vertices", verts)

        def vid(i, j):
            return i * m + j

        edges = []
        edge_id: dict[tuple[int, int], int] = {}

        def add_edge(v0, v1):
            edge_id[(v0, v1)] = len(edges)
            edges.append((v0, v1))

        for i in range(n):
            for j in range(m):
                add_edge(vid(i, j), vid(i + 1, j))  # +x
        for i in range(m):
            for j in range(n):
                add_edge(vid(i, j), vid(i, j + 1))  # +y
        for i in range(n):
            for j in range(n):
                add_edge(vid(i, j), vid(i + 1, j + 1))  # main diagonal

        edges_arr = np.array(edges, dtype=int)
        lengths = np.linalg.norm(verts[edges_arr[:, 1]] - verts[edges_arr[:, 0]], axis=1)
        object.__setattr__(self, "edges", edges_arr)
        object.__setattr__(self, "edge_lengths", lengths)
        object.__setattr__(self, "_edge_id", edge_id)

        tris = []
        rows, cols, vals = [], [], []

        def oriented(v0, v1):
            if (v0, v1) in edge_id:
                return edge_id[(v0, v1)], 1.0
            return edge_id[(v1, v0)], -1.0

        for i in range(n):
            for j in range(n):
                v00, v10 = vid(i, j), vid(i + 1, j)
                v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
                for tri in ((v00, v10, v11), (v00, v11, v01)):
                    t_id = len(tris)
                    tris.append(tri)
                    for k in range(3):
                        e, s = oriented(tri[k], tri[(k + 1) % 3])
                        rows.append(e)
                        cols.append(t_id)
                        vals.append(s)
        tris_arr = np.array(tris, dtype=int)
        object.__setattr__(self, "triangles", tris_arr)
        object.__setattr__(self, "areas", np.full(tris_arr.shape[0], h * h / 2.0))
        B = sparse.csc_matrix(
            (vals, (rows, cols)), shape=(edges_arr.shape[0], tris_arr.shape[0])
        )
        object.__setattr__(self, "boundary_matrix", B)

    def __setattr__(self, name, value):
        raise AttributeError("TriComplex is immutable")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def lattice_coords(self, p, tol_rel: float = 1e-6):
        """Integer lattice coordinates of p; SnapError if off-lattice or outside."""
        p = np.asarray(p, dtype=float)
        rel = (p - self.domain.lo) / self.h
        ij = np.round(rel)
        if np.max(np.abs(rel - ij)) > tol_rel:
            raise SnapError(f"point {p.tolist()} is not on the lattice (step {self.h})")
        if np.any(ij < -0.5) or np.any(ij > self.n + 0.5):
            raise SnapError(f"point {p.tolist()} is outside the complex domain")
        return int(ij[0]), int(ij[1])

    def vertex_id(self, i: int, j: int) -> int:
        return i * (self.n + 1) + j

    def chain_boundary(self, chain: np.ndarray) -> np.ndarray:
        """Vertex-weight vector of the boundary of an edge chain."""
        out = np.zeros(self.n_vertices)
        np.add.at(out, self.edges[:, 1], chain)
        np.add.at(out, self.edges[:, 0], -chain)
        return out


def _lattice_steps(p0: tuple[int, int], p1: tuple[int, int]):
    """Unit lattice steps from p0 to p1 hugging the straight line.

    Pure main-diagonal displacements use diagonal edges exactly;
    everything else walks a monotone staircase of axis steps ordered by
    where the ideal line crosses the lattice lines.
    """
    (x0, y0), (x1, y1) = p0, p1
    dx, dy = x1 - x0, y1 - y0
    if dx == 0 and dy == 0:
        return []
    steps = []
    if dx == dy:
        s = 1 if dx > 0 else -1
        return [("d", s)] * abs(dx)
    if dx == 0:
        s = 1 if dy > 0 else -1
        return [("y", s)] * abs(dy)
    if dy == 0:
        s = 1 if dx > 0 else -1
        return [("x", s)] * abs(dx)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    tx = [(k / abs(dx), "x") for k in range(1, abs(dx) + 1)]
    ty = [(k / abs(dy), "y") for k in range(1, abs(dy) + 1)]
    merged = sorted(tx + ty)  # ties: x before y, deterministic
    for _, axis in merged:
        steps.append((axis, sx if axis == "x" else sy))
    return steps


def rasterize(T: PolyhedralCurrent, complex_: TriComplex) -> np.ndarray:
    """Edge-coefficient chain of T on the complex.

    Every segment endpoint must lie on a lattice vertex (within h * 1e-6);
    the chain's boundary equals boundary(T) on the lattice vertices.
    """
    chain = np.zeros(complex_.n_edges)
    if T.is_empty:
        return chain
    if T.d != 2:
        raise ValueError("rasterization is planar")
    eid = complex_._edge_id
    for idx in range(T.n_edges):
        i, j = complex_.lattice_coords(T.a[idx])
        i1, j1 = complex_.lattice_coords(T.b[idx])
        theta = T.theta[idx]
        x, y = i, j
        for axis, s in _lattice_steps((i, j), (i1, j1)):
            if axis == "x":
                nx, ny = x + s, y
            elif axis == "y":
                nx, ny = x, y + s
            else:
                nx, ny = x + s, y + s
            v0 = complex_.vertex_id(x, y)
            v1 = complex_.vertex_id(nx, ny)
            if (v0, v1) in eid:
                chain[eid[(v0, v1)]] += theta
            else:
                chain[eid[(v1, v0)]] -= theta
            x, y = nx, ny
    return chain


class FlatNormResult:
    """Optimal value with its decomposition certificate chain = R + dS."""

    __slots__ = ("value", "r_coeffs", "s_coeffs")

    def __init__(self, value: float, r_coeffs: np.ndarray, s_coeffs: np.ndarray):
        object.__setattr__(self, "value", float(value))
        object.__setattr__(self, "r_coeffs", r_coeffs)
        object.__setattr__(self, "s_coeffs", s_coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("FlatNormResult is immutable")

    def residual(self, chain: np.ndarray, complex_: TriComplex) -> float:
        """Max-norm violation of the certificate identity R + dS = chain."""
        recon = self.r_coeffs + complex_.boundary_matrix @ self.s_coeffs
        return float(np.max(np.abs(recon - chain))) if chain.size else 0.0

    def to_json(self, threshold: float = 1e-12) -> dict:
        """Value plus the nonzero certificate coefficients."""
        r_idx = np.nonzero(np.abs(self.r_coeffs) > threshold)[0]
        s_idx = np.nonzero(np.abs(self.s_coeffs) > threshold)[0]
        return {
            "value": self.value,
            "r": [{"edge": int(i), "coeff": float(self.r_coeffs[i])} for i in r_idx],
            "s": [{"triangle": int(i), "coeff": float(self.s_coeffs[i])} for i in s_idx],
        }

    def __repr__(self) -> str:
        return f"FlatNormResult(value={self.value:.9g})"


def flat_norm(chain: np.ndarray, complex_: TriComplex) -> FlatNormResult:
    """Minimize mass(R) + mass(S) over chain = R + dS with real coefficients.

    Absolute values are split into nonnegative parts and the problem solved
    as a linear program; S = 0 is always feasible, so the optimum is at most
    the chain's mass.
    """
    chain = np.asarray(chain, dtype=float)
    E, Tn = complex_.n_edges, complex_.n_triangles
    if chain.shape != (E,):
        raise ValueError("chain is not supported on this complex")
    if not np.any(chain):
        return FlatNormResult(0.0, np.zeros(E), np.zeros(Tn))
    c = np.concatenate(
        [complex_.edge_lengths, complex_.edge_lengths, complex_.areas, complex_.areas]
    )
    eye = sparse.identity(E, format="csc")
    B = complex_.boundary_matrix
    A = sparse.hstack([eye, -eye, B, -B], format="csc")
    res = linprog(c, A_eq=A, b_eq=chain, bounds=(0, None), method="highs")
    if not res.success:  # pragma: no cover - defensive
        raise RuntimeError(f"flat norm LP failed: {res.message}")
    x = res.x
    r = x[:E] - x[E : 2 * E]
    s = x[2 * E : 2 * E + Tn] - x[2 * E + Tn :]
    return FlatNormResult(res.fun, r, s)


def snap_current(T: PolyhedralCurrent, complex_: TriComplex) -> PolyhedralCurrent:
    """Round every segment endpoint to the nearest lattice vertex.

    The explicit pre-snap for currents whose vertices are off-lattice
    (optimized branch points, for instance); degenerate snapped segments
    are dropped by canonicalization.  Points outside the complex domain
    have no nearby vertex and raise SnapError.
    """
    if T.is_empty:
        return T
    lo = complex_.domain.lo
    h = complex_.h

    def snap(pts):
        rel = (pts - lo[None, :]) / h
        if np.any(rel < -0.5) or np.any(rel > complex_.n + 0.5):
            raise SnapError("current extends outside the complex domain")
        return lo[None, :] + np.clip(np.round(rel), 0, complex_.n) * h

    return PolyhedralCurrent(snap(T.a), snap(T.b), T.theta)


def flat_distance(
    A: PolyhedralCurrent, B: PolyhedralCurrent, complex_: TriComplex
) -> float:
    """Flat norm of the difference A - B after rasterization."""
    return flat_norm(rasterize(A - B, complex_), complex_).value
