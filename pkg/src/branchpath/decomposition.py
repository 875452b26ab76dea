"""Cycle removal, decomposition of acyclic flows into weighted simple paths,
partition of a decomposition by grid start/end cells, and the
cancellation-aware combined multiplicity energy.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .geometry import Grid
from .measures import MERGE_TOL, CostSpec, merge_points
from .currents import PolyhedralCurrent


class NotAcyclic(ValueError):
    """The current contains a directed cycle; remove cycles first."""


class EndpointOnSkeleton(ValueError):
    """A path endpoint lies on the grid skeleton; shift the grid first."""


class WeightedPath:
    """A simple polyline carrying a positive weight."""

    __slots__ = ("vertices", "weight")

    def __init__(self, vertices, weight: float):
        vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
        weight = float(weight)
        if vertices.shape[0] < 2:
            raise ValueError("a path needs at least two vertices")
        if not np.all(np.isfinite(vertices)):
            raise ValueError("non-finite path vertices")
        if weight <= 0:
            raise ValueError(f"path weight must be positive, got {weight}")
        steps = np.max(np.abs(np.diff(vertices, axis=0)), axis=1)
        if np.any(steps <= MERGE_TOL):
            raise ValueError("consecutive path vertices must be distinct")
        # simple at vertex level: no revisits
        _, labels = merge_points(vertices)
        if len(set(labels.tolist())) != vertices.shape[0]:
            raise ValueError("path revisits a vertex")
        vertices = vertices.copy()
        vertices.flags.writeable = False
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "weight", weight)

    def __setattr__(self, name, value):
        raise AttributeError("WeightedPath is immutable")

    @property
    def start(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def end(self) -> np.ndarray:
        return self.vertices[-1]

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)))

    def __repr__(self) -> str:
        return f"WeightedPath({self.vertices.shape[0]} vertices, w={self.weight:.6g})"


class PathDecomposition:
    """A finite weighted family of simple paths."""

    __slots__ = ("paths",)

    def __init__(self, paths: Iterable[WeightedPath]):
        object.__setattr__(self, "paths", tuple(paths))

    def __setattr__(self, name, value):
        raise AttributeError("PathDecomposition is immutable")

    @property
    def total_weight(self) -> float:
        return float(sum(p.weight for p in self.paths))

    @property
    def is_empty(self) -> bool:
        return len(self.paths) == 0

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def to_json(self) -> dict:
        return {
            "paths": [
                {"vertices": p.vertices.tolist(), "w": p.weight} for p in self.paths
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PathDecomposition":
        return cls(WeightedPath(p["vertices"], p["w"]) for p in obj.get("paths", []))


def current_of(decomposition: PathDecomposition) -> PolyhedralCurrent:
    """The induced current: the weighted sum of the path segments, canonical."""
    if decomposition.is_empty:
        return PolyhedralCurrent.empty()
    a_list, b_list, t_list = [], [], []
    for p in decomposition.paths:
        a_list.append(p.vertices[:-1])
        b_list.append(p.vertices[1:])
        t_list.append(np.full(p.vertices.shape[0] - 1, p.weight))
    return PolyhedralCurrent(
        np.vstack(a_list), np.vstack(b_list), np.concatenate(t_list)
    )


def _flow_graph(T: PolyhedralCurrent):
    """Quantize endpoints and orient every edge along positive flow.

    Returns (vertex_positions, tails, heads, capacities); vertex indices are
    lexicographic over positions, so index order is deterministic.
    """
    pts = T.endpoints()
    reps, labels = merge_points(pts)
    n = T.n_edges
    tails = labels[:n].copy()
    heads = labels[n:].copy()
    caps = T.theta.copy()
    neg = caps < 0
    tails[neg], heads[neg] = heads[neg].copy(), tails[neg].copy()
    caps = np.abs(caps)
    return reps, tails, heads, caps


def _find_cycle(n_vertices: int, tails, heads, caps, active_tol: float):
    """Edge indices of one directed cycle in the positive-capacity graph, or None."""
    out_edges: list[list[int]] = [[] for _ in range(n_vertices)]
    for e, (u, cap) in enumerate(zip(tails, caps)):
        if cap > active_tol:
            out_edges[u].append(e)
    color = np.zeros(n_vertices, dtype=np.int8)  # 0 white, 1 gray, 2 black
    parent_edge = {}
    for start in range(n_vertices):
        if color[start] != 0:
            continue
        stack = [(start, iter(out_edges[start]))]
        color[start] = 1
        while stack:
            v, it = stack[-1]
            advanced = False
            for e in it:
                w = heads[e]
                if color[w] == 1:
                    # gray-to-gray edge closes a cycle along the stack
                    cycle = [e]
                    cur = v
                    while cur != w:
                        pe = parent_edge[cur]
                        cycle.append(pe)
                        cur = tails[pe]
                    cycle.reverse()
                    return cycle
                if color[w] == 0:
                    color[w] = 1
                    parent_edge[w] = e
                    stack.append((w, iter(out_edges[w])))
                    advanced = True
                    break
            if not advanced:
                color[v] = 2
                stack.pop()
    return None


def remove_cycles(T: PolyhedralCurrent) -> PolyhedralCurrent:
    """Cancel directed cycles in the positive-flow graph of T.

    Preserves the boundary, never increases mass, and is idempotent.
    """
    if T.is_empty:
        return T
    reps, tails, heads, caps = _flow_graph(T)
    active_tol = MERGE_TOL * max(1.0, float(np.max(caps)))
    nv = reps.shape[0]
    while True:
        cycle = _find_cycle(nv, tails, heads, caps, active_tol)
        if cycle is None:
            break
        w = float(np.min(caps[cycle]))
        caps[cycle] -= w
    keep = caps > active_tol
    if not np.any(keep):
        return PolyhedralCurrent.empty(T.d)
    return PolyhedralCurrent(reps[tails[keep]], reps[heads[keep]], caps[keep])


def good_decomposition(T: PolyhedralCurrent) -> PathDecomposition:
    """Decompose an acyclic flow into weighted simple source-to-sink paths.

    Deterministic extraction: repeatedly start from the source vertex of
    smallest index and follow the outgoing edge of maximal residual
    multiplicity (ties broken by edge index); the path weight is the minimal
    residual along the walk, capped by the source supply and sink demand.

    The output satisfies the two mass identities of a good decomposition
    (total mass equals the weighted path length, boundary mass equals twice
    the total weight) and covers each edge multiplicity exactly.

    Raises NotAcyclic when T has a directed cycle.
    """
    if T.is_empty:
        return PathDecomposition([])
    reps, tails, heads, caps = _flow_graph(T)
    nv = reps.shape[0]
    active_tol = MERGE_TOL * max(1.0, float(np.max(caps)))
    if _find_cycle(nv, tails, heads, caps, active_tol) is not None:
        raise NotAcyclic("the current has a directed cycle; run remove_cycles first")

    net = np.zeros(nv)
    np.add.at(net, tails, caps)
    np.add.at(net, heads, -caps)
    supply = np.where(net > 0, net, 0.0)
    demand = np.where(net < 0, -net, 0.0)

    out_edges: list[list[int]] = [[] for _ in range(nv)]
    for e, u in enumerate(tails):
        out_edges[u].append(e)

    residual = caps.copy()
    paths: list[WeightedPath] = []
    max_iter = 4 * (T.n_edges + nv) + 16
    for _ in range(max_iter):
        sources = np.nonzero(supply > active_tol)[0]
        if sources.size == 0:
            break
        s = int(sources[0])
        walk_vertices = [s]
        walk_edges: list[int] = []
        v = s
        while True:
            candidates = [e for e in out_edges[v] if residual[e] > active_tol]
            if not candidates:
                break
            e = max(candidates, key=lambda e: (residual[e], -e))
            walk_edges.append(e)
            v = int(heads[e])
            walk_vertices.append(v)
        t = v
        w = min(
            float(supply[s]),
            float(np.min(residual[walk_edges])) if walk_edges else float(supply[s]),
            float(demand[t]) if demand[t] > 0 else float(supply[s]),
        )
        if w <= active_tol or not walk_edges:
            # float dust: clear and move on
            supply[s] = 0.0
            continue
        supply[s] -= w
        demand[t] -= w
        residual[walk_edges] -= w
        paths.append(WeightedPath(reps[walk_vertices], w))
    if np.any(residual > active_tol):  # pragma: no cover - defensive
        raise RuntimeError("path extraction left residual flow behind")
    return PathDecomposition(paths)


class CellPartition:
    """Currents of a decomposition grouped by (start cell, end cell) of a grid."""

    __slots__ = ("grid", "parts", "decompositions")

    def __init__(self, grid: Grid, parts: dict, decompositions: dict):
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "parts", dict(parts))
        object.__setattr__(self, "decompositions", dict(decompositions))

    def __setattr__(self, name, value):
        raise AttributeError("CellPartition is immutable")

    @property
    def keys(self) -> list[tuple[int, int]]:
        return sorted(self.parts.keys())

    def sum_of_parts(self) -> PolyhedralCurrent:
        total = PolyhedralCurrent.empty()
        for key in self.keys:
            total = total + self.parts[key]
        return total


def partition_by_cells(decomposition: PathDecomposition, grid: Grid) -> CellPartition:
    """Group the paths by the grid cells of their start and end points.

    Raises EndpointOnSkeleton when an endpoint sits on the grid skeleton
    (within the skeleton tolerance) and ValueError when an endpoint falls
    outside the grid root.
    """
    groups: dict[tuple[int, int], list[WeightedPath]] = {}
    for p in decomposition.paths:
        for endpoint in (p.start, p.end):
            if grid.root.boundary_gap(endpoint) < 0:
                raise ValueError(f"path endpoint {endpoint.tolist()} outside the grid root")
            if grid.on_skeleton(endpoint):
                raise EndpointOnSkeleton(
                    f"path endpoint {endpoint.tolist()} lies on the level-{grid.k} skeleton"
                )
        key = (grid.cell_index(p.start), grid.cell_index(p.end))
        groups.setdefault(key, []).append(p)
    decomps = {key: PathDecomposition(ps) for key, ps in groups.items()}
    parts = {key: current_of(dec) for key, dec in decomps.items()}
    return CellPartition(grid, parts, decomps)


def _refined_arrangement(partition: CellPartition, tol: float = 1e-9):
    """Split all part edges at shared subdivision points.

    Returns (lengths, theta_matrix) over sub-edge groups, where
    theta_matrix[g, p] is the signed multiplicity of part p on group g.
    """
    part_keys = partition.keys
    a_all, b_all, th_all, part_all = [], [], [], []
    for pi, key in enumerate(part_keys):
        cur = partition.parts[key]
        for i in range(cur.n_edges):
            a_all.append(cur.a[i])
            b_all.append(cur.b[i])
            th_all.append(cur.theta[i])
            part_all.append(pi)
    if not a_all:
        return np.empty(0), np.empty((0, len(part_keys)))
    a_all = np.array(a_all)
    b_all = np.array(b_all)
    th_all = np.array(th_all)
    endpoints = np.vstack([a_all, b_all])

    sub_a, sub_b, sub_t, sub_p = [], [], [], []
    for i in range(a_all.shape[0]):
        a, b = a_all[i], b_all[i]
        v = b - a
        vv = float(v @ v)
        ts = {0.0, 1.0}
        rel = endpoints - a[None, :]
        t_proj = rel @ v / vv
        perp = rel - t_proj[:, None] * v[None, :]
        on_seg = (
            (t_proj > tol)
            & (t_proj < 1.0 - tol)
            & (np.max(np.abs(perp), axis=1) <= tol * max(1.0, np.sqrt(vv)))
        )
        ts.update(float(t) for t in t_proj[on_seg])
        ts = sorted(ts)
        for t0, t1 in zip(ts[:-1], ts[1:]):
            if t1 - t0 <= tol:
                continue
            p = a if t0 == 0.0 else a + t0 * v
            q = b if t1 == 1.0 else a + t1 * v
            sub_a.append(p)
            sub_b.append(q)
            sub_t.append(th_all[i])
            sub_p.append(part_all[i])
    sub_a = np.array(sub_a)
    sub_b = np.array(sub_b)
    sub_t = np.array(sub_t)
    sub_p = np.array(sub_p, dtype=int)

    # orientation-normalize, then group identical sub-edges
    diff = sub_a - sub_b
    nz = diff != 0
    first = np.argmax(nz, axis=1)
    lead = np.take_along_axis(diff, first[:, None], axis=1).ravel()
    swap = lead > 0
    na = sub_a.copy()
    nb = sub_b.copy()
    na[swap], nb[swap] = sub_b[swap].copy(), sub_a[swap].copy()
    nt = sub_t.copy()
    nt[swap] = -nt[swap]
    reps, labels = merge_points(np.hstack([na, nb]), tol=tol)
    d = sub_a.shape[1]
    lengths = np.linalg.norm(reps[:, d:] - reps[:, :d], axis=1)
    theta_matrix = np.zeros((reps.shape[0], len(part_keys)))
    np.add.at(theta_matrix, (labels, sub_p), nt)
    return lengths, theta_matrix


def combined_multiplicity_mass(partition: CellPartition, cost: CostSpec) -> float:
    """Energy of the combined multiplicity: H applied to the l1 sum of the
    per-part multiplicities on a common refinement of all part edges.

    At least h_mass of the summed current for subadditive costs, with
    equality exactly when no inter-part cancellation occurs.
    """
    lengths, theta_matrix = _refined_arrangement(partition)
    if lengths.size == 0:
        return 0.0
    theta_bar = np.sum(np.abs(theta_matrix), axis=1)
    return float(np.sum(cost.h(theta_bar) * lengths))


def combined_multiplicity_at(partition: CellPartition, x, tol: float = 1e-9) -> float:
    """The l1 combined multiplicity at a point: sum over parts of the absolute
    summed multiplicity of part edges whose (relative) interior contains x."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for key in partition.keys:
        cur = partition.parts[key]
        part_sum = 0.0
        for i in range(cur.n_edges):
            a, b = cur.a[i], cur.b[i]
            v = b - a
            vv = float(v @ v)
            t = float((x - a) @ v) / vv
            if not (tol < t < 1.0 - tol):
                continue
            perp = (x - a) - t * v
            if np.max(np.abs(perp)) <= tol * max(1.0, np.sqrt(vv)):
                part_sum += cur.theta[i]
        total += abs(part_sum)
    return total
