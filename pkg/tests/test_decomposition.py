import math

import numpy as np
import pytest

import branchpath as bp
from branchpath.decomposition import combined_multiplicity_at

from conftest import random_acyclic_flow

HALF = bp.CostSpec.power(0.5)


def unit_loop():
    return bp.PolyhedralCurrent.from_edges(
        [([0, 0], [1, 0], 1.0), ([1, 0], [1, 1], 1.0), ([1, 1], [0, 1], 1.0), ([0, 1], [0, 0], 1.0)]
    )


def test_remove_cycles_pure_loop():
    assert bp.remove_cycles(unit_loop()).is_empty


def test_remove_cycles_leaves_acyclic_alone():
    seg = bp.PolyhedralCurrent.segment([0, 0], [1, 0], 1.0)
    assert bp.remove_cycles(seg).same_current(seg, 0.0)


def test_remove_cycles_superposition():
    seg = bp.PolyhedralCurrent.segment([5, 5], [6, 5], 1.0)
    mixed = seg + unit_loop()
    cleaned = bp.remove_cycles(mixed)
    assert cleaned.same_current(seg, 1e-12)


def test_remove_cycles_preserves_boundary_and_mass():
    rng = np.random.default_rng(12)
    for _ in range(30):
        T = random_acyclic_flow(rng) + unit_loop().scale(float(rng.integers(1, 8)) / 8.0)
        out = bp.remove_cycles(T)
        assert bp.boundary(out).same_atoms(bp.boundary(T), 1e-12)
        assert bp.mass(out) <= bp.mass(T) + 1e-12
        again = bp.remove_cycles(out)
        assert again.same_current(out, 1e-12)


def test_remove_cycles_figure_eight():
    fig8 = bp.PolyhedralCurrent.from_edges(
        [
            ([0, 0], [1, 0], 1.0),
            ([1, 0], [1, 1], 1.0),
            ([1, 1], [0, 0], 1.0),
            ([0, 0], [-1, 0], 2.0),
            ([-1, 0], [-1, -1], 2.0),
            ([-1, -1], [0, 0], 2.0),
        ]
    )
    assert bp.remove_cycles(fig8).is_empty


def test_remove_cycles_shared_edge():
    through = bp.PolyhedralCurrent.from_edges([([0, 0], [1, 0], 1.0), ([1, 0], [2, 0], 1.0)])
    cyc = bp.PolyhedralCurrent.from_edges(
        [([0, 0], [1, 0], 0.5), ([1, 0], [0.5, 1], 0.5), ([0.5, 1], [0, 0], 0.5)]
    )
    cleaned = bp.remove_cycles(through + cyc)
    assert cleaned.same_current(through, 1e-12)


def test_decomposition_3d():
    rng = np.random.default_rng(77)
    pts = rng.uniform(-1, 1, (7, 3))
    pts = pts[np.argsort(pts[:, 0])]
    edges = {}
    for _ in range(4):
        idx = np.sort(rng.choice(7, size=3, replace=False))
        w = float(rng.integers(1, 32)) / 32.0
        for u, v in zip(idx[:-1], idx[1:]):
            edges[(int(u), int(v))] = edges.get((int(u), int(v)), 0.0) + w
    T = bp.PolyhedralCurrent(
        np.array([pts[u] for u, _ in edges]),
        np.array([pts[v] for _, v in edges]),
        np.array(list(edges.values())),
    )
    D = bp.good_decomposition(T)
    assert bp.current_of(D).same_current(T, 0.0)


def test_good_decomposition_chain():
    chain = bp.PolyhedralCurrent.from_edges([([0, 0], [1, 0], 1.0), ([1, 0], [2, 0], 1.0)])
    D = bp.good_decomposition(chain)
    assert len(D) == 1
    assert D.paths[0].weight == 1.0
    assert D.paths[0].length == pytest.approx(2.0)
    assert bp.mass(chain) == pytest.approx(sum(p.weight * p.length for p in D))
    assert bp.boundary(chain).total_variation == pytest.approx(2.0 * D.total_weight)


def test_good_decomposition_y():
    Y = bp.PolyhedralCurrent.from_edges(
        [([0, 0], [1, 0], 1.0), ([1, 0], [2, 1], 0.5), ([1, 0], [2, -1], 0.5)]
    )
    D = bp.good_decomposition(Y)
    assert len(D) == 2
    assert all(p.weight == 0.5 for p in D)
    assert sum(p.weight * p.length for p in D) == pytest.approx(1.0 + math.sqrt(2.0))


def test_good_decomposition_rejects_loop():
    with pytest.raises(bp.NotAcyclic):
        bp.good_decomposition(unit_loop())


def test_current_of_examples():
    one = bp.PathDecomposition([bp.WeightedPath([[0.0, 0.0], [1.0, 0.0]], 1.0)])
    assert bp.current_of(one).same_current(
        bp.PolyhedralCurrent.segment([0, 0], [1, 0], 1.0), 0.0
    )
    opposite = bp.PathDecomposition(
        [
            bp.WeightedPath([[0.0, 0.0], [1.0, 0.0]], 1.0),
            bp.WeightedPath([[1.0, 0.0], [0.0, 0.0]], 1.0),
        ]
    )
    assert bp.current_of(opposite).is_empty


def test_round_trip_random_flows():
    rng = np.random.default_rng(7)
    for _ in range(60):
        T = random_acyclic_flow(rng)
        D = bp.good_decomposition(T)
        assert bp.current_of(D).same_current(T, 0.0)


def test_pointwise_multiplicity_exact():
    rng = np.random.default_rng(9)
    for _ in range(30):
        T = random_acyclic_flow(rng)
        D = bp.good_decomposition(T)
        for i in range(T.n_edges):
            a, b = T.a[i], T.b[i]
            covering = 0.0
            for p in D:
                for u, v in zip(p.vertices[:-1], p.vertices[1:]):
                    forward = np.array_equal(u, a) and np.array_equal(v, b)
                    reverse = np.array_equal(u, b) and np.array_equal(v, a)
                    if forward or reverse:
                        covering += p.weight
            assert covering == abs(T.theta[i])


def test_weighted_path_validation():
    with pytest.raises(ValueError):
        bp.WeightedPath([[0.0, 0.0]], 1.0)
    with pytest.raises(ValueError):
        bp.WeightedPath([[0.0, 0.0], [0.0, 0.0]], 1.0)
    with pytest.raises(ValueError):
        bp.WeightedPath([[0.0, 0.0], [1.0, 0.0]], 0.0)
    with pytest.raises(ValueError):
        bp.WeightedPath([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]], 1.0)


def grid_for(paths_currents, kmax):
    pts = np.vstack([c.endpoints() for c in paths_currents])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    base = bp.Cube((lo + hi) / 2.0, max(float(np.max(hi - lo)), 1.0))
    root = bp.shift_grid_avoiding(base, pts, kmax)
    return root


def test_partition_by_cells_basic():
    T = bp.PolyhedralCurrent.from_edges([([0.1, 0.1], [0.2, 0.2], 1.0)])
    D = bp.good_decomposition(T)
    root = grid_for([T], 2)
    part0 = bp.partition_by_cells(D, bp.subdivide(root, 0))
    assert part0.keys == [(0, 0)]
    assert part0.sum_of_parts().same_current(T, 1e-12)

    rng = np.random.default_rng(21)
    T2 = random_acyclic_flow(rng)
    D2 = bp.good_decomposition(T2)
    root2 = grid_for([T2], 3)
    for k in (1, 2, 3):
        part = bp.partition_by_cells(D2, bp.subdivide(root2, k))
        assert part.sum_of_parts().same_current(T2, 1e-9)
        grid = part.grid
        for (i, j), current in part.parts.items():
            pos, neg = bp.jordan(bp.boundary(current))
            for p in neg.points:
                assert grid.cell_index(p) == i
            for p in pos.points:
                assert grid.cell_index(p) == j
            # each part inherits the defining identities from its own paths
            sub = part.decompositions[(i, j)]
            weighted = sum(p.weight * p.length for p in sub)
            assert abs(bp.mass(current) - weighted) <= 1e-9 * max(1.0, weighted)


def test_partition_rejects_skeleton_endpoint():
    T = bp.PolyhedralCurrent.from_edges([([0.0, 0.0], [1.0, 1.0], 1.0)])
    D = bp.good_decomposition(T)
    grid = bp.subdivide(bp.Cube([0.0, 0.0], 4.0), 1)  # skeleton passes through 0
    with pytest.raises(bp.EndpointOnSkeleton):
        bp.partition_by_cells(D, grid)


def test_combined_multiplicity_single_part():
    T = bp.PolyhedralCurrent.from_edges([([0.1, 0.1], [0.9, 0.4], 0.75)])
    D = bp.good_decomposition(T)
    part = bp.partition_by_cells(D, bp.subdivide(grid_for([T], 1), 0))
    assert bp.combined_multiplicity_mass(part, HALF) == pytest.approx(
        bp.h_mass(T, HALF), rel=1e-12
    )


def test_combined_multiplicity_detects_cancellation():
    # two parts carrying +1 and -1 on the same unit edge: the summed current
    # vanishes but the combined multiplicity sees total flow 2
    grid = bp.subdivide(bp.Cube([0.5, 0.5], 8.0), 1)
    fwd = bp.PathDecomposition([bp.WeightedPath([[0.3, 0.3], [1.3, 0.3]], 1.0)])
    rev = bp.PathDecomposition([bp.WeightedPath([[1.3, 0.3], [0.3, 0.3]], 1.0)])
    parts = {
        (0, 3): bp.current_of(fwd),
        (3, 0): bp.current_of(rev),
    }
    partition = bp.CellPartition(grid, parts, {(0, 3): fwd, (3, 0): rev})
    assert (bp.current_of(fwd) + bp.current_of(rev)).is_empty
    assert bp.combined_multiplicity_mass(partition, HALF) == pytest.approx(
        math.sqrt(2.0), rel=1e-12
    )


def test_combined_multiplicity_partial_overlap():
    # collinear edges of two parts overlapping on half their span
    grid = bp.subdivide(bp.Cube([0.5, 0.5], 8.0), 1)
    p1 = bp.PathDecomposition([bp.WeightedPath([[0.0, 0.3], [1.0, 0.3]], 1.0)])
    p2 = bp.PathDecomposition([bp.WeightedPath([[0.5, 0.3], [1.5, 0.3]], 0.5)])
    partition = bp.CellPartition(
        grid,
        {(0, 1): bp.current_of(p1), (1, 2): bp.current_of(p2)},
        {(0, 1): p1, (1, 2): p2},
    )
    expected = 0.5 * 1.0 + 0.5 * math.sqrt(1.5) + 0.5 * math.sqrt(0.5)
    assert bp.combined_multiplicity_mass(partition, HALF) == pytest.approx(
        expected, rel=1e-12
    )
    assert combined_multiplicity_at(partition, [0.25, 0.3]) == pytest.approx(1.0)
    assert combined_multiplicity_at(partition, [0.75, 0.3]) == pytest.approx(1.5)
    assert combined_multiplicity_at(partition, [1.25, 0.3]) == pytest.approx(0.5)


def test_combined_multiplicity_refinement_monotone():
    rng = np.random.default_rng(31)
    for _ in range(10):
        T = random_acyclic_flow(rng, n_vertices=6, n_paths=4)
        D = bp.good_decomposition(T)
        root = grid_for([T], 4)
        parts = {k: bp.partition_by_cells(D, bp.subdivide(root, k)) for k in (1, 2, 3)}
        # edge-wise: sample midpoints of the original edges
        samples = 0.5 * (T.a + T.b)
        for x in samples:
            values = [combined_multiplicity_at(parts[k], x) for k in (1, 2, 3)]
            assert values[0] <= values[1] + 1e-12
            assert values[1] <= values[2] + 1e-12


def test_combined_multiplicity_dominates_h_mass():
    rng = np.random.default_rng(33)
    for _ in range(10):
        T = random_acyclic_flow(rng)
        D = bp.good_decomposition(T)
        root = grid_for([T], 2)
        part = bp.partition_by_cells(D, bp.subdivide(root, 2))
        combined = bp.combined_multiplicity_mass(part, HALF)
        assert combined >= bp.h_mass(part.sum_of_parts(), HALF) - 1e-9


def test_decomposition_json_roundtrip():
    D = bp.PathDecomposition(
        [bp.WeightedPath([[0.0, 0.0], [1.0, 0.5], [2.0, 0.0]], 0.75)]
    )
    again = bp.PathDecomposition.from_json(D.to_json())
    assert bp.current_of(again).same_current(bp.current_of(D), 0.0)
