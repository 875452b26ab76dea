"""Shared random-instance generators for the test suite.

All generators take an explicit numpy Generator so tests stay reproducible;
acceptance tests freeze their seeds.
"""

import numpy as np

import branchpath as bp


def random_current(rng, d=2, n_edges=None, box=1.0):
    """Segments with generic directions and signed multiplicities in [0.2, 2]."""
    n = int(n_edges if n_edges is not None else rng.integers(5, 25))
    a = rng.uniform(-box, box, (n, d))
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lens = rng.uniform(0.1, 0.9, n)
    b = a + dirs * lens[:, None]
    theta = rng.uniform(0.2, 2.0, n) * rng.choice([-1.0, 1.0], n)
    return bp.PolyhedralCurrent(a, b, theta)


def random_acyclic_flow(rng, n_vertices=8, n_paths=5, dyadic=True):
    """Superposition of forward paths over x-sorted vertices: acyclic by
    construction; dyadic weights keep the flow arithmetic exact."""
    pts = rng.uniform(-1.0, 1.0, (n_vertices, 2))
    pts = pts[np.argsort(pts[:, 0])]
    edges: dict[tuple[int, int], float] = {}
    for _ in range(n_paths):
        k = int(rng.integers(2, min(5, n_vertices) + 1))
        idx = np.sort(rng.choice(n_vertices, size=k, replace=False))
        w = float(rng.integers(1, 64)) / 64.0 if dyadic else float(rng.uniform(0.1, 1.0))
        for u, v in zip(idx[:-1], idx[1:]):
            edges[(int(u), int(v))] = edges.get((int(u), int(v)), 0.0) + w
    return bp.PolyhedralCurrent(
        np.array([pts[u] for u, _ in edges]),
        np.array([pts[v] for _, v in edges]),
        np.array(list(edges.values())),
    )


def random_positive_measure(rng, d=2, n_atoms=None, box=1.0, total=None):
    n = int(n_atoms if n_atoms is not None else rng.integers(1, 8))
    pts = rng.uniform(-box, box, (n, d))
    w = rng.uniform(0.1, 1.0, n)
    if total is not None:
        w *= total / w.sum()
    return bp.SignedAtomicMeasure(pts, w)


def connector_decay_family(seed=9, n_atoms=4, scale=0.02, levels=8):
    """Fixed family mu, nu_m with w1(mu, nu_m) -> 0: atoms perturbed by
    scale * 4^-m in random directions.  Returns (mu, {m: nu_m}, Q) with Q
    already shifted clear of every atom up to the finest level."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.15, 0.85, (n_atoms, 2))
    dirs = rng.standard_normal((levels + 1, n_atoms, 2))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    w = np.full(n_atoms, 1.0 / n_atoms)
    mu = bp.SignedAtomicMeasure(base, w)
    nus = {
        m: bp.SignedAtomicMeasure(base + scale * 4.0 ** (-m) * dirs[m], w)
        for m in range(1, levels + 1)
    }
    all_pts = np.vstack([mu.points] + [nus[m].points for m in nus])
    Q = bp.shift_grid_avoiding(bp.Cube([0.5, 0.5], 1.0), all_pts, levels)
    return mu, nus, Q


def y_instance(alpha, src_y=1.0, size=False):
    """Two half-mass sources above a unit sink at the origin."""
    mu_minus = bp.SignedAtomicMeasure.from_atoms(
        [([-1.0, src_y], 0.5), ([1.0, src_y], 0.5)]
    )
    mu_plus = bp.SignedAtomicMeasure.dirac([0.0, 0.0], 1.0)
    cost = bp.CostSpec.size() if size else bp.CostSpec.power(alpha)
    return bp.TransportInstance(mu_minus, mu_plus, cost, bp.Cube([0.0, 1.0], 8.0))
