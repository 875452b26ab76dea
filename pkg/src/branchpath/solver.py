"""Exact small-instance optimizer for concave-cost transport between atomic
measures: enumerate directed tree topologies over the atoms plus a bounded
number of branch nodes, optimize branch positions geometrically, and take
the best.  A lattice brute-force oracle provides an independent check.
"""

from __future__ import annotations

import heapq
import itertools
import math
from typing import Sequence

import numpy as np

from .geometry import Cube
from .measures import CostSpec, SignedAtomicMeasure
from .currents import PolyhedralCurrent, boundary, h_mass


class InstanceInvalid(ValueError):
    """The instance violates a structural precondition (mass balance, support overlap)."""


class TooManyTerminals(ValueError):
    """The instance exceeds the exact-enumeration budget."""


class BudgetExceeded(ValueError):
    """The brute-force oracle budget does not cover this instance."""


MAX_TERMINALS = 6
MAX_STEINER = 3
FLOW_TOL = 1e-12


class TransportInstance:
    """Source/target atomic measures with a cost and a bounding domain."""

    __slots__ = ("mu_minus", "mu_plus", "cost", "domain")

    def __init__(
        self,
        mu_minus: SignedAtomicMeasure,
        mu_plus: SignedAtomicMeasure,
        cost: CostSpec,
        domain: Cube,
    ):
        if mu_minus.is_empty or mu_plus.is_empty:
            raise InstanceInvalid("both marginals must carry mass")
        if not (mu_minus.is_positive and mu_plus.is_positive):
            raise InstanceInvalid("marginals must be positive measures")
        if abs(mu_minus.total - mu_plus.total) > 1e-9 * max(1.0, mu_minus.total):
            raise InstanceInvalid(
                f"marginal masses differ: {mu_minus.total} vs {mu_plus.total}"
            )
        if mu_minus.d != mu_plus.d or mu_minus.d != domain.d:
            raise InstanceInvalid("dimension mismatch between marginals and domain")
        # mutual singularity: atomic supports must be disjoint
        for p in mu_minus.points:
            gaps = np.max(np.abs(mu_plus.points - p[None, :]), axis=1)
            if np.any(gaps <= 1e-9):
                raise InstanceInvalid(f"marginal supports overlap at {p.tolist()}")
        for m in (mu_minus, mu_plus):
            for p in m.points:
                if domain.boundary_gap(p) < -1e-12 * domain.edge:
                    raise InstanceInvalid(f"atom {p.tolist()} outside the domain")
        object.__setattr__(self, "mu_minus", mu_minus)
        object.__setattr__(self, "mu_plus", mu_plus)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "domain", domain)

    def __setattr__(self, name, value):
        raise AttributeError("TransportInstance is immutable")

    @property
    def d(self) -> int:
        return self.mu_minus.d

    @property
    def n_terminals(self) -> int:
        return self.mu_minus.n_atoms + self.mu_plus.n_atoms

    def terminal_positions(self) -> np.ndarray:
        return np.vstack([self.mu_minus.points, self.mu_plus.points])

    def terminal_balances(self) -> np.ndarray:
        """Net boundary weight per terminal: -mass for sources, +mass for sinks."""
        return np.concatenate([-self.mu_minus.weights, self.mu_plus.weights])

    def to_json(self, max_steiner: int | None = None) -> dict:
        obj = {
            "d": self.d,
            "cost": self.cost.to_json(),
            "mu_minus": self.mu_minus.to_json(),
            "mu_plus": self.mu_plus.to_json(),
            "domain": self.domain.to_json(),
        }
        if max_steiner is not None:
            obj["max_steiner"] = int(max_steiner)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> tuple["TransportInstance", int]:
        inst = cls(
            SignedAtomicMeasure.from_json(obj["mu_minus"]),
            SignedAtomicMeasure.from_json(obj["mu_plus"]),
            CostSpec.from_json(obj["cost"]),
            Cube.from_json(obj["domain"]),
        )
        return inst, int(obj.get("max_steiner", 1))


class Topology:
    """A directed tree/forest over the terminals and branch nodes.

    Node ids: terminals first (sources then sinks, in atom order), branch
    nodes after.  Edges carry their conservation-determined positive flow,
    oriented tail -> head.
    """

    __slots__ = ("n_terminals", "n_steiner", "edges", "flows")

    def __init__(self, n_terminals: int, n_steiner: int, edges, flows):
        object.__setattr__(self, "n_terminals", int(n_terminals))
        object.__setattr__(self, "n_steiner", int(n_steiner))
        object.__setattr__(self, "edges", tuple((int(u), int(v)) for u, v in edges))
        object.__setattr__(self, "flows", np.asarray(flows, dtype=float))
        self.flows.flags.writeable = False

    def __setattr__(self, name, value):
        raise AttributeError("Topology is immutable")

    def key(self) -> tuple:
        """Canonical form invariant under branch-node relabeling."""
        best = None
        t = self.n_terminals
        for perm in itertools.permutations(range(self.n_steiner)):
            relabel = lambda v: v if v < t else t + perm[v - t]
            cand = tuple(sorted(tuple(sorted((relabel(u), relabel(v)))) for u, v in self.edges))
            if best is None or cand < best:
                best = cand
        return (self.n_steiner, best)

    def __repr__(self) -> str:
        return f"Topology(steiner={self.n_steiner}, edges={self.edges})"


class Solution:
    """Optimal current with its energy, topology, and optimality label."""

    __slots__ = ("current", "energy", "topology", "steiner_positions", "optimality")

    def __init__(self, current, energy, topology, steiner_positions, optimality):
        object.__setattr__(self, "current", current)
        object.__setattr__(self, "energy", float(energy))
        object.__setattr__(self, "topology", topology)
        object.__setattr__(self, "steiner_positions", steiner_positions)
        object.__setattr__(self, "optimality", optimality)

    def __setattr__(self, name, value):
        raise AttributeError("Solution is immutable")

    def __repr__(self) -> str:
        return f"Solution(energy={self.energy:.9g}, {self.optimality})"


def _set_partitions(items: list):
    """All partitions of a list into nonempty blocks (Bell-number many)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield [[first]] + part


def _distinct_permutations(seq: list):
    """Distinct permutations of a multiset, lexicographic."""
    seq = sorted(seq)
    n = len(seq)
    while True:
        yield tuple(seq)
        i = n - 2
        while i >= 0 and seq[i] >= seq[i + 1]:
            i -= 1
        if i < 0:
            return
        j = n - 1
        while seq[j] <= seq[i]:
            j -= 1
        seq[i], seq[j] = seq[j], seq[i]
        seq[i + 1 :] = reversed(seq[i + 1 :])


def _prufer_decode(seq: Sequence[int], nodes: Sequence[int]) -> list[tuple[int, int]]:
    degree = {v: 1 for v in nodes}
    for v in seq:
        degree[v] += 1
    leaves = [v for v in nodes if degree[v] == 1]
    heapq.heapify(leaves)
    edges = []
    for v in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, v))
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(leaves, v)
    # the two unpopped degree-1 nodes close the tree
    edges.append((heapq.heappop(leaves), heapq.heappop(leaves)))
    return edges


def _trees_on(terminals: list[int], steiner: list[int]):
    """All labeled trees on the given nodes in which every steiner node has
    degree >= 3 (equivalently appears >= 2 times in the Prufer sequence)."""
    nodes = sorted(terminals + steiner)
    k = len(nodes)
    if k < 2:
        return
    if k == 2:
        if steiner:
            return
        yield [(nodes[0], nodes[1])]
        return
    length = k - 2
    s = len(steiner)
    if 2 * s > length:
        return
    remaining = length - 2 * s
    # distribute occurrence counts: each steiner >= 2, terminals >= 0
    term = sorted(terminals)
    for extra in _compositions(remaining, len(term) + s):
        counts = {}
        for i, v in enumerate(term):
            counts[v] = extra[i]
        for i, v in enumerate(sorted(steiner)):
            counts[v] = 2 + extra[len(term) + i]
        multiset = [v for v, c in counts.items() for _ in range(c)]
        for seq in _distinct_permutations(multiset):
            yield _prufer_decode(seq, nodes)


def _compositions(total: int, parts: int):
    """All tuples of `parts` nonnegative integers summing to `total`."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def _tree_flows(edges: list[tuple[int, int]], balances: dict[int, float]):
    """Orient each forest edge along its conservation-forced flow.

    Returns (oriented_edges, flows) with all flows positive, or None when
    some edge would carry zero flow.  Every connected component is rooted
    and traversed.
    """
    if not edges:
        return [], np.empty(0)
    adj: dict[int, list[tuple[int, int]]] = {}
    for e_idx, (u, v) in enumerate(edges):
        adj.setdefault(u, []).append((v, e_idx))
        adj.setdefault(v, []).append((u, e_idx))
    order = []
    parent: dict[int, tuple[int, int] | None] = {}
    seen: set[int] = set()
    for root in sorted(adj.keys()):
        if root in seen:
            continue
        parent[root] = None
        seen.add(root)
        stack = [root]
        while stack:
            v = stack.pop()
            order.append(v)
            for w, e_idx in adj[v]:
                if w not in seen:
                    seen.add(w)
                    parent[w] = (v, e_idx)
                    stack.append(w)
    subtree = {v: balances.get(v, 0.0) for v in seen}
    for v in reversed(order):
        if parent[v] is not None:
            subtree[parent[v][0]] += subtree[v]
    scale = max(1.0, max(abs(b) for b in balances.values()) if balances else 1.0)
    oriented = []
    flows = []
    for v in order:
        if parent[v] is None:
            continue
        u, _ = parent[v]
        f = subtree[v]  # net demand of the subtree below v
        if abs(f) <= FLOW_TOL * scale:
            return None
        if f > 0:
            oriented.append((u, v))
            flows.append(f)
        else:
            oriented.append((v, u))
            flows.append(-f)
    return oriented, np.array(flows)


def enumerate_topologies(instance: TransportInstance, max_steiner: int) -> list[Topology]:
    """All combinatorially distinct directed forests over the terminals with
    up to `max_steiner` branch nodes, flows solved by conservation; duplicates
    under branch-node relabeling removed.  Forest components must balance.
    """
    t = instance.n_terminals
    if t > MAX_TERMINALS:
        raise TooManyTerminals(f"{t} terminals exceed the exact budget of {MAX_TERMINALS}")
    max_steiner = int(max_steiner)
    if max_steiner < 0 or max_steiner > MAX_STEINER:
        raise ValueError(f"max_steiner must be in [0, {MAX_STEINER}]")
    balances = instance.terminal_balances()
    scale = float(np.max(np.abs(balances)))
    bal = {i: float(balances[i]) for i in range(t)}

    found: dict[tuple, Topology] = {}
    for s in range(max_steiner + 1):
        for partition in _set_partitions(list(range(t))):
            if any(abs(sum(bal[v] for v in block)) > 1e-9 * scale for block in partition):
                continue
            n_blocks = len(partition)
            for alloc in _compositions(s, n_blocks):
                block_tree_lists = []
                next_steiner = t
                feasible = True
                for block, n_st in zip(partition, alloc):
                    st_ids = list(range(next_steiner, next_steiner + n_st))
                    next_steiner += n_st
                    trees = list(_trees_on(block, st_ids))
                    if not trees:
                        feasible = False
                        break
                    block_tree_lists.append(trees)
                if not feasible:
                    continue
                for combo in itertools.product(*block_tree_lists):
                    edges = [e for tree in combo for e in tree]
                    res = _tree_flows(edges, bal)
                    if res is None:
                        continue
                    oriented, flows = res
                    topo = Topology(t, s, oriented, flows)
                    found.setdefault(topo.key(), topo)
    return [found[k] for k in sorted(found.keys())]


def _energy(positions: np.ndarray, edges, edge_costs: np.ndarray) -> float:
    total = 0.0
    for (u, v), c in zip(edges, edge_costs):
        total += c * float(np.linalg.norm(positions[u] - positions[v]))
    return total


def _weiszfeld(anchors: np.ndarray, weights: np.ndarray, z0: np.ndarray, iters: int = 120):
    """Weighted geometric median of anchor points, Weiszfeld iteration.

    Snaps onto an anchor when the iterate crawls into its vicinity; the
    caller's contraction pass decides whether the snap actually helps.
    """
    scale = max(1.0, float(np.max(np.abs(anchors))))
    z = z0.copy()
    for _ in range(iters):
        dist = np.linalg.norm(anchors - z[None, :], axis=1)
        near = int(np.argmin(dist))
        if dist[near] < 1e-9 * scale:
            return anchors[near].copy()
        w = weights / dist
        z_new = (w[:, None] * anchors).sum(axis=0) / w.sum()
        step = float(np.max(np.abs(z_new - z)))
        if step < 1e-14 * scale:
            return z_new
        # sublinear crawl toward an anchor: snap and let the caller verify
        if step < 0.25 * dist[near] * 1e-4 and dist[near] < 1e-5 * scale:
            return anchors[near].copy()
        z = z_new
    return z


def optimize_topology(
    topology: Topology,
    instance: TransportInstance,
    n_starts: int = 20,
    seed: int = 0,
) -> tuple[np.ndarray, float]:
    """Best branch-node positions for a fixed topology.

    Multi-start coordinate descent with Weiszfeld inner updates on the
    energy sum of H(flow) * length; collapsed branch nodes (onto terminals
    or each other) are contracted whenever that lowers the energy.
    Returns (positions, energy) with positions of shape (n_steiner, d).
    """
    term = instance.terminal_positions()
    t = topology.n_terminals
    s = topology.n_steiner
    edge_costs = instance.cost.h(topology.flows)
    if s == 0:
        return np.empty((0, instance.d)), _energy(term, topology.edges, edge_costs)

    neighbors: dict[int, list[tuple[int, float]]] = {t + i: [] for i in range(s)}
    for (u, v), c in zip(topology.edges, edge_costs):
        if u >= t:
            neighbors[u].append((v, c))
        if v >= t:
            neighbors[v].append((u, c))

    lo = np.min(term, axis=0)
    hi = np.max(term, axis=0)
    span = np.maximum(hi - lo, 1e-6)
    rng = np.random.default_rng(seed)
    centroid = term.mean(axis=0)

    best_pos = None
    best_energy = math.inf
    for start in range(n_starts):
        if start == 0:
            pos_st = np.tile(centroid, (s, 1)) + 1e-3 * span * np.arange(s)[:, None]
        else:
            pos_st = lo[None, :] + rng.random((s, instance.d)) * span[None, :]
        positions = np.vstack([term, pos_st])
        sweep_budget = 60 if s > 1 else 2
        for _ in range(sweep_budget):
            moved = 0.0
            for i in range(s):
                node = t + i
                nbrs = neighbors[node]
                anchors = np.array([positions[v] for v, _ in nbrs])
                weights = np.array([c for _, c in nbrs])
                z = _weiszfeld(anchors, weights, positions[node])
                moved = max(moved, float(np.max(np.abs(z - positions[node]))))
                positions[node] = z
            if moved < 1e-12:
                break
        energy = _energy(positions, topology.edges, edge_costs)
        # contraction: snap each branch node onto any other node when that helps
        for _ in range(s + 2):
            improved = False
            for i in range(s):
                node = t + i
                current = positions[node].copy()
                for j in range(t + s):
                    if j == node:
                        continue
                    positions[node] = positions[j]
                    trial = _energy(positions, topology.edges, edge_costs)
                    if trial < energy - 1e-15:
                        energy = trial
                        current = positions[j].copy()
                        improved = True
                positions[node] = current
            if not improved:
                break
        if energy < best_energy - 1e-15:
            best_energy = energy
            best_pos = positions[t:].copy()
    return best_pos, best_energy


def solve(instance: TransportInstance, max_steiner: int = 1) -> Solution:
    """Best current over all enumerated topologies with optimized branch points.

    The returned current is cycle-free (topologies are forests), its boundary
    is exactly the target minus the source, and its energy is its actual
    cost-mass after canonical merging.
    """
    topologies = enumerate_topologies(instance, max_steiner)
    if not topologies:  # pragma: no cover - a balanced instance always has one
        raise InstanceInvalid("no feasible topology")
    best = None
    for topo in topologies:
        pos, _ = optimize_topology(topo, instance)
        positions = np.vstack([instance.terminal_positions(), pos]) if topo.n_steiner else instance.terminal_positions()
        a = np.array([positions[u] for u, _ in topo.edges])
        b = np.array([positions[v] for _, v in topo.edges])
        current = PolyhedralCurrent(a, b, topo.flows)
        energy = h_mass(current, instance.cost)
        if best is None or energy < best[0] - 1e-15:
            best = (energy, current, topo, pos)
    energy, current, topo, pos = best
    target = instance.mu_plus - instance.mu_minus
    if not boundary(current).same_atoms(target, 1e-9):  # pragma: no cover - defensive
        raise RuntimeError("solver produced a current with the wrong boundary")
    return Solution(current, energy, topo, pos, "exact-over-enumeration")


def _golden_1d(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Golden-section minimizer of a unimodal function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def oracle_small(instance: TransportInstance, grid_step: float = 1e-3) -> float:
    """Brute-force optimal energy for planar instances with at most three
    terminals and at most one branch node.

    Independent of the topology optimizer: spanning trees over the terminals
    are evaluated directly, and the single branch position is scanned over a
    lattice of the given step with nested zoom plus a coordinate
    golden-section polish.
    """
    if instance.d != 2:
        raise BudgetExceeded("the oracle is planar only")
    t = instance.n_terminals
    if t > 3:
        raise BudgetExceeded("the oracle covers at most 3 terminals")
    term = instance.terminal_positions()
    bal = {i: float(b) for i, b in enumerate(instance.terminal_balances())}
    cost = instance.cost

    candidates = []
    for tree in _trees_on(list(range(t)), []):
        res = _tree_flows(list(tree), bal)
        if res is None:
            continue
        oriented, flows = res
        candidates.append(_energy(term, oriented, cost.h(flows)))

    if t >= 3:
        star_costs = cost.h(np.array([abs(bal[i]) for i in range(t)]))

        def star_energy_grid(xs, ys):
            total = np.zeros((xs.size, ys.size))
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            for i in range(t):
                total += star_costs[i] * np.hypot(X - term[i, 0], Y - term[i, 1])
            return total

        lo = term.min(axis=0) - grid_step
        hi = term.max(axis=0) + grid_step
        step = grid_step
        for _ in range(10):
            xs = np.arange(lo[0], hi[0] + step / 2, step)
            ys = np.arange(lo[1], hi[1] + step / 2, step)
            E = star_energy_grid(xs, ys)
            flat = int(np.argmin(E))
            bi, bj = np.unravel_index(flat, E.shape)
            zx, zy = xs[bi], ys[bj]
            lo = np.array([zx - 2 * step, zy - 2 * step])
            hi = np.array([zx + 2 * step, zy + 2 * step])
            step /= 4.0
            if step < 1e-10:
                break

        def star_energy(z):
            return float(
                sum(
                    star_costs[i] * math.hypot(z[0] - term[i, 0], z[1] - term[i, 1])
                    for i in range(t)
                )
            )

        z = np.array([zx, zy])
        for _ in range(4):
            z[0] = _golden_1d(lambda v: star_energy((v, z[1])), z[0] - 4 * step, z[0] + 4 * step)
            z[1] = _golden_1d(lambda v: star_energy((z[0], v)), z[1] - 4 * step, z[1] + 4 * step)
        best_star = star_energy(z)
        # allow exact collapse onto a terminal
        for i in range(t):
            best_star = min(best_star, star_energy(term[i]))
        candidates.append(best_star)

    return min(candidates)
