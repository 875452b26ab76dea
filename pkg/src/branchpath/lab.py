"""Experiment harness: the size-cost instability family, the dyadic cost
threshold demonstration, and desk-scale stability checks.

Reports are plain rows (CSV) plus a JSON summary; the PASS/FAIL decision is
a pure function of the rows and tolerances.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .geometry import Cube, subdivide
from .measures import CostSpec, SignedAtomicMeasure, w1_distance
from .currents import PolyhedralCurrent, h_mass
from .connector import dyadic_connection_cost
from .flatnorm import TriComplex, flat_norm, rasterize, snap_current
from .solver import TransportInstance, solve

BRANCH_POINT = (0.5, 0.125)
TARGET_POINT = (1.0, 0.0)
TWO_LEG_LENGTH = math.sqrt(17.0) / 4.0  # both legs have length sqrt(17)/8

# the difference currents of the instability family live on the second leg
DEFAULT_MESH_DOMAIN = Cube((0.75, 0.0625), 0.5)
# stability runs compare whole transport currents, which span the full family
STABILITY_MESH_DOMAIN = Cube((0.5, 0.0625), 1.25)


def instability_marginals(n: int) -> tuple[SignedAtomicMeasure, SignedAtomicMeasure]:
    """Source at the origin; target splitting 1/n of the mass onto the bend point."""
    if n < 2:
        raise ValueError("the family needs n >= 2")
    mu_minus = SignedAtomicMeasure.dirac((0.0, 0.0), 1.0)
    mu_plus = SignedAtomicMeasure.from_atoms(
        [(BRANCH_POINT, 1.0 / n), (TARGET_POINT, 1.0 - 1.0 / n)]
    )
    return mu_minus, mu_plus


def instability_instance(n: int, cost: CostSpec) -> TransportInstance:
    mu_minus, mu_plus = instability_marginals(n)
    return TransportInstance(mu_minus, mu_plus, cost, Cube((0.5, 0.0), 4.0))


def limit_instance(cost: CostSpec) -> TransportInstance:
    return TransportInstance(
        SignedAtomicMeasure.dirac((0.0, 0.0), 1.0),
        SignedAtomicMeasure.dirac(TARGET_POINT, 1.0),
        cost,
        Cube((0.5, 0.0), 4.0),
    )


def two_leg_current(n: int | None = None) -> PolyhedralCurrent:
    """The bent two-segment current; with n given, the second leg carries 1 - 1/n."""
    second = 1.0 if n is None else 1.0 - 1.0 / n
    return PolyhedralCurrent.from_edges(
        [((0.0, 0.0), BRANCH_POINT, 1.0), (BRANCH_POINT, TARGET_POINT, second)]
    )


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "stability"
    cost: CostSpec = field(default_factory=CostSpec.size)
    n_list: tuple[int, ...] = (2, 4, 8, 16)
    alpha_list: tuple[float, ...] = (0.4, 0.5, 0.75)
    d: int = 2
    kmax: int = 8
    mesh_step: float = 1.0 / 64.0
    mesh_domain: Cube | None = None
    max_steiner: int = 1
    tol_closed_form: float = 1e-6
    tol_solver: float = 1e-3
    out_dir: str = "."

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        kwargs = {}
        if "kind" in obj:
            kwargs["kind"] = obj["kind"]
        if "cost" in obj:
            kwargs["cost"] = CostSpec.from_json(obj["cost"])
        if "n_list" in obj:
            kwargs["n_list"] = tuple(int(n) for n in obj["n_list"])
        if "alpha_list" in obj:
            kwargs["alpha_list"] = tuple(float(a) for a in obj["alpha_list"])
        for key in ("d", "kmax", "max_steiner"):
            if key in obj:
                kwargs[key] = int(obj[key])
        for key in ("mesh_step", "tol_closed_form", "tol_solver"):
            if key in obj:
                kwargs[key] = float(obj[key])
        if "mesh_domain" in obj:
            kwargs["mesh_domain"] = Cube.from_json(obj["mesh_domain"])
        if "out_dir" in obj:
            kwargs["out_dir"] = obj["out_dir"]
        return cls(**kwargs)


@dataclass(frozen=True)
class StabilityRow:
    n: int
    energy: float
    flat_dist: float
    w1_marginals: float
    limit_energy: float
    optimal_energy: float
    gap: float

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "energy": self.energy,
            "flat_dist": self.flat_dist,
            "w1_marginals": self.w1_marginals,
            "limit_energy": self.limit_energy,
            "optimal_energy": self.optimal_energy,
            "gap": self.gap,
        }


@dataclass(frozen=True)
class StabilityReport:
    experiment: str
    rows: tuple[StabilityRow, ...]
    passed: bool
    gap: float
    details: dict

    def row_dicts(self) -> list[dict]:
        return [r.as_dict() for r in self.rows]

    def summary(self) -> dict:
        return {
            "experiment": self.experiment,
            "passed": self.passed,
            "gap": self.gap,
            "details": self.details,
            "rows": self.row_dicts(),
        }


@dataclass(frozen=True)
class ThresholdRow:
    alpha: float
    empirical_ratio: float
    predicted_ratio: float
    classification: str
    level_costs: tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "empirical_ratio": self.empirical_ratio,
            "predicted_ratio": self.predicted_ratio,
            "classification": self.classification,
            "level_costs": json.dumps(list(self.level_costs)),
        }


@dataclass(frozen=True)
class ThresholdReport:
    experiment: str
    rows: tuple[ThresholdRow, ...]
    passed: bool
    details: dict

    def row_dicts(self) -> list[dict]:
        return [r.as_dict() for r in self.rows]

    def summary(self) -> dict:
        return {
            "experiment": self.experiment,
            "passed": self.passed,
            "details": self.details,
            "rows": [
                {**r.as_dict(), "level_costs": list(r.level_costs)} for r in self.rows
            ],
        }


def run_counterexample(
    n_list=(2, 4, 8, 16),
    mesh_step: float = 1.0 / 64.0,
    mesh_domain: Cube | None = None,
    tol: float = 1e-6,
) -> StabilityReport:
    """Reproduce the size-cost instability: the optimal energy is constant in n
    while the limit current is strictly worse than the straight segment.
    """
    cost = CostSpec.size()
    mesh_domain = mesh_domain or DEFAULT_MESH_DOMAIN
    complex_ = TriComplex(mesh_domain, mesh_step)

    limit_current = two_leg_current()
    limit_energy = h_mass(limit_current, cost)
    segment_energy = h_mass(
        PolyhedralCurrent.segment((0.0, 0.0), TARGET_POINT, 1.0), cost
    )
    optimal_energy = solve(limit_instance(cost), max_steiner=1).energy

    mu_plus_limit = SignedAtomicMeasure.dirac(TARGET_POINT, 1.0)
    rows = []
    for n in n_list:
        sol = solve(instability_instance(n, cost), max_steiner=1)
        optimal_n = two_leg_current(n)
        chain = rasterize(optimal_n - limit_current, complex_)
        flat = flat_norm(chain, complex_).value
        _, mu_plus_n = instability_marginals(n)
        w1 = w1_distance(mu_plus_n, mu_plus_limit)
        gap = limit_energy - optimal_energy
        rows.append(
            StabilityRow(n, sol.energy, flat, w1, limit_energy, optimal_energy, gap)
        )
    gap = limit_energy - optimal_energy
    passed = abs(gap) <= tol
    details = {
        "cost": "size",
        "segment_energy": segment_energy,
        "limit_energy": limit_energy,
        "optimal_energy": optimal_energy,
        "mesh_step": mesh_step,
    }
    return StabilityReport("counterexample", tuple(rows), passed, gap, details)


def run_threshold(
    alpha_list=(0.4, 0.5, 0.75), d: int = 2, kmax: int = 8, rel_tol: float = 0.10
) -> ThresholdReport:
    """Per-level dyadic refinement costs of the uniform measure, classified as
    summable (ratio < 1) or diverging (ratio >= 1) against the prediction
    2^(d(1-alpha)-1).
    """
    if d not in (2, 3):
        raise ValueError("the threshold experiment runs in dimension 2 or 3")
    if kmax < 2:
        raise ValueError("need at least two levels to form a ratio")
    Q = Cube((0.5,) * d, 1.0)
    grid = subdivide(Q, kmax)
    centers = grid.cell_centers()
    uniform = SignedAtomicMeasure(centers, np.full(centers.shape[0], 1.0 / centers.shape[0]))

    rows = []
    all_ok = True
    for alpha in alpha_list:
        cost = CostSpec.power(alpha)
        level_costs = dyadic_connection_cost(uniform, Q, kmax, cost)
        ratios = [
            level_costs[i + 1] / level_costs[i]
            for i in range(len(level_costs) - 1)
            if level_costs[i] > 0
        ]
        empirical = float(np.exp(np.mean(np.log(ratios)))) if ratios else float("nan")
        predicted = 2.0 ** (d * (1.0 - alpha) - 1.0)
        classification = "summable" if empirical < 1.0 - 1e-9 else "diverging"
        expected_class = "summable" if d * (1.0 - alpha) - 1.0 < 0 else "diverging"
        ok = (
            math.isfinite(empirical)
            and abs(empirical / predicted - 1.0) <= rel_tol
            and classification == expected_class
        )
        all_ok = all_ok and ok
        rows.append(
            ThresholdRow(alpha, empirical, predicted, classification, tuple(level_costs))
        )
    details = {"d": d, "kmax": kmax, "rel_tol": rel_tol}
    return ThresholdReport("threshold", tuple(rows), all_ok, details)


def run_stability(config: ExperimentConfig) -> StabilityReport:
    """Solve the perturbed family and compare the limit candidate's energy to
    the limit optimum.

    The limit candidate is the explicitly scripted two-leg current for the
    size cost (whose optima converge to it) and the solver output on the
    limit instance otherwise.  PASS when the candidate's energy matches the
    limit optimum within the solver tolerance.
    """
    cost = config.cost
    domain = config.mesh_domain or STABILITY_MESH_DOMAIN
    complex_ = TriComplex(domain, config.mesh_step)

    limit_sol = solve(limit_instance(cost), max_steiner=config.max_steiner)
    optimal_energy = limit_sol.energy
    if cost.kind == "size":
        candidate = two_leg_current()
        candidate_energy = h_mass(candidate, cost)
    else:
        candidate = limit_sol.current
        candidate_energy = limit_sol.energy
    candidate_snapped = snap_current(candidate, complex_)

    mu_plus_limit = SignedAtomicMeasure.dirac(TARGET_POINT, 1.0)
    rows = []
    for n in config.n_list:
        sol = solve(instability_instance(n, cost), max_steiner=config.max_steiner)
        snapped = snap_current(sol.current, complex_)
        chain = rasterize(snapped - candidate_snapped, complex_)
        flat = flat_norm(chain, complex_).value
        _, mu_plus_n = instability_marginals(n)
        w1 = w1_distance(mu_plus_n, mu_plus_limit)
        rows.append(
            StabilityRow(
                n,
                sol.energy,
                flat,
                w1,
                candidate_energy,
                optimal_energy,
                candidate_energy - optimal_energy,
            )
        )
    gap = candidate_energy - optimal_energy
    passed = abs(gap) <= config.tol_solver
    details = {
        "cost": cost.to_json(),
        "candidate_energy": candidate_energy,
        "optimal_energy": optimal_energy,
        "tol_solver": config.tol_solver,
        "mesh_step": config.mesh_step,
    }
    return StabilityReport("stability", tuple(rows), passed, gap, details)


def write_report(report, out_dir: str) -> tuple[str, str]:
    """Write report.csv (one row per experiment row) and summary.json."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "report.csv")
    rows = report.row_dicts()
    with open(csv_path, "w", newline="") as f:
        if rows:
            writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    json_path = os.path.join(out_dir, "summary.json")
    with open(json_path, "w") as f:
        json.dump(report.summary(), f, indent=2)
    return csv_path, json_path
