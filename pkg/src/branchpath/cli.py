"""Command-line interface.

Subcommands: solve, connect, slice, decompose, flatnorm, and the lab
experiments (counterexample, threshold, stability).  Lab runs write
report.csv and summary.json and exit 0 on PASS, 2 on FAIL; any error
exits 1.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .geometry import Cube, shift_grid_avoiding
from .measures import CostSpec, SignedAtomicMeasure
from .currents import PolyhedralCurrent, boundary, h_mass, mass, slice_current
from .decomposition import good_decomposition, remove_cycles
from .connector import connect
from .flatnorm import TriComplex, flat_norm, rasterize
from .solver import TransportInstance
from . import lab as lab_mod
from . import solver as solver_mod


def _load_json(path: str) -> dict:
    with open(path) as f:
        return json.load(f)


def _dump(obj: dict, path: str | None) -> None:
    text = json.dumps(obj, indent=2)
    if path:
        with open(path, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _cost_from_args(args) -> CostSpec:
    if getattr(args, "size", False):
        return CostSpec.size()
    return CostSpec.power(args.alpha)


def _cmd_solve(args) -> int:
    instance, max_steiner = TransportInstance.from_json(_load_json(args.instance))
    if args.max_steiner is not None:
        max_steiner = args.max_steiner
    sol = solver_mod.solve(instance, max_steiner)
    out = {
        "energy": sol.energy,
        "optimality": sol.optimality,
        "current": sol.current.to_json(),
        "steiner": sol.steiner_positions.tolist() if sol.steiner_positions is not None else [],
        "boundary": boundary(sol.current).to_json(),
    }
    _dump(out, args.output)
    return 0


def _cmd_connect(args) -> int:
    mu = SignedAtomicMeasure.from_json(_load_json(args.mu))
    nu = SignedAtomicMeasure.from_json(_load_json(args.nu))
    cost = _cost_from_args(args)
    pts = np.vstack([mu.points, nu.points])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    base = Cube((lo + hi) / 2.0, max(float(np.max(hi - lo)), 1.0))
    Q = shift_grid_avoiding(base, pts, args.k)
    result = connect(mu, nu, Q, args.k, cost)
    out = {
        "k": result.k,
        "bound": result.bound,
        "h_mass": h_mass(result.current, cost),
        "cube": Q.to_json(),
        "sigma": result.sigma.to_json(),
        "current": result.current.to_json(),
    }
    _dump(out, args.output)
    return 0


def _cmd_slice(args) -> int:
    current = PolyhedralCurrent.from_json(_load_json(args.current))
    center = [float(c) for c in args.center.split(",")]
    sl = slice_current(current, center, args.radius)
    out = {
        "atoms": sl.measure.to_json()["atoms"],
        "total_weight": sl.total,
    }
    _dump(out, args.output)
    return 0


def _cmd_decompose(args) -> int:
    current = PolyhedralCurrent.from_json(_load_json(args.current))
    acyclic = remove_cycles(current)
    decomposition = good_decomposition(acyclic)
    out = decomposition.to_json()
    out["cycle_mass_removed"] = mass(current) - mass(acyclic)
    out["total_weight"] = decomposition.total_weight
    _dump(out, args.output)
    return 0


def _cmd_flatnorm(args) -> int:
    A = PolyhedralCurrent.from_json(_load_json(args.a))
    B = PolyhedralCurrent.from_json(_load_json(args.b))
    diff = A - B
    if args.domain:
        cx, cy, edge = (float(v) for v in args.domain.split(","))
        domain = Cube((cx, cy), edge)
    else:
        pts = diff.endpoints()
        if pts.shape[0] == 0:
            _dump({"value": 0.0}, args.output)
            return 0
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = float(np.max(hi - lo))
        edge = (np.ceil(span / args.mesh) + 8) * args.mesh
        domain = Cube((lo + hi) / 2.0, edge)
    complex_ = TriComplex(domain, args.mesh)
    chain = rasterize(diff, complex_)
    result = flat_norm(chain, complex_)
    out = {
        "value": result.value,
        "mesh": complex_.h,
        "domain": domain.to_json(),
        "certificate": result.to_json(),
    }
    _dump(out, args.output)
    return 0


def _cmd_lab(args) -> int:
    config = lab_mod.ExperimentConfig.from_json(_load_json(args.config)) if args.config else lab_mod.ExperimentConfig(kind=args.experiment)
    if args.experiment == "counterexample":
        report = lab_mod.run_counterexample(
            config.n_list, config.mesh_step, config.mesh_domain, config.tol_closed_form
        )
    elif args.experiment == "threshold":
        report = lab_mod.run_threshold(config.alpha_list, config.d, config.kmax)
    else:
        report = lab_mod.run_stability(config)
    csv_path, json_path = lab_mod.write_report(report, config.out_dir)
    print(f"wrote {csv_path} and {json_path}; passed={report.passed}")
    return 0 if report.passed else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="branchpath", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="optimal transport current for an instance file")
    p.add_argument("instance")
    p.add_argument("--max-steiner", type=int, default=None)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("connect", help="cone connection between two measures")
    p.add_argument("mu")
    p.add_argument("nu")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--size", action="store_true")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_connect)

    p = sub.add_parser("slice", help="slice a current by a sup-norm sphere")
    p.add_argument("current")
    p.add_argument("--center", required=True, help="comma-separated coordinates")
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_slice)

    p = sub.add_parser("decompose", help="weighted path decomposition of a current")
    p.add_argument("current")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("flatnorm", help="flat distance between two currents")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--mesh", type=float, required=True)
    p.add_argument("--domain", default=None, help="cx,cy,edge of the mesh domain")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_flatnorm)

    p = sub.add_parser("lab", help="run an experiment and write report.csv/summary.json")
    p.add_argument("experiment", choices=["counterexample", "threshold", "stability"])
    p.add_argument("config", nargs="?", default=None)
    p.set_defaults(func=_cmd_lab)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
