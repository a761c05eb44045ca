"""Command line driver: ``run`` and ``validate`` a scenario file.

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .catching_up import (PolylineCurve, arclength_parametrize, confinement_excess,
                          fejer_violation, level_monotonicity, longest_stall, membership_excess,
                          refine, target_probes)
from .errors import DomainError, FoliationError, InputError, NumericalError, ValidationError
from .foliation import check_quasiconvex, validate_cover, validate_nesting
from .scenario import Scenario, load_scenario
from .trajectory_analysis import (AnalysisReport, check_self_contracted, inclusion_residual,
                                  length_diameter_ratio, reference_flow, sup_distance,
                                  tangent_continuity)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


@dataclass
class RunOutput:
    rows: list
    columns: list
    metrics: dict
    trajectory: object = None
    refinement: object = None
    analysis: AnalysisReport = field(default_factory=AnalysisReport)


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    return v


def execute(scenario: Scenario) -> RunOutput:
    """Build the foliation, refine the catching-up trajectory, analyse it."""
    fol = scenario.build_foliation()
    x0 = np.asarray(scenario.x0, float)
    if not fol.set_at(fol.b).contains(x0):
        raise ValidationError(f"x0 = {scenario.x0} is not in S_b (invariant 'x0 in S_b')")
    an = scenario.analysis
    tol = scenario.tolerances
    traj, ref = refine(fol, x0, scenario.sizes, scheme=scenario.scheme,
                       eps_conv=tol["eps_conv"], k_cap=an["k_cap"])
    rep = AnalysisReport()
    reasons = {}
    poly = PolylineCurve(traj.arclengths, traj.vertices)
    n_samples = int(an["n_samples"])
    d = scenario.dimension

    if traj.total_length > 0:
        sc = arclength_parametrize(traj, n_samples)
        pts, s_vals, steps = sc.points, sc.s, sc.segment
        rep.self_contracted_max_violation = check_self_contracted(
            sc, n_triples=an["n_triples"], seed=scenario.seed)
        rep.length_diameter_ratio = length_diameter_ratio(traj.distinct_vertices())
        rep.inclusion_residual_max, rep.inclusion_samples_skipped = inclusion_residual(
            poly, fol, n_samples=an["inclusion_samples"], h_fd=tol["h_fd"])
        if rep.inclusion_residual_max is None:
            reasons["inclusion_residual_max"] = "every sample fell within h_fd of a vertex"
        fine, coarse = min(an["windows"]), max(an["windows"])
        if poly.length > 2 * coarse:
            rep.tangent_gap_max = tangent_continuity(poly, fine)
            rep.tangent_gap_coarse = tangent_continuity(poly, coarse)
        else:
            reasons["tangent_gap_max"] = "trajectory shorter than two windows"
    else:
        pts = np.repeat(x0[None, :], n_samples, axis=0)
        s_vals = np.zeros(n_samples)
        steps = np.zeros(n_samples, dtype=int)
        for k in ("self_contracted_max_violation", "length_diameter_ratio",
                  "inclusion_residual_max", "tangent_gap_max"):
            reasons[k] = "zero-length trajectory (x0 already in S_a)"

    reference_consistency = None
    f = scenario.function()
    if an["reference"]:
        if f is None or f.gradient is None or not f.smooth:
            reasons["reference_sup_distance"] = "reference flow needs a smooth sublevel function"
        elif traj.total_length == 0:
            reasons["reference_sup_distance"] = "zero-length trajectory"
        else:
            h = float(an["reference_step"])
            budget = an["k_cap"] * traj.start_distance
            r1 = reference_flow(f, x0, budget, stop_level=fol.a, step=h)
            r2 = reference_flow(f, x0, budget, stop_level=fol.a, step=h / 2)
            reference_consistency = float(np.linalg.norm(r1(r1.length) - r2(r2.length)))
            rep.reference_sup_distance = sup_distance(poly, r2, max(poly.length, r2.length))
    else:
        reasons["reference_sup_distance"] = "reference comparison not requested"
    if rep.inclusion_samples_skipped is None:
        reasons.setdefault("inclusion_samples_skipped", reasons.get("inclusion_residual_max"))
    if rep.tangent_gap_coarse is None:
        reasons.setdefault("tangent_gap_coarse", reasons.get("tangent_gap_max"))

    idx_err, decreasing = level_monotonicity(traj, fol)
    levels = [fol.index_of(p) for p in pts]
    rows = [[s, *p, t, int(i)] for s, p, t, i in zip(s_vals, pts, levels, steps)]
    columns = ["s", *[f"x_{k + 1}" for k in range(d)], "level_t", "step_index"]

    metrics = {
        "provenance": {"scenario_hash": scenario.digest(), "tolerances": dict(tol),
                       "seed": scenario.seed, "scheme": scenario.scheme,
                       "schedule": list(scenario.sizes)},
        "n": [lv.n for lv in ref.levels],
        "mesh_sizes": [lv.mesh for lv in ref.levels],
        "vertex_counts": [lv.vertex_count for lv in ref.levels],
        "total_lengths": ref.total_lengths,
        "sup_distances": ref.sup_distances,
        "observed_rates": ref.observed_rates(),
        "converged": ref.converged,
        "eps_conv": ref.eps_conv,
        "extension_length": ref.extension_length,
        "last_length_change": ref.last_length_change(),
        "start_distance": traj.start_distance,
        "length_bound_ok": traj.length_bound_ok,
        "fejer_max_violation": fejer_violation(traj, target_probes(fol)),
        "confinement_excess": confinement_excess(traj, fol),
        "membership_excess": membership_excess(traj, fol),
        "level_index_error": idx_err,
        "level_strictly_decreasing": decreasing,
        "longest_stall": longest_stall(poly, fol) if traj.total_length > 0 else 0.0,
        "smooth_foliation": fol.smooth,
        "reference_self_consistency": reference_consistency,
        **rep.as_dict(),
    }
    if reference_consistency is None:
        reasons["reference_self_consistency"] = reasons.get("reference_sup_distance")
    metrics["null_reasons"] = {k: v for k, v in sorted(reasons.items()) if metrics.get(k) is None}
    return RunOutput(rows, columns, _clean(metrics), traj, ref, rep)


def write_outputs(out: RunOutput, outdir) -> tuple:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "trajectory.csv"
    lines = [",".join(out.columns)]
    for row in out.rows:
        lines.append(",".join([*(_fmt(v) for v in row[:-1]), str(row[-1])]))
    csv_path.write_text("\n".join(lines) + "\n")
    json_path = outdir / "metrics.json"
    json_path.write_text(json.dumps(out.metrics, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def validate(scenario: Scenario, out=None) -> bool:
    """Run the structural checks and print one PASS/FAIL line per invariant.

    Checks that presuppose convex level sets are skipped once quasiconvexity
    sampling has failed."""
    out = out or sys.stdout
    results = []

    def report(name, ok, detail):
        results.append(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=out)

    f = scenario.function()
    if f is not None:
        ok, gap, pair = check_quasiconvex(f, seed=scenario.seed)
        report("quasiconvexity", ok,
               f"worst midpoint gap {gap:.3g}" + ("" if ok else f", violating pair {pair}"))
        if not ok:
            print("SKIP nesting, boundary cover: level sets are not convex", file=out)
            return False
    try:
        fol = scenario.build_foliation(validate=False)
    except FoliationError as err:
        report("foliation construction", False, str(err))
        return False
    try:
        x0_ok = fol.set_at(fol.b).contains(scenario.x0)
        report("x0 in S_b", x0_ok, f"dist = {fol.set_at(fol.b).distance(scenario.x0):.3g}")
        nest = validate_nesting(fol)
        detail = f"min margin {nest.min_margin:.6g} over {nest.n_pairs} level pairs"
        if not nest.passed:
            detail += f"; first violation {nest.violations[0]}"
        report("nesting", nest.passed, detail)
        cover = validate_cover(fol)
        report("boundary cover", cover.passed,
               f"{cover.n_checked} points, max index error {cover.max_index_error:.3g}")
    except NumericalError as err:
        report("numerical checks", False, f"{err} {err.context or ''}".strip())
    return all(results)


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    d = scenario.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if args.levels:
        try:
            d["schedule"]["sizes"] = [int(v) for v in args.levels.split(",")]
        except ValueError as err:
            raise InputError(f"--levels must be comma-separated integers: {args.levels}") from err
    if args.scheme:
        d["schedule"]["scheme"] = args.scheme
    return Scenario.from_dict(d)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--levels", default=None, help="partition sizes, e.g. 8,16,32")
    common.add_argument("--scheme", choices=["uniform", "geometric"], default=None)
    parser = argparse.ArgumentParser(prog="foliation-descent", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common], help="run a scenario and write outputs")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", required=True, help="output directory")
    p_val = sub.add_parser("validate", parents=[common], help="check a scenario without running")
    p_val.add_argument("scenario")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = _apply_overrides(load_scenario(args.scenario), args)
        if args.command == "validate":
            return EXIT_OK if validate(scenario) else EXIT_VALIDATION
        out = execute(scenario)
        csv_path, json_path = write_outputs(out, args.out)
        print(f"wrote {csv_path} and {json_path}")
        return EXIT_OK
    except NumericalError as err:
        ctx = f" [{err.context}]" if err.context else ""
        print(f"numerical error: {err}{ctx}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, ValidationError, DomainError, OSError) as err:
        field_name = getattr(err, "field", None)
        prefix = f"validation error in {field_name!r}: " if field_name else "validation error: "
        print(prefix + str(err), file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
