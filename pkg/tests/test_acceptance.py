"""End-to-end acceptance checks on the shipped scenarios.

Each test covers one criterion and records every sub-check; the terminal
summary prints one PASS/FAIL line per criterion.
"""
import numpy as np
import pytest

from foliation_descent.catching_up import (K_CAP, Partition, PolylineCurve, arclength_parametrize,
                                           fejer_violation, level_monotonicity, run_partition,
                                           target_probes)
from foliation_descent.cli import execute, write_outputs
from foliation_descent.foliation import make_sublevel_foliation
from foliation_descent.functions import make_function
from foliation_descent.scenario import load_scenario, shipped_scenarios
from foliation_descent.trajectory_analysis import check_self_contracted, reference_flow

from oracles import arc_max_violation, arc_points

SCENARIOS = shipped_scenarios()
_RUNS = {}


def run(name):
    if name not in _RUNS:
        sc = load_scenario(SCENARIOS[name])
        _RUNS[name] = (sc, execute(sc))
    return _RUNS[name]


@pytest.mark.criterion(1, "radial exactness on concentric balls")
def test_radial_exactness(criterion):
    sc, out = run("balls")
    traj = out.trajectory
    assert sc.sizes[-1] == 1024
    curve = PolylineCurve(traj.arclengths, traj.vertices)
    s = np.linspace(0.0, 4.0, 4001)
    exact = np.outer(5.0 - s, [0.6, 0.8])
    dev = float(np.max(np.linalg.norm(curve(s) - exact, axis=1)))
    criterion.check(dev <= 1e-6, f"sup deviation from (5-s)(0.6,0.8) = {dev:.3e} <= 1e-6")
    L = traj.total_length
    criterion.check(abs(L - 4.0) <= 1e-9, f"total length {L!r} = 4 +- 1e-9")
    r = out.metrics["length_diameter_ratio"]
    criterion.check(abs(r - 1.0) <= 1e-9, f"length/diameter {r!r} = 1 +- 1e-9")
    criterion.assert_all()


@pytest.mark.criterion(2, "smooth-flow agreement on the ellipsoid")
def test_smooth_flow_agreement(criterion):
    sc, out = run("ellipsoid")
    m = out.metrics
    d = m["reference_sup_distance"]
    criterion.check(d is not None and d <= 5e-3,
                    f"sup distance to step-halved reference = {d:.3e} <= 5e-3")
    c = m["reference_self_consistency"]
    criterion.check(c is not None and c <= 1e-8,
                    f"reference endpoint change under halving (h={sc.analysis['reference_step']}) "
                    f"= {c:.3e} <= 1e-8")
    # same oracle at the finer step used for the reference example
    f = sc.function()
    budget = K_CAP * out.trajectory.start_distance
    r1 = reference_flow(f, sc.x0, budget, stop_level=sc.t_range[0], step=1e-4)
    r2 = reference_flow(f, sc.x0, budget, stop_level=sc.t_range[0], step=5e-5)
    e = float(np.linalg.norm(r1(r1.length) - r2(r2.length)))
    criterion.check(e <= 1e-8, f"reference endpoint change h=1e-4 -> 5e-5 = {e:.3e} <= 1e-8")
    criterion.assert_all()


@pytest.mark.criterion(3, "self-contracted certification")
def test_self_contracted(criterion):
    for name in sorted(SCENARIOS):
        sc, out = run(name)
        v = out.metrics["self_contracted_max_violation"]
        criterion.check(v <= 1e-8, f"{name}: max violation over {sc.analysis['n_triples']} "
                                   f"triples = {v:.3e} <= 1e-8")
    # planted counterexample: chord lengths stop growing past a half turn,
    # so an arc of 3*pi/2 is not self-contracted
    angle = 1.5 * np.pi
    v = check_self_contracted(arc_points(angle, 1001), n_triples=1000)
    criterion.check(v > 0.1, f"arc of 3pi/2: sampled violation {v:.3f} > 0.1 "
                             f"(closed-form sup {arc_max_violation(angle):.3f})")
    criterion.assert_all()


@pytest.mark.criterion(4, "Fejer monotonicity toward S_a")
def test_fejer(criterion):
    for name in sorted(SCENARIOS):
        sc = load_scenario(SCENARIOS[name])
        fol = sc.build_foliation()
        probes = target_probes(fol, 64)
        assert len(probes) == 64
        worst = max(fejer_violation(run_partition(fol, sc.x0, Partition.make(sc.scheme, fol.a,
                                                                             fol.b, n)), probes)
                    for n in sc.sizes)
        criterion.check(worst <= 1e-9, f"{name}: worst per-step distance increase over "
                                       f"{len(sc.sizes)} partitions = {worst:.3e} <= 1e-9")
    criterion.assert_all()


@pytest.mark.criterion(5, "length-bound stability")
def test_length_bound(criterion):
    for name in sorted(SCENARIOS):
        sc, out = run(name)
        assert sc.dimension <= 3
        L = out.metrics["total_lengths"]
        change = abs(L[-1] - L[-2]) / L[-2]
        assert sc.sizes[0] == 8 and sc.sizes[-1] == 1024
        n1, n2 = sc.sizes[-2:]
        criterion.check(change < 0.10, f"{name}: |L_{n2} - L_{n1}| / L_{n1} = {change:.2e} < 0.1")
        cap = K_CAP * out.metrics["start_distance"]
        criterion.check(max(L) <= cap, f"{name}: max L_n = {max(L):.4f} <= 32 dist = {cap:.4f}")
    criterion.assert_all()


@pytest.mark.criterion(6, "inclusion residual on the ellipsoid")
def test_inclusion(criterion):
    sc, out = run("ellipsoid")
    assert sc.analysis["inclusion_samples"] == 256
    r = out.metrics["inclusion_residual_max"]
    k = out.metrics["inclusion_samples_skipped"]
    criterion.check(r is not None and r <= 1e-4,
                    f"max normal-cone residual = {r:.3e} <= 1e-4 ({256 - k} of 256 samples, "
                    f"{k} within h_fd of a vertex)")
    criterion.assert_all()


@pytest.mark.criterion(7, "nonsmooth descent through nested boxes")
def test_nonsmooth(criterion):
    sc, out = run("boxes")
    assert sc.x0 == [1.5, 0.7] and sc.t_range == [0.05, 1.5]
    fol = sc.build_foliation()
    last = out.trajectory.vertices[-1]
    gap = abs(fol.set_at(0.05).depth(last))
    criterion.check(gap <= 1e-3, f"final vertex {last.tolist()} is {gap:.3e} from the boundary "
                                 "of S_0.05 (<= 1e-3)")
    _, decreasing = level_monotonicity(out.trajectory, fol)
    criterion.check(decreasing, f"index_of strictly decreasing over "
                                f"{len(out.trajectory.distinct_vertices())} distinct vertices")
    criterion.assert_all()


@pytest.mark.criterion(8, "reparametrization invariance: norm vs sqrt of norm")
def test_reparametrization(criterion):
    n_samples = 1001
    _, a = run("balls")
    _, b = run("sqrt_norm")
    ca = arclength_parametrize(a.trajectory, n_samples).points
    cb = arclength_parametrize(b.trajectory, n_samples).points
    d = float(np.max(np.linalg.norm(ca - cb, axis=1)))
    criterion.check(d <= 1e-9, f"shipped scenarios: max pointwise gap = {d:.3e} <= 1e-9")
    # matched partitions: tau -> sqrt(tau) gives the same sets at every step
    norm = make_sublevel_foliation(make_function("norm", 2, {"center": [0.5, -1.0]}), 1.0, 5.0)
    root = make_sublevel_foliation(make_function("sqrt_norm", 2, {"center": [0.5, -1.0]}),
                                   1.0, np.sqrt(5.0))
    x0 = [3.5, 3.0]
    for scheme in ("uniform", "geometric"):
        p = Partition.make(scheme, 1.0, 5.0, 256)
        q = Partition(np.sqrt(p.levels))
        ta, tb = run_partition(norm, x0, p), run_partition(root, x0, q)
        d = float(np.max(np.linalg.norm(arclength_parametrize(ta, n_samples).points
                                        - arclength_parametrize(tb, n_samples).points, axis=1)))
        criterion.check(d <= 1e-9, f"{scheme} partition mapped by sqrt: max gap = {d:.3e} <= 1e-9")
    criterion.assert_all()


@pytest.mark.criterion(9, "C1 diagnostic on the ellipsoid limit curve")
def test_c1(criterion):
    sc, out = run("ellipsoid")
    assert sorted(sc.analysis["windows"]) == [1e-3, 1e-2]
    fine, coarse = out.metrics["tangent_gap_max"], out.metrics["tangent_gap_coarse"]
    criterion.check(fine <= coarse + 1e-6,
                    f"max gap at window 1e-3 = {fine:.3e} <= gap at 1e-2 ({coarse:.3e}) + 1e-6")
    criterion.assert_all()


@pytest.mark.criterion(10, "determinism")
def test_determinism(criterion, tmp_path):
    for name in sorted(SCENARIOS):
        sc, first = run(name)
        second = execute(load_scenario(SCENARIOS[name]))
        pa = write_outputs(first, tmp_path / name / "a")
        pb = write_outputs(second, tmp_path / name / "b")
        same = all(x.read_bytes() == y.read_bytes() for x, y in zip(pa, pb))
        criterion.check(same, f"{name}: trajectory.csv and metrics.json byte-identical "
                              f"(seed {sc.seed})")
    criterion.assert_all()
