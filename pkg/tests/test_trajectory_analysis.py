import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foliation_descent.catching_up import (Partition, PolylineCurve, SampledCurve,
                                           arclength_parametrize, run_partition)
from foliation_descent.errors import DegenerateCurveError, InputError
from foliation_descent.foliation import ParametricFamily, make_parametric_foliation, \
    make_sublevel_foliation
from foliation_descent.functions import make_function
from foliation_descent.trajectory_analysis import (check_self_contracted, inclusion_residual,
                                                   length_diameter_ratio, reference_flow,
                                                   sup_distance, tangent_continuity)

from oracles import arc_max_violation, arc_points


def segment(n=101):
    s = np.linspace(0, 4, n)
    return SampledCurve(s, np.outer(5 - s, [0.6, 0.8]))


# self-contracted ----------------------------------------------------------

def test_segment_is_self_contracted():
    assert check_self_contracted(segment()) <= 0
    assert check_self_contracted(segment(), exhaustive=True) <= 0


def test_long_arc_violation_closed_form():
    angle = 1.5 * np.pi
    P = arc_points(angle, 2001)
    assert check_self_contracted(P) > 0.1
    # every sample on the grid is included; error is the grid resolution
    assert check_self_contracted(P, exhaustive=True) == pytest.approx(arc_max_violation(angle),
                                                                        abs=1e-5)


def test_arc_below_half_turn_is_self_contracted():
    P = arc_points(0.9 * np.pi, 2001)
    assert arc_max_violation(0.9 * np.pi) == 0.0
    assert check_self_contracted(P, exhaustive=True) <= 1e-12


def test_self_contracted_needs_three_samples():
    with pytest.raises(DegenerateCurveError):
        check_self_contracted(np.zeros((2, 2)))


# length / diameter --------------------------------------------------------

def test_ratio_segment():
    assert length_diameter_ratio(segment()) == pytest.approx(1.0, abs=1e-14)


def test_ratio_right_angle():
    assert length_diameter_ratio([[0, 0], [1, 0], [1, 1]]) == pytest.approx(np.sqrt(2), abs=1e-15)


def test_ratio_degenerate():
    with pytest.raises(DegenerateCurveError):
        length_diameter_ratio([[1, 1], [1, 1]])


# inclusion residual -------------------------------------------------------

def test_inclusion_balls():
    fol = make_sublevel_foliation(make_function("norm", 2), 1.0, 5.0)
    traj = run_partition(fol, [3, 4], Partition.uniform(1, 5, 64))
    worst, skipped = inclusion_residual(PolylineCurve(traj.arclengths, traj.vertices), fol)
    assert worst <= 1e-6 and skipped < 256


def test_inclusion_squares_facet():
    fol = make_sublevel_foliation(make_function("box_max", 2), 0.3, 2.0)
    # x0 = (1.5, 0.2) moves along x_2 = 0.2 through the facets x_1 = t
    traj = run_partition(fol, [1.5, 0.2], Partition.uniform(0.3, 2.0, 64))
    curve = PolylineCurve(traj.arclengths, traj.vertices)
    worst, _ = inclusion_residual(curve, fol, n_samples=64)
    assert worst <= 1e-9


def test_inclusion_skips_and_reports():
    fol = make_sublevel_foliation(make_function("norm", 2), 1.0, 5.0)
    traj = run_partition(fol, [3, 4], Partition.uniform(1, 5, 4))
    curve = PolylineCurve(traj.arclengths, traj.vertices)
    worst, skipped = inclusion_residual(curve, fol, n_samples=16, h_fd=0.3)
    assert skipped > 0 and worst <= 1e-6


# tangent continuity -------------------------------------------------------

def test_tangent_gap_segment():
    assert tangent_continuity(segment().polyline(), 1e-2) == pytest.approx(0.0, abs=1e-12)


def test_tangent_gap_corner():
    curve = PolylineCurve([0.0, 1.0, 2.0], [[0, 0], [1, 0], [1, 1]])
    # the sample grid need not hit the corner exactly
    assert 1.5 < tangent_continuity(curve, 1e-2) <= np.pi / 2 + 1e-12


def test_tangent_gap_too_short():
    with pytest.raises(DegenerateCurveError):
        tangent_continuity(segment().polyline(), 3.0)


# reference flow -----------------------------------------------------------

def test_reference_radial_closed_form():
    f = make_function("sqnorm", 2)
    ref = reference_flow(f, [3, 4], 4.0, step=1e-3)
    s = np.linspace(0, 4, 801)
    exact = np.outer(5 - s, [0.6, 0.8])
    assert np.max(np.linalg.norm(ref(s) - exact, axis=1)) < 1e-9
    assert ref.length == pytest.approx(4.0, abs=1e-12)


def test_reference_step_halving_ellipse():
    f = make_function("ellipsoid_quadratic", 2, {"weights": [0.25, 1.0]})
    r1 = reference_flow(f, [2, 1], 1.5, step=1e-4)
    r2 = reference_flow(f, [2, 1], 1.5, step=5e-5)
    assert np.linalg.norm(r1(r1.length) - r2(r2.length)) < 1e-8
    assert sup_distance(r1, r2, 1.5) < 1e-8


def test_reference_stop_level():
    f = make_function("ellipsoid_quadratic", 2, {"weights": [0.25, 1.0]})
    ref = reference_flow(f, [2, 1], 10.0, stop_level=0.25, step=1e-3)
    assert ref.reached_level and not ref.singular
    assert f(ref.points[-1]) == pytest.approx(0.25, abs=1e-10)


def test_reference_sqrt_norm_matches_norm():
    a = reference_flow(make_function("norm", 2), [3, 4], 3.5, step=1e-3)
    b = reference_flow(make_function("sqrt_norm", 2), [3, 4], 3.5, step=1e-3)
    assert sup_distance(a, b, 3.5) < 1e-12


def test_unnormalized_flow_traces_same_orbit():
    f = make_function("ellipsoid_quadratic", 2, {"weights": [0.25, 1.0]})
    a = reference_flow(f, [2, 1], 1.5, step=1e-4)
    b = reference_flow(f, [2, 1], 1.5, step=1e-4, normalized=False)
    assert sup_distance(a, b, min(a.length, b.length)) < 1e-6


def test_singular_flag():
    # reaching the minimiser of the norm drives the gradient below the floor
    f = make_function("sqnorm", 2)
    ref = reference_flow(f, [3, 4], 10.0, step=1e-3)
    assert ref.singular
    assert np.linalg.norm(ref.points[-1]) < 1e-7


def test_reference_needs_gradient_at_start():
    with pytest.raises(InputError):
        reference_flow(make_function("sqnorm", 2), [0, 0], 1.0)


# refinement limit vs flow -------------------------------------------------

def test_limit_curve_close_to_flow():
    fam = ParametricFamily("ellipsoid", {"shape": [[0.25, 0.0], [0.0, 1.0]], "center": [0.0, 0.0],
                                         "radius": {"base": 0.0, "rate": 1.0}})
    fol = make_parametric_foliation(fam, 0.5, np.sqrt(2.0))
    traj = run_partition(fol, [2, 1], Partition.uniform(0.5, np.sqrt(2.0), 512))
    f = make_function("ellipsoid_quadratic", 2, {"weights": [0.25, 1.0]})
    ref = reference_flow(f, [2, 1], 10.0, stop_level=0.25, step=1e-3)
    curve = PolylineCurve(traj.arclengths, traj.vertices)
    assert sup_distance(curve, ref, max(curve.length, ref.length)) < 5e-3
    sc = arclength_parametrize(traj, 1001)
    assert check_self_contracted(sc) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 2.0 * np.pi), st.integers(3, 200))
def test_exhaustive_bounds_sampled(angle, n):
    P = arc_points(angle, n)
    full = check_self_contracted(P, exhaustive=True)
    assert check_self_contracted(P, n_triples=200) <= full + 1e-15
    assert full <= arc_max_violation(angle) + 1e-12
