"""Descent trajectories of convex foliations by the catching-up projection scheme."""

from .catching_up import (Partition, PolygonalTrajectory, PolylineCurve, SampledCurve,
                          arclength_parametrize, extend, refine, run_partition)
from .convex_geometry import (Ball, ConvexSet, Ellipsoid, Halfspace, Polytope, SublevelSet,
                              distance, normal_residual, project)
from .foliation import (ConvexFoliation, ParametricFamily, make_parametric_foliation,
                        make_sublevel_foliation, validate_nesting)
from .functions import QuasiconvexFunction, make_function
from .trajectory_analysis import (AnalysisReport, check_self_contracted, inclusion_residual,
                                  length_diameter_ratio, reference_flow, tangent_continuity)

__version__ = "0.1.0"
