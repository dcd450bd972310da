"""Placement optimization and estimation benchmarks for sparse arrays of subarrays."""
from .beampattern import (BeamAttributes, PatternField, beam_attributes, directivity,
                          evaluate_pattern, extract_msll, mainlobe_ellipse)
from .bounds import (BoundCurve, FisherInfo, bound_curve, crb_rmse, noncoherent_pe,
                     zzb_directional, zzb_rmse)
from .compressive import MeasurementMatrix, compressive_nomp, draw_measurement, isometry_ratio
from .errors import (ConfigError, ConstraintViolation, DegenerateGeometry, InfeasibleInstance,
                     InvalidArgument, NumericalFailure, SubarrayError)
from .estimation import (EstimationResult, Snapshot, SteeringDictionary, make_scenario,
                         make_steering_dictionary, match_errors, metrics, mle_single,
                         newton_refine, nomp, synthesize)
from .geometry import (DesignGrid, ElementLayout, Pose, ShapeSignature, SuperArrayConfig,
                       build_subarray_layout, eigen_perturbation_bound, expand_super_array,
                       make_design_grid, shape_signature, vacancy_search)
from .placement import (Dictionary, ObjectiveWeights, build_dictionary, local_refine,
                        normalize_objective, select_optimum, weighted_cost)

__version__ = "0.1.0"
