"""Numerical holonomy, curvature and geodesic analysis for Walker-form
Lorentzian metrics on charts (x, y1..yn, z).

The package parses coefficient expressions with exact second-order
derivatives, assembles metric charts, computes connection and curvature
data, samples restricted holonomy algebras by parallel transport,
classifies them against the indecomposable type list, checks the
pointwise conditions for special screen holonomy, and integrates
geodesics of the pp-wave families with a completeness probe.
"""

__version__ = "0.1.0"

from .constructions import ConstructionSpec, build, bump_pair, flat_chart, sufficiently_generic_default
from .errors import NumericalError, ValidationError
from .expr import EvalDomainError, ExpressionError, ScalarField, parse_expression
from .holonomy import (
    AdaptedFrame,
    SamplingStrategy,
    adapted_frame,
    ambrose_singer_sample,
    classify_bbi,
    holonomy_report,
    lie_closure,
    screen_holonomy,
    stabilizer_decompose,
)
from .metric import CurvatureTensor, MetricChart, assemble_general, assemble_walker
from .structures import (
    TwoForm,
    check_hyperkahler,
    check_one_one,
    check_primitive,
    dual_lefschetz,
    g2_condition,
    spin7_condition,
    su_phase_check,
)
from .transport import (
    GeodesicState,
    Polyline,
    Rectangle,
    Trajectory,
    completeness_probe,
    geodesic,
    geodesic_ensemble,
    loop_transport,
    parallel_transport,
    ppwave_reduced,
)

__all__ = [
    "__version__",
    "AdaptedFrame",
    "ConstructionSpec",
    "CurvatureTensor",
    "EvalDomainError",
    "ExpressionError",
    "GeodesicState",
    "MetricChart",
    "NumericalError",
    "Polyline",
    "Rectangle",
    "SamplingStrategy",
    "ScalarField",
    "Trajectory",
    "TwoForm",
    "ValidationError",
    "adapted_frame",
    "ambrose_singer_sample",
    "assemble_general",
    "assemble_walker",
    "build",
    "bump_pair",
    "check_hyperkahler",
    "check_one_one",
    "check_primitive",
    "classify_bbi",
    "completeness_probe",
    "dual_lefschetz",
    "flat_chart",
    "g2_condition",
    "geodesic",
    "geodesic_ensemble",
    "holonomy_report",
    "lie_closure",
    "loop_transport",
    "parallel_transport",
    "parse_expression",
    "ppwave_reduced",
    "screen_holonomy",
    "spin7_condition",
    "stabilizer_decompose",
    "su_phase_check",
    "sufficiently_generic_default",
]
