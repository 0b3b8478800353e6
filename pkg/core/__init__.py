"""
Core Module - Distance-Squared Mappings on Plane Curves

This package decides when D_p o gamma is an immersion with normal crossings
and searches for curve-anchored pairs where it is.

Components:
- curve_model.py: Parametric curves, curve documents and the builtin catalog
- diffgeo.py: Curvature and the flat-arc condition (*)
- dsq_core.py: Distance-squared mappings and singular points
- crossing_analysis.py: Double points and the normal-crossings verdict
- affine_normalizer.py: Affine conjugation between collinear anchor pairs
- generic_search.py / graph.py: Constructive search as a LangGraph pipeline
- density_lab.py: Density scans and case studies
- reports.py / render.py: JSON reports and SVG renders
"""

__version__ = "0.1.0"

from .affine_normalizer import AffineMap2, build_conjugator, lambda_coefficients, verify_conjugation
from .crossing_analysis import CompositionReport, analyze, find_double_points
from .curve_model import Arc, Curve, CurveLoc, builtin_curve, load_curve, load_curve_file
from .density_lab import density_scan, example2_case, remark_line_case, stadium_case
from .diffgeo import curvature, satisfies_star
from .dsq_core import AnchorPair, Composition, find_singular_points
from .errors import DsqError, SearchError
from .generic_search import find_generic_anchors, find_nondegenerate_pair
from .settings import Tolerances

__all__ = [
    "__version__",
    "AffineMap2",
    "AnchorPair",
    "Arc",
    "CompositionReport",
    "Composition",
    "Curve",
    "CurveLoc",
    "DsqError",
    "SearchError",
    "Tolerances",
    "analyze",
    "build_conjugator",
    "builtin_curve",
    "curvature",
    "density_scan",
    "example2_case",
    "find_double_points",
    "find_generic_anchors",
    "find_nondegenerate_pair",
    "find_singular_points",
    "lambda_coefficients",
    "load_curve",
    "load_curve_file",
    "remark_line_case",
    "satisfies_star",
    "stadium_case",
    "verify_conjugation",
]
