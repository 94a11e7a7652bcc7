"""Projectively flat (alpha, beta)-metrics of scalar flag curvature on spheres:
the profile ODE, (u, v, w) gauges, navigation data, geodesics and flag curvature.
"""
from .curvature import CurvatureDomain, CurvatureModel, closed_form_extrema, extrema
from .gauge import canonical_gauge, solve_gauge_ivp, square_gauge
from .geodesic import GaugedDelta, closed_geodesic_length, length_L1, length_L2
from .phi import MetricParams, regularity_range, solve_phi
from .sphere import NavigationBundle, SphereData

__version__ = "0.1.0"

__all__ = [
    "CurvatureDomain", "CurvatureModel", "GaugedDelta", "MetricParams", "NavigationBundle",
    "SphereData", "canonical_gauge", "closed_form_extrema", "closed_geodesic_length", "extrema",
    "length_L1", "length_L2", "regularity_range", "solve_gauge_ivp", "solve_phi", "square_gauge",
]
