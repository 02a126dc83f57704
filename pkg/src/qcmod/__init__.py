"""Numerical tools for angular dilatation, curve-family modulus and isolated singularities of spatial maps."""

from .core import (
    Annulus, CellGrid, DimensionError, DomainError, PreconditionError, QCError, ball_volume_constant,
    build_sphere_quadrature, shell_integral, sphere_area_constant,
)
from .mapping import CATALOG, MappingField, catalog
from .dilatation import angular_dilatation, angular_l, dilatation_field, inner_dilatation
from .modulus import (
    CurveFamily, InfeasibleError, discrete_modulus, half_sphere_ray_modulus, ring_modulus, sample_ring_family,
)
from .conditions import divergence_integrals, fmo_test, loglog_growth_test, spherical_mean
from .analysis import (
    ClassifyParams, Route, beta_constant, classify_singularity, distortion_bound, verify_vaisala,
)

__all__ = [
    "Annulus", "CellGrid", "DimensionError", "DomainError", "PreconditionError", "QCError",
    "ball_volume_constant", "build_sphere_quadrature", "shell_integral", "sphere_area_constant",
    "CATALOG", "MappingField", "catalog",
    "angular_dilatation", "angular_l", "dilatation_field", "inner_dilatation",
    "CurveFamily", "InfeasibleError", "discrete_modulus", "half_sphere_ray_modulus", "ring_modulus",
    "sample_ring_family",
    "divergence_integrals", "fmo_test", "loglog_growth_test", "spherical_mean",
    "ClassifyParams", "Route", "beta_constant", "classify_singularity", "distortion_bound", "verify_vaisala",
]
__version__ = "0.1.0"
