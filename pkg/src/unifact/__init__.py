"""Unipotent factorization of SL_n matrices: symbolic last-row maps, shear
sprays, constructive factorizations and path tracking."""

__version__ = "0.1.0"

from .polyring import ExactComplex, Poly, VarId
from .unipotent import ComplexMatrix, FactorChain, ParamVector, phi_eval, psi_eval
from .submersion import symbolic_components, singular_image_check, submersive_at
from .spray import ShearField, fiber_chart, shear_field_flow, span_rank
from .factor import (ElementaryFactor, PolyMatrix2, factor_constant, factor_sl2_poly,
                     preimage_last_row, verify_factorization)
from .tracker import PathProblem, factor_matrix_path, track_path

__all__ = [
    "__version__",
    "ExactComplex", "Poly", "VarId",
    "ComplexMatrix", "FactorChain", "ParamVector", "phi_eval", "psi_eval",
    "symbolic_components", "singular_image_check", "submersive_at",
    "ShearField", "fiber_chart", "shear_field_flow", "span_rank",
    "ElementaryFactor", "PolyMatrix2", "factor_constant", "factor_sl2_poly",
    "preimage_last_row", "verify_factorization",
    "PathProblem", "factor_matrix_path", "track_path",
]
