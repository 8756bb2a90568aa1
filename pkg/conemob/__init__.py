from conemob import corpus, data, error, parsing, verify
from conemob.canonical import Block, PairBlocks, canonical_matrices, canonical_pair_form, jordan_structure
from conemob.cone import (
    ConeBuild,
    ConeManifold,
    ExtendedFields,
    ExtendedSolution,
    build_cone,
    check_hom,
    cone_manifold,
    glue_product,
    pack_parallel,
    unpack_parallel,
)
from conemob.expr import Expr, parse, try_parse
from conemob.geometry import GeometryAtPoint, christoffel, cov_deriv, riemann
from conemob.mobility import MobilityReport, SearchParams, cone_mobility, degree, extended_residual, search_B
from conemob.model import MetricSpec, TensorField
from conemob.pairs import a_lambda_of_pair, analyze_pair, barB, check_geodesic_equiv, phi_of_pair
from conemob.prolong import EngineParams, LinearConnectionSpec, flat_section_dim

__version__ = "0.1.0"

__all__ = [
    "MetricSpec",
    "TensorField",
    "Expr",
    "parse",
    "try_parse",
    "GeometryAtPoint",
    "christoffel",
    "riemann",
    "cov_deriv",
    "EngineParams",
    "LinearConnectionSpec",
    "flat_section_dim",
    "ConeBuild",
    "ConeManifold",
    "ExtendedFields",
    "ExtendedSolution",
    "build_cone",
    "check_hom",
    "cone_manifold",
    "glue_product",
    "pack_parallel",
    "unpack_parallel",
    "MobilityReport",
    "SearchParams",
    "degree",
    "cone_mobility",
    "search_B",
    "extended_residual",
    "phi_of_pair",
    "a_lambda_of_pair",
    "check_geodesic_equiv",
    "barB",
    "analyze_pair",
    "Block",
    "PairBlocks",
    "jordan_structure",
    "canonical_pair_form",
    "canonical_matrices",
    "corpus",
    "data",
    "error",
    "parsing",
    "verify",
]

from loguru import logger

logger.disable("conemob")
