"""Finite-dimensional noncommutative geometry: spectral triples, gauge
categories, connections on Morita bimodules, certified spectral distances,
and truncations of the Moyal plane."""

from .algebra import (
    MatrixAlgebra,
    State,
    algebra_from_basis,
    diagonal_algebra,
    direct_sum,
    full_matrix_algebra,
    tensor_identity,
    vector_state,
)
from .connections import (
    Connection,
    Correspondence,
    ProjectiveModule,
    RectBimodule,
    compose_correspondences,
    compose_fluctuations,
    fluctuate,
    fluctuate_quotient,
    fluctuation_correspondence,
    free_module,
    grassmannian_connection,
    identity_correspondence,
    inner_fluctuation,
    similarity_check,
)
from .distance import DistanceResult, distance_matrix, spectral_distance, spectral_distance_even
from .errors import (
    ArgumentError,
    CompositionError,
    DimensionError,
    DomainError,
    NCGeomError,
    ParseError,
    TruncationError,
)
from .gauge import GaugeCategory, GaugeMorphism, is_initial, is_isomorphism, mor, no_final_object_witness
from .report import ValidationReport
from .triple import SpectralTriple, check_axioms, omega1, unitary_equivalent, wigner_double, wigner_state

__version__ = "0.1.0"
