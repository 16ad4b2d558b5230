"""Certified identity factorizations through operators acting on finite truncations of
independently placed Haar expansions."""

from .dyadic import ROOT, UNIT, DyadicInterval, IndexUniverse, OmegaIndex, omega_compare
from .exceptions import (FaithfulSystemError, HaarfactError, HypothesisError, LevelOverflowError,
                         ModeMismatchError, PartitionError, ResolutionError, SelectionError,
                         SpanError, StageFailure, UnsupportedSpaceError, VerificationMismatch)
from .faithful import (FiniteFaithfulSystem, extend_to_faithful, faithful_from_frequencies,
                       gamlen_gaudet_select, randomize_faithful, verify_system)
from .linalg import HaarOperator, OmegaCoefficients, OmegaOperator
from .norms import (ExpectationStrategy, NormResult, SpaceSpec, certified_column_bound,
                    hardy_norm, omega_norm, operator_norm_lower)
from .omega import (OmegaBasis, OmegaFaithfulSystem, build_omega_basis, compress_component,
                    conditional_expectation, embed_component, lift_system)
from .operators import build_AB_almost, build_AB_hat, is_delta_large, multiplier_zero_one
from .pipeline import (FactorizationCertificate, PipelineConfig, StageCertificate, diagonalize,
                       endgame_invert, formulas, full_factor, reduce_positive_diagonal,
                       scalar_reduce, stabilize_levels)
from .stepfunc import HaarCoefficients, StepFunction, haar_analyze, haar_function, haar_synthesize
from .verify import run_verify

__version__ = "0.1.0"

__all__ = [
    "ROOT", "UNIT", "DyadicInterval", "IndexUniverse", "OmegaIndex", "omega_compare",
    "FaithfulSystemError", "HaarfactError", "HypothesisError", "LevelOverflowError",
    "ModeMismatchError", "PartitionError", "ResolutionError", "SelectionError", "SpanError",
    "StageFailure", "UnsupportedSpaceError", "VerificationMismatch", "FiniteFaithfulSystem",
    "extend_to_faithful", "faithful_from_frequencies", "gamlen_gaudet_select",
    "randomize_faithful", "verify_system", "HaarOperator", "OmegaCoefficients", "OmegaOperator",
    "ExpectationStrategy", "NormResult", "SpaceSpec", "certified_column_bound", "hardy_norm",
    "omega_norm", "operator_norm_lower", "OmegaBasis", "OmegaFaithfulSystem", "build_omega_basis",
    "compress_component", "conditional_expectation", "embed_component", "lift_system",
    "build_AB_almost", "build_AB_hat", "is_delta_large", "multiplier_zero_one",
    "FactorizationCertificate", "PipelineConfig", "StageCertificate", "diagonalize",
    "endgame_invert", "formulas", "full_factor", "reduce_positive_diagonal", "scalar_reduce",
    "stabilize_levels", "HaarCoefficients", "StepFunction", "haar_analyze", "haar_function",
    "haar_synthesize", "run_verify",
]
