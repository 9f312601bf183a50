"""Covariate analysis of tail-normalized biometric verification scores."""
from .covariates import DEFAULT_SPEC, Covariate, CovariateSpec, DesignMatrix, Scenario, build_design, scenario_vector
from .data_model import DropLog, ScoreTable, apply_drop_rules, ingest_scores, write_scores
from .errors import CovfarError, NumericalError, ValidationError
from .lmm import CoefficientStat, FittedModel, fit_reml, profiled_loglik, wald_stats
from .metrics import RocPoint, empirical_far, empirical_tar, roc_curve, threshold_at_far
from .normalization import NormalizationMap, NormalizedTable, apply_norm, fit_tail_map, normalize_table
from .prediction import FarEstimate, load_paper_coefficients, predict_far
from .synthetic import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_SPEC",
    "Covariate",
    "CovariateSpec",
    "DesignMatrix",
    "Scenario",
    "build_design",
    "scenario_vector",
    "DropLog",
    "ScoreTable",
    "apply_drop_rules",
    "ingest_scores",
    "write_scores",
    "CovfarError",
    "NumericalError",
    "ValidationError",
    "CoefficientStat",
    "FittedModel",
    "fit_reml",
    "profiled_loglik",
    "wald_stats",
    "RocPoint",
    "empirical_far",
    "empirical_tar",
    "roc_curve",
    "threshold_at_far",
    "NormalizationMap",
    "NormalizedTable",
    "apply_norm",
    "fit_tail_map",
    "normalize_table",
    "FarEstimate",
    "load_paper_coefficients",
    "predict_far",
    "SynthConfig",
    "generate",
]
