"""Robust bootstrap model selection for generalized linear models."""

from .bootstrap import BootstrapConfig, bias_adjusted_replicates, replicate_estimators, stratify
from .criterion import CriterionBreakdown, CriterionConfig, aic_bic
from .errors import (
    BootstrapDegeneracyError,
    ContractViolation,
    DataError,
    NumericError,
    RobustSelError,
    SingularDesignError,
)
from .estimators import EstimatorSpec, FitResult, ScaleEstimate, estimate_sigma, fit, fit_cr, fit_ml
from .glm_core import Dataset, ModelSubset, get_family, read_csv
from .robust_loss import HuberPsi, RhoFunction
from .selection import CandidateSet, CriterionEvaluator, all_submodels, select_backward, select_exhaustive
from .simulation import SimDesign, generate_dataset, run_experiment
from .theory_checks import counterexample, trace_monotonicity_check

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig", "BootstrapDegeneracyError", "CandidateSet", "ContractViolation", "CriterionBreakdown",
    "CriterionConfig", "CriterionEvaluator", "DataError", "Dataset", "EstimatorSpec", "FitResult", "HuberPsi",
    "ModelSubset", "NumericError", "RhoFunction", "RobustSelError", "ScaleEstimate", "SimDesign",
    "SingularDesignError", "aic_bic", "all_submodels", "bias_adjusted_replicates", "counterexample",
    "estimate_sigma", "fit", "fit_cr", "fit_ml", "generate_dataset", "get_family", "read_csv",
    "replicate_estimators", "run_experiment", "select_backward", "select_exhaustive", "stratify",
    "trace_monotonicity_check",
]
