"""Robust bootstrap selection criterion and the AIC/BIC baselines.

For model ``alpha`` fitted by estimator ``c``::

    M_n = sigma^2 * (M1 + k log(n) p_alpha / n + M2)

``M1`` is the mean clipped loss of the in-sample residuals and ``M2`` the
same loss averaged over bias-adjusted bootstrap replicates. Residuals are
standardized by ``sigma * v(eta_full)``, i.e. the full model's variance
function, for every candidate model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bootstrap import ReplicateSet, bias_adjusted_replicates
from .errors import ContractViolation, DomainError, NumericError, UnsupportedEstimatorError
from .estimators import FitResult, ScaleEstimate
from .glm_core import Dataset, GlmFamily, ModelSubset
from .robust_loss import RhoFunction


@dataclass(frozen=True)
class CriterionConfig:
    delta_k: float = 2.0
    loss: RhoFunction = RhoFunction()
    criterion_weights: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.delta_k > 0:
            raise ContractViolation("delta_k must be positive")
        if self.criterion_weights is not None:
            w = np.asarray(self.criterion_weights, dtype=float)
            if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ContractViolation("criterion weights must be finite and nonnegative")
            object.__setattr__(self, "criterion_weights", w)

    def weights(self, n: int) -> np.ndarray:
        if self.criterion_weights is None:
            return np.ones(n)
        if len(self.criterion_weights) != n:
            raise ContractViolation(f"{len(self.criterion_weights)} criterion weights for {n} rows")
        return self.criterion_weights

    def delta(self, n: int) -> float:
        return self.delta_k * float(np.log(n))


@dataclass(frozen=True)
class CriterionBreakdown:
    alpha: ModelSubset
    m1: float
    penalty: float
    m2: float
    total: float
    sigma_hat: float
    replicates_used: int = 0
    replicates_skipped: int = 0

    @property
    def p_alpha(self) -> int:
        return self.alpha.p_alpha

    @property
    def diagnostics(self) -> dict:
        return {"replicates_used": self.replicates_used, "replicates_skipped": self.replicates_skipped}


def _sigma(sigma: ScaleEstimate | float) -> float:
    return sigma.sigma_hat if isinstance(sigma, ScaleEstimate) else float(sigma)


def _full_scale(dataset: Dataset, family: GlmFamily, full_fit: FitResult, sigma) -> np.ndarray:
    eta_f = full_fit.eta if full_fit.eta is not None else dataset.design(full_fit.alpha) @ full_fit.beta_hat
    family.check_domain(eta_f)
    return _sigma(sigma) * family.v(eta_f)


def _require_converged(*fits: FitResult) -> None:
    for f in fits:
        if not f.converged:
            raise ContractViolation(f"fit of model {f.alpha.label()} did not converge")


def m1_in_sample(
    dataset: Dataset,
    family: GlmFamily,
    alpha: ModelSubset,
    fit: FitResult,
    full_fit: FitResult,
    sigma: ScaleEstimate | float,
    config: CriterionConfig,
) -> float:
    """Weighted mean of ``rho((y - h(eta_alpha)) / (sigma v(eta_full)))``."""
    _require_converged(fit, full_fit)
    if fit.alpha != alpha:
        raise ContractViolation("fit does not belong to model alpha")
    scale = _full_scale(dataset, family, full_fit, sigma)
    eta = dataset.design(alpha) @ fit.beta_hat if alpha.p_alpha else np.zeros(dataset.n)
    family.check_domain(eta)
    z = (dataset.y - family.h(eta)) / scale
    bad = ~np.isfinite(z)
    if bad.any():
        raise NumericError(f"non-finite standardized residual at row {int(np.flatnonzero(bad)[0])}")
    w = config.weights(dataset.n)
    return float(np.mean(w * config.loss.rho(z)))


def m2_prediction(
    dataset: Dataset,
    family: GlmFamily,
    alpha: ModelSubset,
    fit: FitResult,
    full_fit: FitResult,
    sigma: ScaleEstimate | float,
    reps: ReplicateSet,
    config: CriterionConfig,
) -> float:
    """Bootstrap average of the in-sample loss at bias-adjusted replicate coefficients."""
    _require_converged(fit, full_fit)
    scale = _full_scale(dataset, family, full_fit, sigma)
    w = config.weights(dataset.n)
    if alpha.p_alpha == 0:
        eta = np.zeros((dataset.n, max(reps.used, 1)))
    else:
        adj = bias_adjusted_replicates(reps, fit.beta_hat)
        with np.errstate(over="ignore", invalid="ignore"):
            eta = dataset.design(alpha) @ adj.T
    bad = ~family.domain(eta)
    if bad.any():
        i, b = np.argwhere(bad)[0]
        raise DomainError(f"replicate {b}: linear predictor outside {family.name} domain at row {i}")
    with np.errstate(over="ignore", invalid="ignore"):
        z = (dataset.y[:, None] - family.h(eta)) / scale[:, None]
    bad = ~np.isfinite(z)
    if bad.any():
        i, b = np.argwhere(bad)[0]
        raise NumericError(f"replicate {b}: non-finite standardized residual at row {i}")
    per_rep = np.mean(w[:, None] * config.loss.rho(z), axis=0)
    return float(np.mean(per_rep))


def mn_total(
    m1: float,
    m2: float,
    alpha: ModelSubset,
    n: int,
    sigma: ScaleEstimate | float,
    config: CriterionConfig,
    reps: ReplicateSet | None = None,
) -> CriterionBreakdown:
    if not (np.isfinite(m1) and np.isfinite(m2)):
        raise ContractViolation("criterion components must be finite")
    s = _sigma(sigma)
    penalty = config.delta(n) * alpha.p_alpha / n
    total = s * s * (m1 + penalty + m2)
    used = reps.used if reps is not None else 0
    skipped = reps.skipped if reps is not None else 0
    return CriterionBreakdown(alpha, float(m1), float(penalty), float(m2), float(total), s, used, skipped)


def aic_bic(fit: FitResult, n: int) -> dict:
    """``AIC = -2 loglik + 2 p_alpha`` and ``BIC = -2 loglik + p_alpha log n`` (ML fits only)."""
    if fit.estimator.kind != "ml" or fit.loglik is None:
        raise UnsupportedEstimatorError("AIC/BIC need a maximum-likelihood fit")
    p = fit.alpha.p_alpha
    return {"aic": -2.0 * fit.loglik + 2.0 * p, "bic": -2.0 * fit.loglik + p * float(np.log(n))}
