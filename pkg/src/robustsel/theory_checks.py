"""Numerical checks of the structural conditions behind the criterion.

These are diagnostics only: model selection never calls into this module.
By default expectations are taken under the fitted model at the supplied
``beta`` (``mode="model"``); ``mode="empirical"`` replaces them by the
observed residual values as a cross-check.

The trace condition compares ``trace(Sigma_alpha Gamma_alpha)`` along a
nested chain of models. For ML the module also reports the diagonal sum
obtained by treating the ``p_alpha`` pivot rows of ``X_alpha`` as if they
formed the whole design. That sum equals the matrix trace only when the
ratio of the Gamma and Sigma weights is the same for every row (e.g. the
Gaussian family with a loss that never clips); in general the two differ.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import ContractViolation, ReorderingError, SingularDesignError
from .estimators import EstimatorSpec, ScaleEstimate
from .expectations import expect_standardized, huber_moments
from .glm_core import Dataset, GlmFamily, ModelSubset
from .robust_loss import HuberPsi, RhoFunction

MODES = ("model", "empirical")
PIVOT_RTOL = 1e-10


def _sigma(sigma) -> float:
    return sigma.sigma_hat if isinstance(sigma, ScaleEstimate) else float(sigma)


def _weights(n: int, weights) -> np.ndarray:
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ContractViolation(f"expected {n} weights, got shape {w.shape}")
    return w


def _model_pieces(dataset: Dataset, family: GlmFamily, alpha: ModelSubset, beta):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (alpha.p_alpha,):
        raise ContractViolation(f"beta has length {beta.shape}, model has {alpha.p_alpha} columns")
    Xa = dataset.design(alpha)
    eta = Xa @ beta
    family.check_domain(eta)
    return Xa, eta, family.h(eta), family.h1(eta), family.h2(eta), family.v(eta)


def psi_moments(dataset, family, alpha, beta, sigma, loss: RhoFunction = RhoFunction(), *, mode: str = "model"):
    """Per-row ``E psi(r_i)`` and ``E psi'(r_i)`` with ``r_i = (y_i - mu_i) / (sigma v_i)``."""
    if mode not in MODES:
        raise ContractViolation(f"mode must be one of {MODES}")
    s = _sigma(sigma)
    _, _, mu, _, _, v = _model_pieces(dataset, family, alpha, beta)
    scale = s * v
    if mode == "empirical":
        r = (dataset.y - mu) / scale
        return loss.psi(r), loss.psi_prime(r)
    e = expect_standardized(family, mu, scale, [loss.psi, loss.psi_prime], dispersion=s, kinks=loss.kinks)
    return e[0], e[1]


def gamma_weights(dataset, family, alpha, beta, sigma, loss=RhoFunction(), weights=None, *, mode="model"):
    """Diagonal ``sigma_i^-2 w_i (h'^2 E psi' - h'' E psi)`` of the Gamma matrix."""
    s = _sigma(sigma)
    _, _, _, h1, h2, v = _model_pieces(dataset, family, alpha, beta)
    e_psi, e_dpsi = psi_moments(dataset, family, alpha, beta, s, loss, mode=mode)
    w = _weights(dataset.n, weights)
    return w * (h1 * h1 * e_dpsi - h2 * e_psi) / (s * v) ** 2


def gamma_matrix(dataset, family, alpha, beta, sigma, loss=RhoFunction(), weights=None, *, mode="model"):
    """``Gamma = (2n)^-1 X^T W_Gamma X``: half the expected Hessian of the mean loss."""
    Xa = dataset.design(alpha)
    wg = gamma_weights(dataset, family, alpha, beta, sigma, loss, weights, mode=mode)
    G = (Xa * wg[:, None]).T @ Xa / (2.0 * dataset.n)
    return 0.5 * (G + G.T)


def _solve_psd(A: np.ndarray, what: str) -> np.ndarray:
    try:
        L = scipy.linalg.cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError(f"{what} is singular or not positive definite") from exc
    return scipy.linalg.cho_solve(L, np.eye(A.shape[0]))


def sigma_weights(dataset, family, alpha, beta, sigma) -> np.ndarray:
    s = _sigma(sigma)
    _, _, _, h1, _, v = _model_pieces(dataset, family, alpha, beta)
    return h1 * h1 / (s * v) ** 2


def ml_variance_matrix(dataset, family, alpha, beta, sigma) -> np.ndarray:
    """``n (X^T W_Sigma X)^-1`` with ``W_Sigma = diag(h'^2 / sigma_i^2)``."""
    Xa = dataset.design(alpha)
    ws = sigma_weights(dataset, family, alpha, beta, sigma)
    V = dataset.n * _solve_psd((Xa * ws[:, None]).T @ Xa, "X^T W_Sigma X")
    return 0.5 * (V + V.T)


@dataclass(frozen=True, eq=False)
class SandwichParts:
    M: np.ndarray
    Q: np.ndarray
    a: np.ndarray
    adiag: np.ndarray
    bdiag: np.ndarray


def cr_sandwich_parts(dataset, family, alpha, beta, sigma, spec: EstimatorSpec) -> SandwichParts:
    s = _sigma(sigma)
    Xa, _, mu, h1, _, v = _model_pieces(dataset, family, alpha, beta)
    n = dataset.n
    w = _weights(n, spec.mallows_weights)
    scale = s * v
    e_psi, e_rpsi, e_psi2 = huber_moments(family, mu, scale, spec.huber_c, dispersion=s)
    coef = w * h1 / scale
    adiag = coef * coef * e_psi2
    bdiag = w * h1 * h1 * e_rpsi / scale**2
    a = Xa.T @ (coef * e_psi) / n
    Q = (Xa * adiag[:, None]).T @ Xa / n - np.outer(a, a)
    M = (Xa * bdiag[:, None]).T @ Xa / n
    return SandwichParts(M, 0.5 * (Q + Q.T), a, adiag, bdiag)


def cr_variance_matrix(dataset, family, alpha, beta, sigma, spec: EstimatorSpec) -> np.ndarray:
    """Sandwich ``M^-1 Q M^-1`` of the robust estimator."""
    parts = cr_sandwich_parts(dataset, family, alpha, beta, sigma, spec)
    try:
        Minv = np.linalg.inv(parts.M)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError("M is singular") from exc
    if not np.all(np.isfinite(Minv)) or np.linalg.cond(parts.M) > 1e12:
        raise SingularDesignError("M is singular")
    V = Minv @ parts.Q @ Minv.T
    return 0.5 * (V + V.T)


def pivot_rows(Xa: np.ndarray) -> np.ndarray:
    """Rows of ``Xa`` whose square submatrix is nonsingular, chosen by pivoted QR of ``Xa^T``."""
    p = Xa.shape[1]
    if p == 0:
        return np.zeros(0, dtype=int)
    if Xa.shape[0] < p:
        raise ReorderingError(f"{Xa.shape[0]} rows cannot give a nonsingular {p}x{p} block")
    _, R, piv = scipy.linalg.qr(Xa.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d[p - 1] <= PIVOT_RTOL * d[0]:
        raise ReorderingError("no row permutation gives a nonsingular leading block")
    return np.sort(piv[:p])


@dataclass(frozen=True, eq=False)
class TraceDiagnostic:
    alpha: ModelSubset
    gamma_hat: np.ndarray
    sigma_hat_matrix: np.ndarray
    trace_product: float
    per_term_sum: float
    pivot_rows: np.ndarray

    def __post_init__(self) -> None:
        if not np.allclose(self.gamma_hat, self.gamma_hat.T, atol=1e-12):
            raise ContractViolation("gamma_hat must be symmetric")
        if not np.isfinite(self.trace_product):
            raise ContractViolation("trace product is not finite")


@dataclass(frozen=True)
class MonotonicityResult:
    diagnostics: tuple[TraceDiagnostic, ...]
    monotone: bool

    @property
    def steps(self) -> list[bool]:
        """``True`` at step ``k`` when the trace rose from model ``k-1`` to ``k`` (first entry always ``True``)."""
        t = [d.trace_product for d in self.diagnostics]
        return [True] + [b > a for a, b in zip(t, t[1:])]


def _chain_ok(nested: Sequence[ModelSubset], p: int) -> None:
    if not nested:
        raise ContractViolation("the nested chain is empty")
    for a in nested:
        a.check(p)
        if a.is_null:
            raise ContractViolation("models in the chain must be non-empty")
    for a, b in zip(nested, nested[1:]):
        if not (a.issubset(b) and a.p_alpha < b.p_alpha):
            raise ContractViolation(f"chain is not strictly nested at {a.label()} -> {b.label()}")


def trace_monotonicity_check(
    nested: Sequence[ModelSubset],
    dataset: Dataset,
    family: GlmFamily,
    beta_truth,
    sigma=1.0,
    loss: RhoFunction = RhoFunction(),
    spec: EstimatorSpec = EstimatorSpec("ml"),
    *,
    mode: str = "model",
) -> MonotonicityResult:
    """``trace(Sigma_alpha Gamma_alpha)`` along a nested chain of correct models.

    ``beta_truth`` has one entry per column of the dataset; each model uses
    its own entries, so every model in the chain must contain the support of
    ``beta_truth``. ``per_term_sum`` is the pivot-row diagonal sum
    ``0.5 sum_i W_Gamma,ii / W_Sigma,ii`` for ML and
    ``0.5 sum_i a_ii W_Gamma,ii / b_ii^2`` for the robust estimator.
    """
    nested = tuple(nested)
    _chain_ok(nested, dataset.p)
    beta_truth = np.asarray(beta_truth, dtype=float)
    if beta_truth.shape != (dataset.p,):
        raise ContractViolation(f"beta_truth must have {dataset.p} entries")
    support = set(np.flatnonzero(beta_truth).tolist())
    out = []
    for a in nested:
        if not support <= set(a.indices):
            raise ContractViolation(f"model {a.label(dataset)} is not a correct model")
        beta = beta_truth[list(a.indices)]
        wg = gamma_weights(dataset, family, a, beta, sigma, loss, spec.mallows_weights, mode=mode)
        Xa = dataset.design(a)
        G = (Xa * wg[:, None]).T @ Xa / (2.0 * dataset.n)
        G = 0.5 * (G + G.T)
        rows = pivot_rows(Xa)
        if spec.kind == "ml":
            S = ml_variance_matrix(dataset, family, a, beta, sigma)
            ws = sigma_weights(dataset, family, a, beta, sigma)
            per_term = 0.5 * float(np.sum(wg[rows] / ws[rows]))
        else:
            S = cr_variance_matrix(dataset, family, a, beta, sigma, spec)
            parts = cr_sandwich_parts(dataset, family, a, beta, sigma, spec)
            per_term = 0.5 * float(np.sum(parts.adiag[rows] * wg[rows] / parts.bdiag[rows] ** 2))
        out.append(TraceDiagnostic(a, G, S, float(np.trace(S @ G)), per_term, rows))
    t = [d.trace_product for d in out]
    return MonotonicityResult(tuple(out), all(b > a for a, b in zip(t, t[1:])))


def trace_difference(sigma_big, gamma_big, sigma_small, gamma_small) -> float:
    """``trace(Sigma_2 Gamma_2) - trace(Sigma_1 Gamma_1)`` for explicit matrices."""
    S2, G2, S1, G1 = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (sigma_big, gamma_big, sigma_small, gamma_small))
    return float(np.trace(S2 @ G2) - np.trace(S1 @ G1))


COUNTEREXAMPLE = {
    "sigma_2": np.array([[1.0, -0.5], [-0.5, 1.0]]),
    "gamma_2": np.array([[1.0, 0.2], [0.2, 0.1]]),
    "sigma_1": np.array([[1.0]]),
    "gamma_1": np.array([[1.0]]),
}


def counterexample() -> float:
    """Trace difference for two fixed nested-model matrices; it is negative (-0.1).

    Shows the trace condition can fail for arbitrary symmetric matrices.
    """
    c = COUNTEREXAMPLE
    return trace_difference(c["sigma_2"], c["gamma_2"], c["sigma_1"], c["gamma_1"])


def kappa_estimate(replicate_betas, m: int, sigma_matrix) -> float:
    """Ratio ``trace(m Cov_*(beta*)) / trace(Sigma)`` of bootstrap to analytic variance.

    Reported as a diagnostic; no target value is implied.
    """
    R = np.asarray(replicate_betas, dtype=float)
    S = np.atleast_2d(np.asarray(sigma_matrix, dtype=float))
    if R.ndim != 2 or R.shape[0] < 2 or R.shape[1] != S.shape[0]:
        raise ContractViolation("need at least two replicates matching the variance matrix")
    tr = float(np.trace(S))
    if not tr > 0:
        raise ContractViolation("variance matrix must have positive trace")
    return float(m * np.trace(np.atleast_2d(np.cov(R, rowvar=False))) / tr)
