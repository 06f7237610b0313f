"""Maximum-likelihood (IRLS) and robust Mallows/Huber quasi-likelihood fits.

Both solvers work on plain arrays internally (``_fit_ml_arrays`` and
``_fit_cr_arrays``) so that bootstrap replicates can call them without
rebuilding a :class:`Dataset` per resample. Estimating equations are
reported as row means, so ``tol`` does not scale with ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import (
    ContractViolation,
    DegenerateScaleError,
    DomainError,
    NumericError,
    SingularDesignError,
)
from .expectations import huber_moments
from .glm_core import Dataset, GlmFamily, ModelSubset, linear_predictor
from .robust_loss import DEFAULT_HUBER_C, HuberPsi

ESTIMATOR_KINDS = ("ml", "cr")
SCALE_METHODS = ("fixed-one", "pearson-moment", "mad")
RANK_RTOL = 1e-10
MAX_HALVINGS = 20


@dataclass(frozen=True)
class EstimatorSpec:
    """Estimator type and solver settings.

    ``mallows_weights`` are the covariate weights ``w(x_i)`` of the robust
    estimator; ``None`` means unit weights (the Huber quasi-likelihood fit).
    """

    kind: str = "ml"
    huber_c: float = DEFAULT_HUBER_C
    mallows_weights: Optional[np.ndarray] = field(default=None, compare=False)
    max_iter: int = 100
    tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.kind not in ESTIMATOR_KINDS:
            raise ContractViolation(f"estimator kind must be one of {ESTIMATOR_KINDS}, got {self.kind!r}")
        if not self.huber_c > 0:
            raise ContractViolation("huber_c must be positive")
        if self.max_iter < 1 or not self.tol > 0:
            raise ContractViolation("max_iter and tol must be positive")
        if self.mallows_weights is not None:
            w = np.asarray(self.mallows_weights, dtype=float)
            if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ContractViolation("mallows_weights must be a strictly positive finite vector")
            w.setflags(write=False)
            object.__setattr__(self, "mallows_weights", w)

    @property
    def label(self) -> str:
        return self.kind


@dataclass(frozen=True, eq=False)
class FitResult:
    alpha: ModelSubset
    beta_hat: np.ndarray
    converged: bool
    iterations: int
    pearson_residuals: np.ndarray
    estimator: EstimatorSpec
    loglik: Optional[float] = None
    score_norm: float = float("nan")
    eta: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class ScaleEstimate:
    sigma_hat: float
    method: str
    source_model: ModelSubset

    def __post_init__(self) -> None:
        if not (np.isfinite(self.sigma_hat) and self.sigma_hat > 0):
            raise DegenerateScaleError(f"scale estimate must be positive and finite, got {self.sigma_hat!r}")


def fixed_scale(alpha: ModelSubset = ModelSubset(), sigma: float = 1.0) -> ScaleEstimate:
    return ScaleEstimate(float(sigma), "fixed-one" if sigma == 1.0 else "fixed", alpha)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def check_rank(Xa: np.ndarray) -> None:
    """Raise :class:`SingularDesignError` unless ``Xa`` has full column rank."""
    if Xa.shape[1] == 0:
        return
    if Xa.shape[0] < Xa.shape[1]:
        raise SingularDesignError(f"{Xa.shape[0]} rows for {Xa.shape[1]} columns")
    s = np.linalg.svd(Xa, compute_uv=False)
    if not np.all(np.isfinite(s)) or s[-1] <= RANK_RTOL * s[0]:
        raise SingularDesignError("design matrix is rank deficient")


def _moments(family: GlmFamily, eta: np.ndarray):
    family.check_domain(eta)
    return family.h(eta), family.h1(eta), family.v(eta)


def pearson_residuals(dataset: Dataset, family: GlmFamily, alpha: ModelSubset, beta) -> np.ndarray:
    """``(y - h(eta)) / v(eta)`` at ``eta = X_alpha beta``."""
    eta = linear_predictor(dataset, alpha, beta)
    mu, _, v = _moments(family, eta)
    return (dataset.y - mu) / v


def ml_score(y, Xa, family: GlmFamily, beta) -> np.ndarray:
    """Mean ML score ``n^-1 X^T [h'(y - mu) / v^2]``."""
    eta = Xa @ beta
    mu, h1, v = _moments(family, eta)
    return Xa.T @ (h1 * (y - mu) / (v * v)) / len(y)


def _ml_dispersion(family: GlmFamily, y, mu, v, p: int) -> float:
    if family.fixed_dispersion:
        return 1.0
    n = len(y)
    if family.kind == "gaussian":
        return float(np.sqrt(np.sum((y - mu) ** 2) / n))
    dof = max(n - p, 1)
    return float(np.sqrt(np.sum(((y - mu) / v) ** 2) / dof))


def _fit_ml_arrays(y, Xa, family: GlmFamily, spec: EstimatorSpec, beta0=None):
    """IRLS with step halving. Returns (beta, converged, iterations, score_norm)."""
    n, p = Xa.shape
    if p == 0:
        return np.zeros(0), True, 0, 0.0
    check_rank(Xa)

    def loglik_at(eta):
        try:
            mu, _, v = _moments(family, eta)
        except DomainError:
            return -np.inf
        if not np.all(np.isfinite(mu)):
            return -np.inf
        if family.kind == "gaussian":
            return -0.5 * float(np.sum((y - mu) ** 2))
        if family.kind == "gamma":
            if np.any(mu <= 0):
                return -np.inf
            return float(np.sum(-y / mu - np.log(mu)))
        return family.loglik(y, mu)

    if beta0 is None:
        eta = family.start_eta(y)
        beta = None
    else:
        beta = np.asarray(beta0, dtype=float).copy()
        eta = Xa @ beta
    ll_old = -np.inf if beta is None else loglik_at(eta)
    score_norm = np.inf
    it = 0
    for it in range(1, spec.max_iter + 1):
        try:
            mu, h1, v = _moments(family, eta)
        except DomainError:
            return (beta if beta is not None else np.zeros(p)), False, it, np.inf
        w = h1 * h1 / (v * v)
        if not (np.all(np.isfinite(w)) and np.all(w > 0)):
            return (beta if beta is not None else np.zeros(p)), False, it, np.inf
        z = eta + (y - mu) / h1
        Xw = Xa * w[:, None]
        try:
            new = np.linalg.solve(Xw.T @ Xa, Xw.T @ z)
        except np.linalg.LinAlgError:
            return (beta if beta is not None else np.zeros(p)), False, it, np.inf
        if beta is not None:
            step = new - beta
            ll_new = loglik_at(Xa @ new)
            k = 0
            while not (ll_new >= ll_old - 1e-12 * abs(ll_old)) and k < MAX_HALVINGS:
                step *= 0.5
                new = beta + step
                ll_new = loglik_at(Xa @ new)
                k += 1
            if not np.isfinite(ll_new):
                return beta, False, it, np.inf
            ll_old = ll_new
        else:
            ll_old = loglik_at(Xa @ new)
        beta = new
        eta = Xa @ beta
        if not np.all(np.isfinite(eta)):
            return beta, False, it, np.inf
        try:
            score_norm = float(np.max(np.abs(ml_score(y, Xa, family, beta))))
        except DomainError:
            return beta, False, it, np.inf
        if score_norm <= spec.tol:
            return beta, True, it, score_norm
    return beta, False, it, score_norm


def fit_ml(dataset: Dataset, family: GlmFamily, alpha: ModelSubset, spec: EstimatorSpec | None = None) -> FitResult:
    """Maximum-likelihood fit of model ``alpha`` by iteratively reweighted least squares.

    Raises :class:`SingularDesignError` for a rank-deficient design. A fit
    that does not converge within ``spec.max_iter`` iterations is returned
    with ``converged=False``.
    """
    spec = spec or EstimatorSpec("ml")
    Xa = dataset.design(alpha)
    y = dataset.y
    beta, converged, iters, snorm = _fit_ml_arrays(y, Xa, family, spec)
    eta = Xa @ beta if alpha.p_alpha else np.zeros(dataset.n)
    loglik = None
    resid = np.full(dataset.n, np.nan)
    try:
        mu, _, v = _moments(family, eta)
        resid = (y - mu) / v
        disp = _ml_dispersion(family, y, mu, v, alpha.p_alpha)
        loglik = family.loglik(y, mu, disp)
    except (DomainError, FloatingPointError):
        converged = False
    if not np.all(np.isfinite(resid)):
        converged = False
    return FitResult(alpha, beta, converged, iters, resid, spec, loglik, snorm, eta)


# ---------------------------------------------------------------------------
# Robust quasi-likelihood estimator
# ---------------------------------------------------------------------------


class _CRPieces:
    """Per-observation quantities of the robust estimating equation at one beta."""

    def __init__(self, y, Xa, family, huber, sigma, weights, beta):
        eta = Xa @ beta
        mu, h1, v = _moments(family, eta)
        s = sigma * v
        r = (y - mu) / s
        e_psi, e_rpsi, _ = huber_moments(family, mu, s, huber.c, dispersion=sigma)
        coef = weights * h1 / s
        self.mu, self.h1, self.v, self.r = mu, h1, v, r
        self.e_psi, self.e_rpsi = e_psi, e_rpsi
        self.coef = coef
        self.value = Xa.T @ (coef * (huber(r) - e_psi)) / len(y)
        # expected negative Jacobian: n^-1 X^T diag(w h'^2 E[r psi_c(r)] / (sigma v)^2) X
        self.bdiag = weights * h1 * h1 * e_rpsi / (s * s)
        self.M = (Xa * self.bdiag[:, None]).T @ Xa / len(y)


def cr_estimating_function(y, Xa, family, spec: EstimatorSpec, sigma: float, beta, weights=None) -> np.ndarray:
    """Mean robust estimating function at ``beta`` (zero at the estimate)."""
    w = np.ones(len(y)) if weights is None else weights
    return _CRPieces(y, Xa, family, HuberPsi(spec.huber_c), sigma, w, np.asarray(beta, dtype=float)).value


def _cr_scoring(y, Xa, family, spec, huber, sigma, w, beta0, damped: bool):
    """Fisher scoring with the expected Jacobian ``M``.

    Undamped steps are only shortened when they leave the family domain or
    produce non-finite values. With ``damped`` a step must also lower the
    sup-norm of the estimating function.
    """
    beta = np.asarray(beta0, dtype=float).copy()

    def pieces(b):
        try:
            pc = _CRPieces(y, Xa, family, huber, sigma, w, b)
        except NumericError:
            return None
        if not (np.all(np.isfinite(pc.value)) and np.all(np.isfinite(pc.M))):
            return None
        return pc

    cur = pieces(beta)
    if cur is None:
        return beta, False, 0, np.inf
    norm = float(np.max(np.abs(cur.value)))
    for it in range(1, spec.max_iter + 1):
        if norm <= spec.tol:
            return beta, True, it - 1, norm
        try:
            step = np.linalg.solve(cur.M, cur.value)
        except np.linalg.LinAlgError:
            return beta, False, it, norm
        if not np.all(np.isfinite(step)):
            return beta, False, it, norm
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + t * step
            nxt = pieces(cand)
            if nxt is not None:
                cand_norm = float(np.max(np.abs(nxt.value)))
                if not damped or cand_norm < norm:
                    break
            t *= 0.5
        else:
            return beta, False, it, norm
        beta, cur, norm = cand, nxt, cand_norm
    return beta, norm <= spec.tol, spec.max_iter, norm


def _fit_cr_arrays(y, Xa, family: GlmFamily, spec: EstimatorSpec, sigma: float, beta0, weights=None):
    """Solve the robust estimating equations from ``beta0``.

    Plain Fisher scoring is tried first; if it fails, a damped variant, and
    finally MINPACK's hybrid method on the same equations.
    """
    n, p = Xa.shape
    if p == 0:
        return np.zeros(0), True, 0, 0.0
    check_rank(Xa)
    huber = HuberPsi(spec.huber_c)
    w = np.ones(n) if weights is None else weights
    total = 0
    for damped in (False, True):
        beta, ok, iters, norm = _cr_scoring(y, Xa, family, spec, huber, sigma, w, beta0, damped)
        total += iters
        if ok:
            return beta, True, total, norm

    def equations(b):
        try:
            val = _CRPieces(y, Xa, family, huber, sigma, w, b).value
        except NumericError:
            return np.full(p, 1e10)
        return val if np.all(np.isfinite(val)) else np.full(p, 1e10)

    with np.errstate(all="ignore"):
        sol = optimize.root(equations, np.asarray(beta0, dtype=float), method="hybr", options={"xtol": 1e-13})
    norm = float(np.max(np.abs(equations(sol.x))))
    total += int(sol.nfev)
    if norm <= spec.tol:
        return sol.x, True, total, norm
    return beta, False, total, float(np.max(np.abs(equations(beta))))


def fit_cr(
    dataset: Dataset,
    family: GlmFamily,
    alpha: ModelSubset,
    spec: EstimatorSpec,
    sigma: ScaleEstimate | float = 1.0,
    *,
    start=None,
) -> FitResult:
    """Robust Mallows/Huber quasi-likelihood fit.

    Solves ``sum_i w_i x_i h'_i / (sigma v_i) [psi_c(r_i) - E psi_c(r_i)] = 0``
    with ``r_i = (y_i - mu_i) / (sigma v_i)``. The expectation term is the
    Fisher-consistency correction. Starts from the ML fit unless ``start``
    is given.
    """
    if spec.kind != "cr":
        spec = EstimatorSpec("cr", spec.huber_c, spec.mallows_weights, spec.max_iter, spec.tol)
    s = sigma.sigma_hat if isinstance(sigma, ScaleEstimate) else float(sigma)
    weights = spec.mallows_weights
    if weights is not None and len(weights) != dataset.n:
        raise ContractViolation(f"{len(weights)} Mallows weights for {dataset.n} rows")
    Xa = dataset.design(alpha)
    y = dataset.y
    if start is None and alpha.p_alpha:
        start, ml_ok, *_ = _fit_ml_arrays(y, Xa, family, EstimatorSpec("ml", max_iter=spec.max_iter, tol=spec.tol))
        if not np.all(np.isfinite(start)):
            start = np.zeros(alpha.p_alpha)
    elif start is None:
        start = np.zeros(0)
    beta, converged, iters, norm = _fit_cr_arrays(y, Xa, family, spec, s, start, weights)
    eta = Xa @ beta if alpha.p_alpha else np.zeros(dataset.n)
    try:
        mu, _, v = _moments(family, eta)
        resid = (y - mu) / v
    except DomainError:
        resid = np.full(dataset.n, np.nan)
        converged = False
    if not np.all(np.isfinite(resid)):
        converged = False
    return FitResult(alpha, beta, converged, iters, resid, spec, None, norm, eta)


def fit(
    dataset: Dataset,
    family: GlmFamily,
    alpha: ModelSubset,
    spec: EstimatorSpec,
    sigma: ScaleEstimate | float = 1.0,
) -> FitResult:
    """Dispatch on ``spec.kind``."""
    if spec.kind == "ml":
        return fit_ml(dataset, family, alpha, spec)
    return fit_cr(dataset, family, alpha, spec, sigma)


# ---------------------------------------------------------------------------
# Scale
# ---------------------------------------------------------------------------


def default_scale_method(family: GlmFamily) -> str:
    return "fixed-one" if family.fixed_dispersion else "mad"


def sigma_from_residuals(residuals, method: str, dof: int | None = None) -> float:
    r = np.asarray(residuals, dtype=float)
    if method == "fixed-one":
        return 1.0
    if method == "pearson-moment":
        dof = len(r) if dof is None else dof
        if dof <= 0:
            raise DegenerateScaleError("no residual degrees of freedom")
        s = float(np.sqrt(np.sum(r * r) / dof))
    elif method == "mad":
        s = float(1.4826 * np.median(np.abs(r - np.median(r))))
    else:
        raise ContractViolation(f"scale method must be one of {SCALE_METHODS}, got {method!r}")
    if not (np.isfinite(s) and s > 0):
        raise DegenerateScaleError(f"{method} scale estimate is {s!r}")
    return s


def estimate_sigma(dataset: Dataset, family: GlmFamily, full_fit: FitResult, method: str | None = None) -> ScaleEstimate:
    """Scale estimate from the full model's Pearson residuals."""
    method = method or default_scale_method(family)
    if not full_fit.converged:
        raise ContractViolation("scale estimation needs a converged full-model fit")
    dof = dataset.n - full_fit.alpha.p_alpha
    return ScaleEstimate(sigma_from_residuals(full_fit.pearson_residuals, method, dof), method, full_fit.alpha)


def leverage_weights(Xa) -> np.ndarray:
    """Mallows covariate weights ``sqrt(1 - h_ii)`` from the hat matrix of ``Xa``."""
    Xa = np.asarray(Xa, dtype=float)
    check_rank(Xa)
    Q, _ = np.linalg.qr(Xa)
    h = np.sum(Q * Q, axis=1)
    return np.sqrt(np.clip(1.0 - h, np.finfo(float).eps, None))
