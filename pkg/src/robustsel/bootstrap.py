"""Residual-stratified m-out-of-n paired bootstrap.

Rows of ``(y, X)`` are split into strata at quantiles of the full-model
Pearson residuals; each replicate draws a fixed, proportionally allocated
number of rows with replacement from every stratum. Replicate ``b`` (retry
``a``) uses its own generator seeded from ``(seed, b, a)``, so results do
not depend on the order replicates are computed in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import BootstrapDegeneracyError, ContractViolation, NumericError
from .estimators import EstimatorSpec, FitResult, ScaleEstimate, _fit_cr_arrays, _fit_ml_arrays
from .glm_core import Dataset, GlmFamily, ModelSubset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BootstrapConfig:
    m: int
    B: int = 50
    K: int = 8
    seed: int = 0
    max_retries_per_replicate: int = 10
    max_skip_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.m < 1 or self.B < 1:
            raise ContractViolation("m and B must be positive")
        if not 1 <= self.K <= 8:
            raise ContractViolation(f"K must be in [1, 8], got {self.K}")
        if not 0 <= self.seed < 2**64:
            raise ContractViolation("seed must be a 64-bit unsigned integer")
        if self.max_retries_per_replicate < 0:
            raise ContractViolation("max_retries_per_replicate must be >= 0")
        if not 0 <= self.max_skip_fraction < 1:
            raise ContractViolation("max_skip_fraction must be in [0, 1)")

    def check_n(self, n: int) -> None:
        if self.m >= n:
            raise ContractViolation(f"m={self.m} must be smaller than n={n}")
        if not 0.25 * n <= self.m <= 0.5 * n:
            logger.info("m=%d is outside the usual 25-50%% band for n=%d", self.m, n)


@dataclass(frozen=True, eq=False)
class Stratification:
    """Strata labels (0-based), the residual cut points, and draws per stratum."""

    boundaries: np.ndarray
    assignment: np.ndarray
    per_stratum_draw: np.ndarray
    members: tuple[np.ndarray, ...] = field(repr=False)
    merged: int = 0

    @property
    def K(self) -> int:
        return len(self.members)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.members])

    @property
    def m(self) -> int:
        return int(self.per_stratum_draw.sum())


def allocate(sizes, m: int) -> np.ndarray:
    """Largest-remainder rounding of ``size_k * m / n`` to integers summing to ``m``.

    Ties in the fractional parts go to the lower stratum index.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    n = int(sizes.sum())
    exact = sizes * m  # numerators over n, kept integral to avoid float ties
    draws = exact // n
    short = m - int(draws.sum())
    if short:
        rem = exact - draws * n
        order = sorted(range(len(sizes)), key=lambda k: (-int(rem[k]), k))
        for k in order[:short]:
            draws[k] += 1
    return draws


def stratify(residuals, K: int, m: int) -> Stratification:
    """Split rows into ``K`` residual strata and allocate ``m`` draws.

    Cut points are the residuals at the ranks that split the sorted sample
    into ``K`` near-equal blocks (larger blocks first); intervals are
    left-closed. Tied cut points would leave a stratum empty, so they are
    merged with a warning.
    """
    r = np.asarray(residuals, dtype=float)
    n = len(r)
    if not np.all(np.isfinite(r)):
        raise ContractViolation("residuals must be finite")
    if K < 1 or n < K:
        raise ContractViolation(f"need 1 <= K <= n, got K={K}, n={n}")
    if not 1 <= m <= n:
        raise ContractViolation(f"need 1 <= m <= n, got m={m}")
    order = np.lexsort((np.arange(n), r))
    base, extra = divmod(n, K)
    starts = np.cumsum([0] + [base + (1 if k < extra else 0) for k in range(K - 1)])
    cuts = r[order[starts[1:]]]
    uniq = np.unique(cuts)
    merged = len(cuts) - len(uniq)
    if merged:
        logger.warning("tied residual quantiles: merged %d empty strata", merged)
    assignment = np.searchsorted(uniq, r, side="right")
    if not np.any(assignment == 0):
        # the lowest cut equals the minimum residual: stratum 0 is empty
        logger.warning("tied residual quantiles: merged the lowest stratum")
        merged += 1
        uniq = uniq[1:]
        assignment = assignment - 1
    members = tuple(np.flatnonzero(assignment == k) for k in range(len(uniq) + 1))
    draws = allocate([len(g) for g in members], m)
    return Stratification(uniq, assignment, draws, members, merged)


def replicate_rng(seed: int, replicate: int, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replicate, attempt)))


def draw_replicate(strat: Stratification, rng: np.random.Generator) -> np.ndarray:
    """Row indices of one resample: ``per_stratum_draw[k]`` uniform draws from stratum ``k``."""
    parts = [
        g[rng.integers(0, len(g), size=d)]
        for g, d in zip(strat.members, strat.per_stratum_draw)
        if d > 0
    ]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class ReplicateSet:
    replicate_betas: np.ndarray
    skipped: int
    mean_beta: np.ndarray
    attempts: int = 0

    @property
    def used(self) -> int:
        return self.replicate_betas.shape[0]


def replicate_estimators(
    dataset: Dataset,
    family: GlmFamily,
    alpha: ModelSubset,
    spec: EstimatorSpec,
    strat: Stratification,
    config: BootstrapConfig,
    base_fit: FitResult,
    sigma: ScaleEstimate | float = 1.0,
) -> ReplicateSet:
    """Fit model ``alpha`` on ``config.B`` stratified resamples.

    Each replicate starts from ``base_fit.beta_hat``. A replicate whose fit
    fails is redrawn up to ``config.max_retries_per_replicate`` times and
    then skipped; more than ``max_skip_fraction * B`` skips raises
    :class:`BootstrapDegeneracyError`.
    """
    config.check_n(dataset.n)
    p = alpha.p_alpha
    if p == 0:
        return ReplicateSet(np.zeros((config.B, 0)), 0, np.zeros(0), config.B)
    s = sigma.sigma_hat if isinstance(sigma, ScaleEstimate) else float(sigma)
    Xa = dataset.design(alpha)
    y = dataset.y
    weights = spec.mallows_weights
    start = np.asarray(base_fit.beta_hat, dtype=float)
    betas = []
    skipped = 0
    attempts = 0
    for b in range(config.B):
        for a in range(config.max_retries_per_replicate + 1):
            attempts += 1
            idx = draw_replicate(strat, replicate_rng(config.seed, b, a))
            try:
                if spec.kind == "ml":
                    beta, ok, *_ = _fit_ml_arrays(y[idx], Xa[idx], family, spec, start)
                else:
                    w = None if weights is None else weights[idx]
                    beta, ok, *_ = _fit_cr_arrays(y[idx], Xa[idx], family, spec, s, start, w)
            except NumericError:
                ok = False
            if ok and np.all(np.isfinite(beta)):
                betas.append(beta)
                break
        else:
            skipped += 1
    if skipped > config.max_skip_fraction * config.B or not betas:
        raise BootstrapDegeneracyError(
            f"{skipped} of {config.B} bootstrap replicates failed for model {alpha.label(dataset)}; "
            "increase m or use more strata"
        )
    R = np.vstack(betas)
    return ReplicateSet(R, skipped, R.mean(axis=0), attempts)


def bias_adjusted_replicates(reps: ReplicateSet, beta_hat) -> np.ndarray:
    """Replicates shifted by the estimated bootstrap bias ``mean_beta - beta_hat``.

    The column mean of the result is ``beta_hat``.
    """
    R = np.asarray(reps.replicate_betas, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float)
    if R.ndim != 2 or R.shape[1] != beta_hat.shape[0]:
        raise ContractViolation(f"replicates of shape {R.shape} do not match beta of length {beta_hat.shape[0]}")
    centered = R - reps.mean_beta
    # second centering pass removes the rounding left by the first
    centered -= centered.mean(axis=0)
    return centered + beta_hat


def dump_replicates(path, reps: ReplicateSet, names) -> None:
    """Write one CSV row per retained replicate, one column per coefficient."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", *names])
        for b, row in enumerate(reps.replicate_betas):
            w.writerow([b, *(repr(float(x)) for x in row)])
