"""Model search by minimizing the robust bootstrap criterion.

Every search shares one full-model fit per estimator: it supplies the scale
estimate, the variance-function denominators and the residual strata, so a
model's criterion value does not depend on which search asked for it.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bootstrap import BootstrapConfig, Stratification, replicate_estimators, stratify
from .criterion import CriterionBreakdown, CriterionConfig, m1_in_sample, m2_prediction, mn_total
from .errors import ContractViolation, NumericError, RobustSelError
from .estimators import (
    EstimatorSpec,
    FitResult,
    ScaleEstimate,
    default_scale_method,
    estimate_sigma,
    fit,
    fit_ml,
)
from .glm_core import Dataset, GlmFamily, ModelSubset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateSet:
    models: tuple[ModelSubset, ...]
    full_model: ModelSubset
    always_include: ModelSubset = ModelSubset()

    def __post_init__(self) -> None:
        models = tuple(self.models)
        if not models:
            raise ContractViolation("candidate set is empty")
        if len(set(models)) != len(models):
            raise ContractViolation("duplicate candidate models")
        for a in models:
            if not a.issubset(self.full_model):
                raise ContractViolation(f"model {a.label()} is not a subset of the full model")
            if not self.always_include.issubset(a):
                raise ContractViolation(f"model {a.label()} lacks always-included columns")
        object.__setattr__(self, "models", models)


def all_submodels(
    full: ModelSubset, always_include: ModelSubset = ModelSubset(), *, include_null: bool = False
) -> CandidateSet:
    """Every subset of ``full`` that contains ``always_include``."""
    free = [j for j in full.indices if j not in always_include.indices]
    models = []
    for r in range(len(free) + 1):
        for extra in itertools.combinations(free, r):
            a = ModelSubset.of(always_include.indices + extra)
            if a.is_null and not include_null:
                continue
            models.append(a)
    return CandidateSet(tuple(models), full, always_include)


def default_always_include(dataset: Dataset) -> ModelSubset:
    return ModelSubset((0,)) if dataset.intercept else ModelSubset()


def _sort_key(bd: CriterionBreakdown):
    return (bd.total, bd.alpha.p_alpha, bd.alpha.indices)


@dataclass(frozen=True)
class SelectionOutcome:
    best: ModelSubset
    table: tuple[CriterionBreakdown, ...]
    path: dict
    evaluations: int
    search_kind: str = "exhaustive"
    failed: tuple = ()
    sigma_hat: float = float("nan")

    def breakdown(self, alpha: ModelSubset) -> CriterionBreakdown:
        for bd in self.table:
            if bd.alpha == alpha:
                return bd
        raise KeyError(alpha)


def _outcome(table: Iterable[CriterionBreakdown], kind: str, evaluations: int, failed, sigma_hat) -> SelectionOutcome:
    rows = tuple(sorted(table, key=_sort_key))
    if not rows:
        raise NumericError("no candidate model could be evaluated")
    path: dict[int, float] = {}
    for bd in rows:
        size = bd.alpha.p_alpha
        if size not in path or bd.total < path[size]:
            path[size] = bd.total
    return SelectionOutcome(rows[0].alpha, rows, dict(sorted(path.items())), evaluations, kind, tuple(failed), sigma_hat)


def _check_full(f: FitResult) -> None:
    if not f.converged:
        raise NumericError(f"full model {f.alpha.label()} fit did not converge")


def fit_full_model(
    dataset: Dataset,
    family: GlmFamily,
    full_model: ModelSubset,
    spec: EstimatorSpec,
    scale_method: str | None = None,
) -> tuple[FitResult, ScaleEstimate]:
    """Fit the full model and estimate the scale from its residuals.

    The robust fit needs a scale before it can start, so it is fitted with a
    pilot scale from the ML residuals and the scale is then re-estimated from
    its own residuals. Raises :class:`NumericError` if a fit fails to converge.
    """
    method = scale_method or default_scale_method(family)
    if spec.kind == "ml":
        full = fit_ml(dataset, family, full_model, spec)
        _check_full(full)
        return full, estimate_sigma(dataset, family, full, method)
    pilot = fit_ml(dataset, family, full_model, EstimatorSpec("ml", max_iter=spec.max_iter, tol=spec.tol))
    _check_full(pilot)
    sigma = estimate_sigma(dataset, family, pilot, method)
    full = fit(dataset, family, full_model, spec, sigma)
    _check_full(full)
    return full, estimate_sigma(dataset, family, full, method)


class CriterionEvaluator:
    """Evaluates ``M_n(alpha)`` for one estimator against shared full-model quantities.

    Parameters
    ----------
    dataset, family, spec
        Data, GLM family and estimator.
    full_model : ModelSubset
        The model supplying the scale estimate and the strata.
    boot_cfg, crit_cfg
        Bootstrap and criterion settings.
    scale_method : str, optional
        ``fixed-one``, ``pearson-moment`` or ``mad``; defaults per family.
    """

    def __init__(
        self,
        dataset: Dataset,
        family: GlmFamily,
        spec: EstimatorSpec,
        full_model: ModelSubset,
        boot_cfg: BootstrapConfig,
        crit_cfg: CriterionConfig,
        scale_method: str | None = None,
    ) -> None:
        self.dataset = dataset
        self.family = family
        self.spec = spec
        self.boot_cfg = boot_cfg
        self.crit_cfg = crit_cfg
        boot_cfg.check_n(dataset.n)
        if full_model.is_null:
            raise ContractViolation("the full model must contain at least one column")
        full, sigma = fit_full_model(dataset, family, full_model, spec, scale_method)
        self.full_fit: FitResult = full
        self.sigma: ScaleEstimate = sigma
        self.strat: Stratification = stratify(full.pearson_residuals, boot_cfg.K, boot_cfg.m)
        self._cache: dict[ModelSubset, CriterionBreakdown] = {}
        self._fits: dict[ModelSubset, FitResult] = {full_model: full}

    @property
    def evaluations(self) -> int:
        return len(self._cache)

    def fit(self, alpha: ModelSubset) -> FitResult:
        if alpha not in self._fits:
            self._fits[alpha] = fit(self.dataset, self.family, alpha, self.spec, self.sigma)
        return self._fits[alpha]

    def evaluate(self, alpha: ModelSubset) -> CriterionBreakdown:
        if alpha in self._cache:
            return self._cache[alpha]
        f = self.fit(alpha)
        if not f.converged:
            raise NumericError(f"fit of model {alpha.label(self.dataset)} did not converge")
        reps = replicate_estimators(
            self.dataset, self.family, alpha, self.spec, self.strat, self.boot_cfg, f, self.sigma
        )
        args = (self.dataset, self.family, alpha, f, self.full_fit, self.sigma)
        m1 = m1_in_sample(*args, self.crit_cfg)
        m2 = m2_prediction(*args, reps, self.crit_cfg)
        bd = mn_total(m1, m2, alpha, self.dataset.n, self.sigma, self.crit_cfg, reps)
        self._cache[alpha] = bd
        return bd

    def try_evaluate(self, alpha: ModelSubset, failed: list) -> CriterionBreakdown | None:
        try:
            return self.evaluate(alpha)
        except RobustSelError as exc:
            logger.warning("model %s excluded: %s", alpha.label(self.dataset), exc)
            failed.append((alpha, str(exc)))
            return None


def select_exhaustive(
    dataset: Dataset,
    family: GlmFamily,
    spec: EstimatorSpec,
    candidates: CandidateSet,
    boot_cfg: BootstrapConfig,
    crit_cfg: CriterionConfig,
    *,
    scale_method: str | None = None,
    evaluator: CriterionEvaluator | None = None,
) -> SelectionOutcome:
    """Evaluate every candidate and return the minimizer of the criterion.

    Candidates whose fit or bootstrap fails are excluded and listed in
    ``failed``; a failing full model is fatal.
    """
    ev = evaluator or CriterionEvaluator(
        dataset, family, spec, candidates.full_model, boot_cfg, crit_cfg, scale_method
    )
    failed: list = []
    table = [bd for a in candidates.models if (bd := ev.try_evaluate(a, failed)) is not None]
    return _outcome(table, "exhaustive", len(table) + len(failed), failed, ev.sigma.sigma_hat)


def select_backward(
    dataset: Dataset,
    family: GlmFamily,
    spec: EstimatorSpec,
    full: ModelSubset,
    boot_cfg: BootstrapConfig,
    crit_cfg: CriterionConfig,
    *,
    always_include: ModelSubset = ModelSubset(),
    include_null: bool = False,
    scale_method: str | None = None,
    evaluator: CriterionEvaluator | None = None,
) -> SelectionOutcome:
    """Backward elimination on the criterion.

    Starting from ``full``, each round evaluates every admissible
    single-column deletion of the current model and moves to the best of
    them, even when the current model itself scores lower. The search stops
    when no deletion is admissible; the answer is the best model seen.
    """
    if not always_include.issubset(full):
        raise ContractViolation("always-included columns must belong to the full model")
    ev = evaluator or CriterionEvaluator(dataset, family, spec, full, boot_cfg, crit_cfg, scale_method)
    failed: list = []
    seen: dict[ModelSubset, CriterionBreakdown] = {}
    tried: set[ModelSubset] = set()

    def visit(a: ModelSubset):
        tried.add(a)
        bd = ev.try_evaluate(a, failed)
        if bd is not None:
            seen[a] = bd
        return bd

    if visit(full) is None:
        raise NumericError("criterion could not be evaluated for the full model")
    current = full
    while True:
        drops = [
            current.without(j)
            for j in current.indices
            if j not in always_include.indices and (current.p_alpha > 1 or include_null)
        ]
        if not drops:
            break
        scored = [bd for a in drops if (bd := visit(a)) is not None]
        if not scored:
            break
        current = min(scored, key=_sort_key).alpha
    return _outcome(seen.values(), "backward", len(tried), failed, ev.sigma.sigma_hat)


def solution_path(outcome: SelectionOutcome) -> list[tuple[int, float]]:
    """``(model size, smallest criterion value at that size)`` pairs in size order."""
    if not outcome.table:
        raise ContractViolation("outcome has no evaluated models")
    return sorted(outcome.path.items())


def backward_evaluation_bound(p_full: int) -> int:
    return 1 + p_full * (p_full + 1) // 2


def rescale_outcome(outcome: SelectionOutcome, factor: float) -> SelectionOutcome:
    """Multiply every criterion total by ``factor`` (> 0) and re-rank."""
    if not factor > 0:
        raise ContractViolation("factor must be positive")
    rows = [
        CriterionBreakdown(bd.alpha, bd.m1, bd.penalty, bd.m2, bd.total * factor, bd.sigma_hat,
                           bd.replicates_used, bd.replicates_skipped)
        for bd in outcome.table
    ]
    return _outcome(rows, outcome.search_kind, outcome.evaluations, outcome.failed, outcome.sigma_hat)
