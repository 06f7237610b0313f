"""Monte Carlo selection-probability experiments for Poisson regression.

Data follow ``log mu_i = b1 + b2 x2 + b3 x3 + b4 x4`` with the three
covariates iid ``N(1, 1)`` and ``y_i ~ Poisson(mu_i)``, optionally with the
responses of a few rows (ranked by ``x4``) overwritten by outliers. Each run
draws from substreams keyed by ``(seed, run, purpose, attempt)`` so every
estimator and criterion in a run sees the same data and bootstrap draws.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bootstrap import BootstrapConfig
from .criterion import CriterionConfig, aic_bic
from .errors import ContractViolation, NumericError, RobustSelError
from .estimators import EstimatorSpec, leverage_weights
from .glm_core import INTERCEPT_NAME, Dataset, ModelSubset, get_family
from .selection import CriterionEvaluator, all_submodels, select_exhaustive

logger = logging.getLogger(__name__)

CONTAMINATIONS = ("none", "moderate-8", "strong-2")
DESIGN_TRUTHS = ((1.0, 0.0, 0.0, 0.0), (-1.0, 2.0, 0.0, 0.0), (-1.0, 1.0, 1.0, 0.0))
COLUMN_NAMES = (INTERCEPT_NAME, "x2", "x3", "x4")
_PURPOSE = {"design": 0, "response": 1, "contamination": 2, "bootstrap": 3}
MAX_REGENERATION_FRACTION = 0.05


@dataclass(frozen=True)
class SimDesign:
    beta_true: tuple[float, ...] = (1.0, 0.0, 0.0, 0.0)
    n: int = 64
    contamination: str = "none"
    runs: int = 500
    seed: int = 0
    restrict_truths: bool = True

    def __post_init__(self) -> None:
        beta = tuple(float(b) for b in self.beta_true)
        object.__setattr__(self, "beta_true", beta)
        if len(beta) != 4:
            raise ContractViolation(f"beta_true must have 4 entries, got {len(beta)}")
        if self.contamination not in CONTAMINATIONS:
            raise ContractViolation(f"contamination must be one of {CONTAMINATIONS}")
        if self.restrict_truths:
            if beta not in DESIGN_TRUTHS:
                raise ContractViolation(f"restricted designs need beta_true in {DESIGN_TRUTHS}")
            if not math.isclose(sum(beta), 1.0):
                raise ContractViolation("restricted designs need sum(beta_true) == 1")
        n_out = {"none": 0, "moderate-8": 8, "strong-2": 2}[self.contamination]
        if self.n < max(8, n_out + 4):
            raise ContractViolation(f"n={self.n} too small")
        if self.runs < 1:
            raise ContractViolation("runs must be positive")

    @property
    def true_model(self) -> ModelSubset:
        return ModelSubset(tuple(j for j, b in enumerate(self.beta_true) if b != 0.0))


def substream(seed: int, run_index: int, purpose: str, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run_index, _PURPOSE[purpose], attempt)))


def derived_seed(seed: int, run_index: int, purpose: str, attempt: int = 0) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(run_index, _PURPOSE[purpose], attempt))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def contaminated_rows(x4, scheme: str) -> np.ndarray:
    """Rows whose response is overwritten, by rank of ``x4`` (ties by row index).

    ``moderate-8`` takes the 8 largest ``x4``, ``strong-2`` the 2 smallest.
    """
    x4 = np.asarray(x4, dtype=float)
    n = len(x4)
    rank = np.empty(n, dtype=int)
    rank[np.lexsort((np.arange(n), x4))] = np.arange(1, n + 1)
    if scheme == "none":
        return np.zeros(0, dtype=int)
    if scheme == "moderate-8":
        return np.flatnonzero(rank >= n - 7)
    if scheme == "strong-2":
        return np.flatnonzero(rank <= 2)
    raise ContractViolation(f"unknown contamination {scheme!r}")


def generate_dataset(design: SimDesign, run_index: int, attempt: int = 0) -> Dataset:
    """Simulated dataset for one run (deterministic in ``(seed, run_index, attempt)``)."""
    if not 0 <= run_index < design.runs:
        raise ContractViolation(f"run_index {run_index} outside [0, {design.runs})")
    n = design.n
    covariates = substream(design.seed, run_index, "design", attempt).normal(1.0, 1.0, size=(n, 3))
    X = np.column_stack([np.ones(n), covariates])
    mu = np.exp(X @ np.asarray(design.beta_true))
    y = substream(design.seed, run_index, "response", attempt).poisson(mu).astype(float)
    rows = contaminated_rows(X[:, 3], design.contamination)
    if len(rows):
        rate = 10.0 if design.contamination == "moderate-8" else 100.0
        y[rows] = substream(design.seed, run_index, "contamination", attempt).poisson(rate, size=len(rows))
    return Dataset(y, X, COLUMN_NAMES, intercept=True)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def criterion_names(estimators: Sequence[EstimatorSpec]) -> tuple[str, ...]:
    names = []
    if any(e.kind == "ml" for e in estimators):
        names += ["ml:aic", "ml:bic"]
    names += [f"{e.kind}:mn" for e in estimators]
    return tuple(names)


@dataclass
class SelectionProbabilityTable:
    design: SimDesign
    models: tuple[ModelSubset, ...]
    criteria: tuple[str, ...]
    counts: dict = field(default_factory=dict)
    runs: int = 0
    regenerated: int = 0

    def probability(self, criterion: str, model: ModelSubset) -> float:
        return self.counts[criterion][self.models.index(model)] / self.runs

    def mc_stderr(self, criterion: str, model: ModelSubset) -> float:
        p = self.probability(criterion, model)
        return math.sqrt(p * (1.0 - p) / self.runs)

    def column_sum(self, criterion: str) -> float:
        return float(sum(self.counts[criterion])) / self.runs

    def model_type(self, model: ModelSubset) -> str:
        truth = self.design.true_model
        if model == truth:
            return "alpha0"
        if truth.issubset(model):
            return "A_c"
        return "-"

    def model_label(self, model: ModelSubset) -> str:
        return "(" + ",".join(f"b{j + 1}" if j in model.indices else "0" for j in range(4)) + ")"

    def rows(self, stderr: bool = False) -> list[list]:
        out = []
        for m in self.models:
            vals = [self.mc_stderr(c, m) if stderr else self.probability(c, m) for c in self.criteria]
            out.append([self.model_label(m), self.model_type(m), *vals])
        return out

    def write_csv(self, path, *, stderr: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true_beta", "model", "type", *self.criteria])
            truth = "(" + ",".join(f"{b:g}" for b in self.design.beta_true) + ")"
            for row in self.rows(stderr):
                w.writerow([truth, row[0], row[1], *(f"{v:.4f}" for v in row[2:])])


def _run_once(design: SimDesign, run_index: int, estimators, boot, crit: CriterionConfig, mallows: bool = False):
    """Selections of one run and the number of regeneration attempts it took."""
    family = get_family("poisson-log")
    full = ModelSubset((0, 1, 2, 3))
    cands = all_submodels(full, ModelSubset((0,)))
    max_attempts = 50
    for attempt in range(max_attempts):
        data = generate_dataset(design, run_index, attempt)
        cfg = BootstrapConfig(boot.m, boot.B, boot.K, derived_seed(design.seed, run_index, "bootstrap", attempt),
                              boot.max_retries_per_replicate, boot.max_skip_fraction)
        picks: dict[str, tuple[int, ...]] = {}
        try:
            for spec in estimators:
                if mallows and spec.kind == "cr":
                    spec = dataclasses.replace(spec, mallows_weights=leverage_weights(data.X))
                ev = CriterionEvaluator(data, family, spec, full, cfg, crit)
                if spec.kind == "ml":
                    ics = {}
                    for a in cands.models:
                        f = ev.fit(a)
                        if f.converged:
                            ics[a] = aic_bic(f, data.n)
                    for key in ("aic", "bic"):
                        best = min(ics, key=lambda a: (ics[a][key], a.p_alpha, a.indices))
                        picks[f"ml:{key}"] = best.indices
                out = select_exhaustive(data, family, spec, cands, cfg, crit, evaluator=ev)
                picks[f"{spec.kind}:mn"] = out.best.indices
        except (NumericError, RobustSelError) as exc:
            logger.info("run %d attempt %d regenerated: %s", run_index, attempt, exc)
            continue
        return picks, attempt
    raise NumericError(f"run {run_index}: no usable dataset after {max_attempts} attempts")


def _run_chunk(args):
    design, indices, estimators, boot, crit, mallows = args
    return [_run_once(design, i, estimators, boot, crit, mallows) for i in indices]


def run_experiment(
    design: SimDesign,
    estimators: Sequence[EstimatorSpec],
    boot_cfg: BootstrapConfig,
    crit_cfg: CriterionConfig,
    *,
    workers: int = 1,
    mallows: bool = False,
) -> SelectionProbabilityTable:
    """Selection frequencies over ``design.runs`` simulated datasets.

    For every run each estimator's criterion picks a model from the eight
    submodels that keep the intercept; ML fits also contribute AIC and BIC
    picks. ``boot_cfg.seed`` is ignored: bootstrap seeds derive from the
    design seed and run index. Results do not depend on ``workers``.
    With ``mallows`` the robust fits use leverage weights of the full design.
    """
    estimators = tuple(estimators)
    if not estimators:
        raise ContractViolation("need at least one estimator")
    if len({e.kind for e in estimators}) != len(estimators):
        raise ContractViolation("estimator kinds must be distinct")
    boot_cfg.check_n(design.n)
    cands = all_submodels(ModelSubset((0, 1, 2, 3)), ModelSubset((0,)))
    criteria = criterion_names(estimators)
    table = SelectionProbabilityTable(design, cands.models, criteria,
                                      {c: [0] * len(cands.models) for c in criteria})
    indices = list(range(design.runs))
    if workers <= 1:
        results = _run_chunk((design, indices, estimators, boot_cfg, crit_cfg, mallows))
    else:
        chunks = [indices[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [(design, c, estimators, boot_cfg, crit_cfg, mallows) for c in chunks]))
        by_index = {}
        for c, part in zip(chunks, parts):
            by_index.update(zip(c, part))
        results = [by_index[i] for i in indices]
    for picks, attempt in results:
        table.regenerated += 1 if attempt else 0
        for crit, idx in picks.items():
            table.counts[crit][cands.models.index(ModelSubset(idx))] += 1
    table.runs = design.runs
    if table.regenerated > MAX_REGENERATION_FRACTION * design.runs:
        raise NumericError(f"{table.regenerated} of {design.runs} runs needed regeneration (cap 5%)")
    return table
