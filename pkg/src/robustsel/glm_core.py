"""Datasets, model subsets and GLM families.

Families store the variance function already composed with the inverse
link, i.e. ``v`` maps the linear predictor to the standard deviation factor
so that ``Var y = sigma**2 * v(eta)**2``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special, stats

from .errors import ContractViolation, DataError, DomainError, NumericOverflowError

logger = logging.getLogger(__name__)

INTERCEPT_NAME = "(Intercept)"

FAMILY_NAMES = (
    "gaussian-identity",
    "poisson-log",
    "binomial-logit",
    "gamma-log",
    "gamma-reciprocal",
)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response vector and design matrix with named columns.

    Arrays are copied and made read-only on construction. If ``intercept``
    is true, column 0 must be a column of ones.
    """

    y: np.ndarray
    X: np.ndarray
    column_names: tuple[str, ...]
    intercept: bool = False

    def __post_init__(self) -> None:
        y = np.array(self.y, dtype=float)
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if y.ndim != 1 or X.ndim != 2:
            raise ContractViolation("y must be 1-d and X 2-d")
        n, p = X.shape
        if y.shape[0] != n:
            raise ContractViolation(f"y has {y.shape[0]} rows but X has {n}")
        names = tuple(str(c) for c in self.column_names)
        if len(names) != p:
            raise ContractViolation(f"{len(names)} column names for {p} columns")
        if n < 2 or p < 1:
            raise ContractViolation(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if not np.all(np.isfinite(y)):
            raise ContractViolation(f"non-finite response at row {int(np.flatnonzero(~np.isfinite(y))[0])}")
        bad = ~np.isfinite(X)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ContractViolation(f"non-finite design entry at row {i}, column {names[j]!r}")
        if self.intercept and not np.all(X[:, 0] == 1.0):
            raise ContractViolation("intercept=True requires column 0 to be all ones")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def design(self, alpha: "ModelSubset") -> np.ndarray:
        """Columns of X selected by ``alpha`` (an ``n x p_alpha`` array)."""
        alpha.check(self.p)
        return self.X[:, list(alpha.indices)]

    def subset_rows(self, rows: Sequence[int] | np.ndarray) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.y[rows], self.X[rows], self.column_names, self.intercept)

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise ContractViolation(
                f"unknown column {name!r}; available: {', '.join(self.column_names)}"
            ) from None


@dataclass(frozen=True, order=True)
class ModelSubset:
    """Sorted tuple of 0-based column indices.

    The empty subset is the null model; operations that cannot handle it
    check for it themselves.
    """

    indices: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise ContractViolation(f"negative column index in {idx}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ContractViolation(f"indices must be strictly increasing, got {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices: Iterable[int]) -> "ModelSubset":
        """Build from any iterable of distinct indices, sorting them."""
        idx = sorted(int(i) for i in indices)
        if len(set(idx)) != len(idx):
            raise ContractViolation(f"duplicate indices in {idx}")
        return cls(tuple(idx))

    @classmethod
    def from_names(cls, dataset: Dataset, names: Iterable[str]) -> "ModelSubset":
        return cls.of(dataset.column_index(nm) for nm in names)

    @property
    def p_alpha(self) -> int:
        return len(self.indices)

    @property
    def is_null(self) -> bool:
        return not self.indices

    def check(self, p: int) -> None:
        if self.indices and self.indices[-1] >= p:
            raise ContractViolation(f"column index {self.indices[-1]} out of range for p={p}")

    def without(self, j: int) -> "ModelSubset":
        return ModelSubset(tuple(i for i in self.indices if i != j))

    def issubset(self, other: "ModelSubset") -> bool:
        return set(self.indices) <= set(other.indices)

    def names(self, dataset: Dataset) -> tuple[str, ...]:
        return tuple(dataset.column_names[i] for i in self.indices)

    def label(self, dataset: Dataset | None = None) -> str:
        if dataset is None:
            return "{" + ",".join(str(i) for i in self.indices) + "}"
        return "{" + ",".join(self.names(dataset)) + "}"

    def __len__(self) -> int:
        return len(self.indices)


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------


def _exp(eta):
    with np.errstate(over="ignore"):
        return np.exp(eta)


@dataclass(frozen=True)
class GlmFamily:
    """Inverse link with two derivatives, absorbed variance function, response law.

    ``kind`` is the response distribution: ``gaussian``, ``poisson``,
    ``bernoulli`` or ``gamma``. ``dispersion`` arguments are the sigma of
    ``Var y = sigma**2 v(eta)**2``; Poisson and Bernoulli ignore it.
    """

    name: str
    kind: str
    h: Callable[[np.ndarray], np.ndarray]
    h1: Callable[[np.ndarray], np.ndarray]
    h2: Callable[[np.ndarray], np.ndarray]
    v: Callable[[np.ndarray], np.ndarray]
    v1: Callable[[np.ndarray], np.ndarray]
    link: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    start_eta: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    domain: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    @property
    def fixed_dispersion(self) -> bool:
        return self.kind in ("poisson", "bernoulli")

    def check_domain(self, eta: np.ndarray) -> None:
        eta = np.asarray(eta, dtype=float)
        bad = ~self.domain(eta)
        if np.any(bad):
            i = int(np.flatnonzero(np.atleast_1d(bad))[0])
            raise DomainError(
                f"linear predictor {np.atleast_1d(eta)[i]!r} at index {i} outside the domain of {self.name}"
            )

    def response_distribution(self, mean, dispersion: float = 1.0):
        """Frozen ``scipy.stats`` distribution of y given its mean."""
        mean = np.asarray(mean, dtype=float)
        if self.kind == "gaussian":
            return stats.norm(loc=mean, scale=dispersion)
        if self.kind == "poisson":
            return stats.poisson(mean)
        if self.kind == "bernoulli":
            return stats.bernoulli(mean)
        shape = 1.0 / dispersion**2
        return stats.gamma(a=shape, scale=mean / shape)

    def sample(self, mean, dispersion: float, rng: np.random.Generator) -> np.ndarray:
        mean = np.asarray(mean, dtype=float)
        if self.kind == "gaussian":
            return rng.normal(mean, dispersion)
        if self.kind == "poisson":
            return rng.poisson(mean).astype(float)
        if self.kind == "bernoulli":
            return (rng.random(mean.shape) < mean).astype(float)
        shape = 1.0 / dispersion**2
        return rng.gamma(shape, mean / shape)

    def loglik(self, y: np.ndarray, mean: np.ndarray, dispersion: float = 1.0) -> float:
        """Log-likelihood of ``y`` at fitted means (dispersion is plugged in)."""
        y = np.asarray(y, dtype=float)
        mean = np.asarray(mean, dtype=float)
        if self.kind == "gaussian":
            return float(np.sum(stats.norm.logpdf(y, mean, dispersion)))
        if self.kind == "poisson":
            return float(np.sum(special.xlogy(y, mean) - mean - special.gammaln(y + 1.0)))
        if self.kind == "bernoulli":
            return float(np.sum(special.xlogy(y, mean) + special.xlog1py(1.0 - y, -mean)))
        shape = 1.0 / dispersion**2
        return float(np.sum(stats.gamma.logpdf(y, a=shape, scale=mean / shape)))


def _gaussian_identity() -> GlmFamily:
    return GlmFamily(
        name="gaussian-identity",
        kind="gaussian",
        h=lambda e: np.asarray(e, dtype=float) * 1.0,
        h1=lambda e: np.ones_like(np.asarray(e, dtype=float)),
        h2=lambda e: np.zeros_like(np.asarray(e, dtype=float)),
        v=lambda e: np.ones_like(np.asarray(e, dtype=float)),
        v1=lambda e: np.zeros_like(np.asarray(e, dtype=float)),
        link=lambda mu: np.asarray(mu, dtype=float) * 1.0,
        start_eta=lambda y: np.asarray(y, dtype=float) * 1.0,
        domain=lambda e: np.isfinite(e),
    )


def _poisson_log() -> GlmFamily:
    return GlmFamily(
        name="poisson-log",
        kind="poisson",
        h=_exp,
        h1=_exp,
        h2=_exp,
        v=lambda e: _exp(0.5 * np.asarray(e, dtype=float)),
        v1=lambda e: 0.5 * _exp(0.5 * np.asarray(e, dtype=float)),
        link=np.log,
        start_eta=lambda y: np.log(np.asarray(y, dtype=float) + 0.5),
        domain=lambda e: np.isfinite(e),
    )


def _logit_h1(e):
    mu = special.expit(e)
    return mu * (1.0 - mu)


def _logit_h2(e):
    mu = special.expit(e)
    return mu * (1.0 - mu) * (1.0 - 2.0 * mu)


def _logit_v(e):
    mu = special.expit(e)
    return np.sqrt(mu * (1.0 - mu))


def _binomial_logit() -> GlmFamily:
    return GlmFamily(
        name="binomial-logit",
        kind="bernoulli",
        h=special.expit,
        h1=_logit_h1,
        h2=_logit_h2,
        v=_logit_v,
        v1=lambda e: 0.5 * (1.0 - 2.0 * special.expit(e)) * _logit_v(e),
        link=special.logit,
        start_eta=lambda y: special.logit((np.asarray(y, dtype=float) + 0.5) / 2.0),
        domain=lambda e: np.isfinite(e),
    )


def _gamma_log() -> GlmFamily:
    return GlmFamily(
        name="gamma-log",
        kind="gamma",
        h=_exp,
        h1=_exp,
        h2=_exp,
        v=_exp,
        v1=_exp,
        link=np.log,
        start_eta=lambda y: np.log(np.maximum(np.asarray(y, dtype=float), 1e-8)),
        domain=lambda e: np.isfinite(e),
    )


def _gamma_reciprocal() -> GlmFamily:
    def inv(e):
        with np.errstate(divide="ignore"):
            return 1.0 / np.asarray(e, dtype=float)

    return GlmFamily(
        name="gamma-reciprocal",
        kind="gamma",
        h=inv,
        h1=lambda e: -inv(e) ** 2,
        h2=lambda e: 2.0 * inv(e) ** 3,
        v=inv,
        v1=lambda e: -inv(e) ** 2,
        link=inv,
        start_eta=lambda y: 1.0 / np.maximum(np.asarray(y, dtype=float), 1e-8),
        domain=lambda e: np.isfinite(e) & (np.asarray(e) > 0),
    )


_FACTORIES = {
    "gaussian-identity": _gaussian_identity,
    "poisson-log": _poisson_log,
    "binomial-logit": _binomial_logit,
    "gamma-log": _gamma_log,
    "gamma-reciprocal": _gamma_reciprocal,
}

_CACHE: dict[str, GlmFamily] = {}


def get_family(name: str) -> GlmFamily:
    """Look up one of the supported families by name."""
    if name not in _FACTORIES:
        raise ContractViolation(f"unknown family {name!r}; choose from {', '.join(FAMILY_NAMES)}")
    if name not in _CACHE:
        _CACHE[name] = _FACTORIES[name]()
    return _CACHE[name]


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def linear_predictor(dataset: Dataset, alpha: ModelSubset, beta) -> np.ndarray:
    """Return ``X_alpha @ beta``."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != alpha.p_alpha:
        raise ContractViolation(f"beta has length {beta.shape[0]}, model has {alpha.p_alpha} columns")
    if not np.all(np.isfinite(beta)):
        raise ContractViolation("beta must be finite")
    if alpha.is_null:
        return np.zeros(dataset.n)
    with np.errstate(over="ignore", invalid="ignore"):
        eta = dataset.design(alpha) @ beta
    bad = ~np.isfinite(eta)
    if bad.any():
        raise NumericOverflowError(f"non-finite linear predictor at row {int(np.flatnonzero(bad)[0])}")
    return eta


@dataclass(frozen=True)
class Moments:
    mean: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    v: np.ndarray


def family_moments(family: GlmFamily, eta) -> Moments:
    """Evaluate h, h', h'' and v componentwise at ``eta``."""
    eta = np.asarray(eta, dtype=float)
    family.check_domain(eta)
    return Moments(family.h(eta), family.h1(eta), family.h2(eta), family.v(eta))


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def read_csv(
    path: str | Path,
    response: str,
    *,
    columns: Sequence[str] | None = None,
    add_intercept: bool = True,
) -> Dataset:
    """Load a dataset from a CSV file with a header row.

    Every column other than ``response`` that parses as numbers becomes a
    design column, in file order; non-numeric columns are skipped with a
    warning. Empty cells and ``NA`` are errors.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = [(reader.line_num, r) for r in reader if any(cell.strip() for cell in r)]
    if response not in header:
        raise DataError(f"{path}: response column {response!r} not found; available: {', '.join(header)}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    for line, r in rows:
        if len(r) != len(header):
            raise DataError(f"{path}:{line}: expected {len(header)} fields, found {len(r)}")

    def numeric(j: int) -> np.ndarray | None:
        out = np.empty(len(rows))
        for k, (line, r) in enumerate(rows):
            cell = r[j].strip()
            if cell == "" or cell.upper() in ("NA", "NAN"):
                raise DataError(f"{path}:{line}: missing value in column {header[j]!r}")
            try:
                out[k] = float(cell)
            except ValueError:
                return None
        return out

    yj = header.index(response)
    y = numeric(yj)
    if y is None:
        raise DataError(f"{path}: response column {response!r} is not numeric")
    wanted = [h for h in header if h != response] if columns is None else list(columns)
    cols, names = [], []
    for name in wanted:
        if name not in header:
            raise DataError(f"{path}: column {name!r} not found; available: {', '.join(header)}")
        values = numeric(header.index(name))
        if values is None:
            if columns is not None:
                raise DataError(f"{path}: column {name!r} is not numeric")
            logger.warning("skipping non-numeric column %r", name)
            continue
        cols.append(values)
        names.append(name)
    if add_intercept:
        cols.insert(0, np.ones(len(rows)))
        names.insert(0, INTERCEPT_NAME)
    if not cols:
        raise DataError(f"{path}: no numeric explanatory columns")
    try:
        return Dataset(y, np.column_stack(cols), tuple(names), intercept=add_intercept)
    except ContractViolation as exc:
        raise DataError(f"{path}: {exc}") from exc
