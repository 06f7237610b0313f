"""Command-line front end: ``fit``, ``select``, ``simulate`` and ``check-monotonicity``.

Every subcommand writes CSV files plus the resolved ``config.yaml`` into the
output directory and prints a short summary. Exit codes: 0 on success, 1 on
numeric or model failure, 2 on usage, configuration or data errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bootstrap import BootstrapConfig
from .config import ESTIMATOR_ALIASES, ConfigError, echo_config, load_config
from .criterion import CriterionConfig
from .errors import NumericError, RobustSelError
from .estimators import EstimatorSpec, leverage_weights
from .glm_core import Dataset, ModelSubset, get_family, read_csv
from .robust_loss import RhoFunction
from .selection import (
    CriterionEvaluator,
    all_submodels,
    default_always_include,
    fit_full_model,
    select_backward,
    select_exhaustive,
)
from .simulation import SimDesign, generate_dataset, run_experiment
from .theory_checks import COUNTEREXAMPLE, counterexample, trace_monotonicity_check

logger = logging.getLogger("robustsel")

DEFAULT_M_FRACTION = 0.375


def _num(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# Builders from the resolved config
# ---------------------------------------------------------------------------


def load_dataset(cfg: dict) -> Dataset:
    data = cfg["data"]
    if not data["path"] or not data["response"]:
        raise ConfigError("data.path and data.response are required")
    return read_csv(data["path"], data["response"], columns=data["columns"], add_intercept=data["add_intercept"])


def _subset(dataset: Dataset, names, default: ModelSubset) -> ModelSubset:
    if names is None:
        return default
    try:
        return ModelSubset.from_names(dataset, names)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"unknown column in model specification: {exc}") from exc


def full_model(cfg: dict, dataset: Dataset) -> ModelSubset:
    return _subset(dataset, cfg["selection"]["full_model"], ModelSubset(tuple(range(dataset.p))))


def estimator_spec(cfg: dict, kind: str | None = None, dataset: Dataset | None = None,
                   full: ModelSubset | None = None) -> EstimatorSpec:
    est = cfg["estimator"]
    kind = ESTIMATOR_ALIASES[kind or est["kind"]]
    weights = None
    if est["mallows"] and kind == "cr" and dataset is not None:
        weights = leverage_weights(dataset.design(full or ModelSubset(tuple(range(dataset.p)))))
    return EstimatorSpec(kind, est["huber_c"], weights, est["max_iter"], est["tol"])


def bootstrap_config(cfg: dict, n: int, m: int | None = None) -> BootstrapConfig:
    b = cfg["bootstrap"]
    m = m if m is not None else b["m"]
    if m is None:
        m = max(1, int(round(DEFAULT_M_FRACTION * n)))
    return BootstrapConfig(m, b["B"], b["K"], cfg["seed"], b["max_retries_per_replicate"], b["max_skip_fraction"])


def criterion_config(cfg: dict) -> CriterionConfig:
    return CriterionConfig(cfg["criterion"]["delta_k"], RhoFunction(cfg["loss"]["b"]))


def _threads(cfg: dict) -> int:
    return cfg["threads"] or (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_fit(cfg: dict, out: Path) -> None:
    dataset = load_dataset(cfg)
    family = get_family(cfg["family"]["name"])
    full = full_model(cfg, dataset)
    spec = estimator_spec(cfg, dataset=dataset, full=full)
    fit, sigma = fit_full_model(dataset, family, full, spec, cfg["scale"]["method"])
    names = full.names(dataset)
    _write_csv(out / "coefficients.csv", ["term", "estimate"], [[n, _num(b)] for n, b in zip(names, fit.beta_hat)])
    q = np.quantile(fit.pearson_residuals, [0.0, 0.25, 0.5, 0.75, 1.0])
    summary = [
        ["estimator", spec.kind],
        ["family", family.name],
        ["converged", str(fit.converged).lower()],
        ["iterations", str(fit.iterations)],
        ["score_norm", _num(fit.score_norm)],
        ["sigma_hat", _num(sigma.sigma_hat)],
        ["sigma_method", sigma.method],
    ] + [[f"pearson_{k}", _num(v)] for k, v in zip(("min", "q1", "median", "q3", "max"), q)]
    _write_csv(out / "fit_summary.csv", ["quantity", "value"], summary)
    print(f"{spec.kind} fit of {family.name}, n={dataset.n}, sigma_hat={sigma.sigma_hat:.6g}")
    for n, b in zip(names, fit.beta_hat):
        print(f"  {n:>20s} {b: .6f}")


def cmd_select(cfg: dict, out: Path) -> None:
    dataset = load_dataset(cfg)
    family = get_family(cfg["family"]["name"])
    sel = cfg["selection"]
    full = full_model(cfg, dataset)
    always = _subset(dataset, sel["always_include"], default_always_include(dataset))
    if not always.issubset(full):
        always = ModelSubset(tuple(j for j in always.indices if j in full.indices))
    spec = estimator_spec(cfg, dataset=dataset, full=full)
    boot = bootstrap_config(cfg, dataset.n)
    crit = criterion_config(cfg)
    ev = CriterionEvaluator(dataset, family, spec, full, boot, crit, cfg["scale"]["method"])
    searches = ("exhaustive", "backward") if sel["search"] == "both" else (sel["search"],)
    ranked, path = [], []
    for search in searches:
        if search == "exhaustive":
            cands = all_submodels(full, always, include_null=sel["include_null"])
            outcome = select_exhaustive(dataset, family, spec, cands, boot, crit, evaluator=ev)
        else:
            outcome = select_backward(dataset, family, spec, full, boot, crit, always_include=always,
                                      include_null=sel["include_null"], evaluator=ev)
        for rank, bd in enumerate(outcome.table, 1):
            ranked.append([search, rank, bd.alpha.label(dataset), bd.p_alpha, _num(bd.m1), _num(bd.penalty),
                           _num(bd.m2), _num(bd.total), bd.replicates_used, bd.replicates_skipped])
        path += [[search, size, _num(total)] for size, total in outcome.path.items()]
        print(f"{search}: best model {outcome.best.label(dataset)} "
              f"(M_n={outcome.table[0].total:.6g}, {outcome.evaluations} evaluations)")
        for alpha, reason in outcome.failed:
            print(f"  excluded {alpha.label(dataset)}: {reason}")
    _write_csv(out / "ranked_models.csv",
               ["search", "rank", "model", "p_alpha", "m1", "penalty", "m2", "total", "replicates_used",
                "replicates_skipped"], ranked)
    _write_csv(out / "solution_path.csv", ["search", "p_alpha", "criterion"], path)
    print(f"sigma_hat={ev.sigma.sigma_hat:.6g}, m={boot.m}, B={boot.B}, K={boot.K}")


def cmd_simulate(cfg: dict, out: Path) -> None:
    sim = cfg["simulate"]
    try:
        design = SimDesign(tuple(sim["beta_true"]), sim["n"], sim["contamination"], sim["runs"], cfg["seed"],
                           sim["restrict_truths"])
    except TypeError as exc:
        raise ConfigError(f"invalid simulate section: {exc}") from exc
    kinds = list(dict.fromkeys(ESTIMATOR_ALIASES[e] for e in sim["estimators"]))
    specs = [estimator_spec(cfg, kind) for kind in kinds]
    boot = bootstrap_config(cfg, design.n, sim["m"])
    table = run_experiment(design, specs, boot, criterion_config(cfg), workers=_threads(cfg),
                           mallows=cfg["estimator"]["mallows"])
    table.write_csv(out / "selection_probabilities.csv")
    table.write_csv(out / "mc_stderr.csv", stderr=True)
    print(f"{design.runs} runs, truth {design.beta_true}, contamination {design.contamination}, "
          f"{table.regenerated} regenerated")
    print(f"{'model':>14s} {'type':>7s} " + " ".join(f"{c:>8s}" for c in table.criteria))
    for row in table.rows():
        print(f"{row[0]:>14s} {row[1]:>7s} " + " ".join(f"{v:8.3f}" for v in row[2:]))


def _print_counterexample() -> None:
    for key, mat in COUNTEREXAMPLE.items():
        print(f"{key} = {np.array2string(mat, separator=', ')}")
    print(f"trace difference: {counterexample():.12g}")


def cmd_check_monotonicity(cfg: dict, out: Path, *, show_counterexample: bool = False) -> None:
    if show_counterexample:
        _print_counterexample()
        return
    th = cfg["theory"]
    if cfg["data"]["path"]:
        dataset = load_dataset(cfg)
        if th["beta"] is None:
            raise ConfigError("theory.beta is required when checking a data file")
        family = get_family(cfg["family"]["name"])
    else:
        sim = cfg["simulate"]
        design = SimDesign(tuple(sim["beta_true"]), sim["n"], sim["contamination"], 1, cfg["seed"],
                           sim["restrict_truths"])
        dataset = generate_dataset(design, 0)
        family = get_family("poisson-log")
    beta = np.asarray(th["beta"] if th["beta"] is not None else cfg["simulate"]["beta_true"], dtype=float)
    if beta.shape != (dataset.p,):
        raise ConfigError(f"theory.beta must have {dataset.p} entries")
    if th["chain"] is None:
        support = tuple(int(j) for j in np.flatnonzero(beta))
        rest = [j for j in range(dataset.p) if j not in support]
        chain = [ModelSubset.of(support + tuple(rest[:k])) for k in range(len(rest) + 1)]
        chain = [a for a in chain if not a.is_null]
    else:
        chain = [_subset(dataset, names, ModelSubset()) for names in th["chain"]]
    if not chain:
        raise ConfigError("the nested chain is empty")
    spec = estimator_spec(cfg, th["estimator"], dataset)
    sigma = cfg["theory"]["sigma"]
    result = trace_monotonicity_check(chain, dataset, family, beta, sigma, RhoFunction(cfg["loss"]["b"]), spec,
                                      mode=th["mode"])
    rows = []
    for d, ok in zip(result.diagnostics, np.logical_and.accumulate(result.steps)):
        rows.append([d.alpha.label(dataset), d.alpha.p_alpha, _num(d.trace_product), _num(d.per_term_sum),
                     str(bool(ok)).lower()])
        print(f"{d.alpha.label(dataset):>40s} p={d.alpha.p_alpha} trace={d.trace_product:.6g} "
              f"diag_sum={d.per_term_sum:.6g} monotone_so_far={str(bool(ok)).lower()}")
    _write_csv(out / "monotonicity.csv", ["model", "p_alpha", "trace_product", "per_term_sum", "monotone_so_far"],
               rows)
    print(f"monotone: {str(result.monotone).lower()}")


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("--seed", type=int, help="random seed (overrides config)")
    common.add_argument("--out", default="robustsel-out", help="output directory")
    common.add_argument("--threads", type=int, help="worker processes, 0 = all cores")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="robustsel", description="Robust bootstrap model selection for GLMs.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common], help="fit the full model")
    sub.add_parser("select", parents=[common], help="rank submodels by the robust criterion")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo selection probabilities")
    mono = sub.add_parser("check-monotonicity", parents=[common], help="trace condition along a nested chain")
    mono.add_argument("--counterexample", action="store_true", help="print the fixed-matrix counterexample")
    return parser


COMMANDS = {"fit": cmd_fit, "select": cmd_select, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if args.threads is not None:
            overrides.append(f"threads={args.threads}")
        cfg = load_config(args.config, overrides)
        if args.command == "check-monotonicity" and args.counterexample:
            cmd_check_monotonicity(cfg, Path(args.out), show_counterexample=True)
            return 0
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        echo_config(cfg, out)
        if args.command == "check-monotonicity":
            cmd_check_monotonicity(cfg, out)
        else:
            COMMANDS[args.command](cfg, out)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RobustSelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
