import numpy as np
import pytest

from conftest import make_dataset
from robustsel.bootstrap import BootstrapConfig, ReplicateSet, replicate_estimators, stratify
from robustsel.criterion import CriterionConfig, aic_bic, m1_in_sample, m2_prediction, mn_total
from robustsel.errors import ContractViolation, UnsupportedEstimatorError
from robustsel.estimators import EstimatorSpec, fit_cr, fit_ml
from robustsel.glm_core import Dataset, ModelSubset, get_family
from robustsel.robust_loss import RhoFunction

FULL = ModelSubset((0, 1, 2, 3))
POIS = get_family("poisson-log")


def test_m1_hand_computed():
    y = np.array([0.0, 1.0, 5.0, 2.0])
    X = np.ones((4, 1))
    ds = Dataset(y, X, ("(Intercept)",), intercept=True)
    f = fit_ml(ds, POIS, ModelSubset((0,)))
    z = (y - 2.0) / np.sqrt(2.0)
    assert m1_in_sample(ds, POIS, ModelSubset((0,)), f, f, 1.0, CriterionConfig()) == pytest.approx(
        np.mean(np.minimum(z**2, 4.0)))


def test_m1_uses_full_model_variance():
    ds = make_dataset(n=40, seed=3)
    full = fit_ml(ds, POIS, FULL)
    sub = fit_ml(ds, POIS, ModelSubset((0,)))
    z = (ds.y - np.exp(sub.beta_hat[0])) / np.sqrt(np.exp(full.eta))
    got = m1_in_sample(ds, POIS, ModelSubset((0,)), sub, full, 1.0, CriterionConfig())
    assert got == pytest.approx(np.mean(np.minimum(z**2, 4.0)))


def test_m2_with_point_mass_replicates_equals_m1():
    ds = make_dataset(n=40, seed=3)
    f = fit_ml(ds, POIS, FULL)
    R = np.tile(f.beta_hat + 0.3, (5, 1))
    reps = ReplicateSet(R, 0, R.mean(axis=0))
    cfg = CriterionConfig()
    assert m2_prediction(ds, POIS, FULL, f, f, 1.0, reps, cfg) == pytest.approx(
        m1_in_sample(ds, POIS, FULL, f, f, 1.0, cfg), rel=1e-12)


def test_total_and_penalty():
    bd = mn_total(0.5, 0.7, ModelSubset((0, 1)), 64, 1.5, CriterionConfig())
    assert bd.penalty == pytest.approx(2 * np.log(64) * 2 / 64)
    assert bd.total == pytest.approx(2.25 * (0.5 + bd.penalty + 0.7))
    with pytest.raises(ContractViolation):
        mn_total(np.nan, 0.7, ModelSubset((0,)), 64, 1.0, CriterionConfig())


def test_criterion_weights_validated():
    with pytest.raises(ContractViolation):
        CriterionConfig(criterion_weights=np.array([1.0, -1.0]))
    with pytest.raises(ContractViolation):
        CriterionConfig(criterion_weights=np.ones(3)).weights(4)
    with pytest.raises(ContractViolation):
        CriterionConfig(delta_k=0.0)


def test_zero_weights_remove_rows():
    ds = make_dataset(n=40, seed=3)
    f = fit_ml(ds, POIS, FULL)
    w = np.ones(40)
    w[:10] = 0.0
    a = m1_in_sample(ds, POIS, FULL, f, f, 1.0, CriterionConfig(criterion_weights=w))
    b = m1_in_sample(ds, POIS, FULL, f, f, 1.0, CriterionConfig())
    assert a < b


def test_aic_bic_two_observations():
    # y = (1, 1), intercept-only Poisson: mu = 1, loglik = -2
    ds = Dataset(np.array([1.0, 1.0]), np.ones((2, 1)), ("(Intercept)",), intercept=True)
    f = fit_ml(ds, POIS, ModelSubset((0,)))
    ic = aic_bic(f, 2)
    assert ic["aic"] == pytest.approx(6.0)
    assert ic["bic"] == pytest.approx(4.0 + np.log(2.0))


def test_aic_needs_ml():
    ds = make_dataset(n=40, seed=3)
    f = fit_cr(ds, POIS, FULL, EstimatorSpec("cr"))
    with pytest.raises(UnsupportedEstimatorError):
        aic_bic(f, 40)


def test_criterion_prefers_true_model_on_average():
    wins = 0
    for seed in range(5):
        ds = make_dataset(beta=(1.0, 0.8, 0.0, 0.0), n=64, seed=seed)
        full = fit_ml(ds, POIS, FULL)
        strat = stratify(full.pearson_residuals, 8, 24)
        cfg = BootstrapConfig(m=24, B=30, seed=seed)
        vals = {}
        for a in (ModelSubset((0,)), ModelSubset((0, 1)), FULL):
            f = fit_ml(ds, POIS, a)
            reps = replicate_estimators(ds, POIS, a, EstimatorSpec("ml"), strat, cfg, f)
            crit = CriterionConfig(loss=RhoFunction(2.0))
            m1 = m1_in_sample(ds, POIS, a, f, full, 1.0, crit)
            m2 = m2_prediction(ds, POIS, a, f, full, 1.0, reps, crit)
            vals[a] = mn_total(m1, m2, a, ds.n, 1.0, crit).total
        wins += min(vals, key=vals.get) == ModelSubset((0, 1))
    assert wins >= 4
