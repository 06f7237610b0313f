import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_dataset
from robustsel.errors import ContractViolation, DegenerateScaleError, SingularDesignError
from robustsel.estimators import (
    EstimatorSpec,
    ScaleEstimate,
    cr_estimating_function,
    estimate_sigma,
    fit,
    fit_cr,
    fit_ml,
    leverage_weights,
    ml_score,
    sigma_from_residuals,
)
from robustsel.glm_core import Dataset, ModelSubset, get_family

FULL = ModelSubset((0, 1, 2, 3))
SM_FAMILIES = {
    "poisson-log": sm.families.Poisson(),
    "binomial-logit": sm.families.Binomial(),
    "gaussian-identity": sm.families.Gaussian(),
    "gamma-log": sm.families.Gamma(sm.families.links.Log()),
}


@pytest.mark.parametrize("name, beta, sigma", [
    ("poisson-log", (0.5, 0.4, -0.3, 0.0), 1.0),
    ("binomial-logit", (0.2, 1.0, -0.5, 0.3), 1.0),
    ("gaussian-identity", (1.0, 2.0, 0.0, -1.0), 0.7),
    ("gamma-log", (0.3, 0.2, 0.1, 0.0), 0.5),
])
def test_ml_matches_statsmodels(name, beta, sigma):
    ds = make_dataset(name, beta, n=120, seed=3, sigma=sigma)
    res = fit_ml(ds, get_family(name), FULL)
    ref = sm.GLM(ds.y, ds.X, family=SM_FAMILIES[name]).fit(tol=1e-12)
    assert res.converged
    np.testing.assert_allclose(res.beta_hat, ref.params, rtol=1e-7, atol=1e-9)


def test_ml_poisson_loglik_matches_statsmodels():
    ds = make_dataset(n=80, seed=4)
    res = fit_ml(ds, get_family("poisson-log"), FULL)
    ref = sm.GLM(ds.y, ds.X, family=sm.families.Poisson()).fit()
    assert res.loglik == pytest.approx(ref.llf, rel=1e-10)


def test_score_vanishes_at_ml():
    ds = make_dataset(n=64, seed=7)
    fam = get_family("poisson-log")
    res = fit_ml(ds, fam, FULL)
    assert np.max(np.abs(ml_score(ds.y, ds.X, fam, res.beta_hat))) <= 1e-8


@given(st.lists(st.integers(0, 30), min_size=3, max_size=40).filter(lambda ys: sum(ys) > 0))
def test_intercept_only_poisson_is_log_mean(ys):
    y = np.array(ys, dtype=float)
    ds = Dataset(y, np.ones((len(y), 1)), ("(Intercept)",), intercept=True)
    res = fit_ml(ds, get_family("poisson-log"), ModelSubset((0,)))
    assert res.beta_hat[0] == pytest.approx(np.log(y.mean()), abs=1e-8)


def test_gaussian_ml_is_least_squares():
    ds = make_dataset("gaussian-identity", (1.0, -2.0, 0.5, 0.0), n=50, seed=2)
    res = fit_ml(ds, get_family("gaussian-identity"), FULL)
    ls = np.linalg.lstsq(ds.X, ds.y, rcond=None)[0]
    np.testing.assert_allclose(res.beta_hat, ls, atol=1e-10)


def test_rank_deficient_design():
    X = np.column_stack([np.ones(10), np.arange(10.0), 2 * np.arange(10.0)])
    ds = Dataset(np.arange(10.0), X, ("a", "b", "c"))
    with pytest.raises(SingularDesignError):
        fit_ml(ds, get_family("poisson-log"), ModelSubset((0, 1, 2)))


def test_nonconvergence_is_reported_not_raised():
    ds = make_dataset(n=64, seed=1)
    res = fit_ml(ds, get_family("poisson-log"), FULL, EstimatorSpec("ml", max_iter=1, tol=1e-14))
    assert not res.converged


def test_null_model_fit():
    ds = make_dataset(n=30, seed=1)
    res = fit_ml(ds, get_family("poisson-log"), ModelSubset())
    assert res.converged and res.beta_hat.shape == (0,)


class TestRobust:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_large_c_collapses_to_ml(self, seed):
        ds = make_dataset(n=64, seed=seed)
        fam = get_family("poisson-log")
        ml = fit_ml(ds, fam, FULL)
        cr = fit_cr(ds, fam, FULL, EstimatorSpec("cr", huber_c=1e6))
        np.testing.assert_allclose(cr.beta_hat, ml.beta_hat, atol=1e-6)

    def test_estimating_equation_solved(self):
        ds = make_dataset(n=64, seed=5)
        fam = get_family("poisson-log")
        spec = EstimatorSpec("cr")
        cr = fit_cr(ds, fam, FULL, spec)
        assert cr.converged
        assert np.max(np.abs(cr_estimating_function(ds.y, ds.X, fam, spec, 1.0, cr.beta_hat))) <= 1e-8

    def test_resists_outliers(self):
        ds = make_dataset(beta=(1.0, 0.0, 0.0, 0.0), n=64, seed=9)
        y = ds.y.copy()
        y[np.argsort(ds.X[:, 3])[:2]] = 100.0
        bad = Dataset(y, ds.X, ds.column_names, intercept=True)
        fam = get_family("poisson-log")
        ml = fit_ml(bad, fam, FULL).beta_hat
        cr = fit_cr(bad, fam, FULL, EstimatorSpec("cr")).beta_hat
        assert abs(cr[3]) < abs(ml[3])
        assert abs(cr[3]) < 0.2

    def test_gaussian_large_c_equals_least_squares(self):
        ds = make_dataset("gaussian-identity", (1.0, -2.0, 0.5, 0.0), n=40, seed=8)
        cr = fit_cr(ds, get_family("gaussian-identity"), FULL, EstimatorSpec("cr", huber_c=1e6), sigma=1.0)
        np.testing.assert_allclose(cr.beta_hat, np.linalg.lstsq(ds.X, ds.y, rcond=None)[0], atol=1e-7)

    def test_fit_dispatches_and_is_deterministic(self):
        ds = make_dataset(n=64, seed=6)
        fam = get_family("poisson-log")
        a = fit(ds, fam, FULL, EstimatorSpec("cr"))
        b = fit(ds, fam, FULL, EstimatorSpec("cr"))
        np.testing.assert_array_equal(a.beta_hat, b.beta_hat)

    def test_mallows_weights_validated(self):
        with pytest.raises(ContractViolation):
            EstimatorSpec("cr", mallows_weights=np.array([1.0, 0.0]))

    def test_leverage_weights_range(self):
        ds = make_dataset(n=30, seed=0)
        w = leverage_weights(ds.X)
        assert np.all((w > 0) & (w <= 1))
        assert np.sum(1 - w**2) == pytest.approx(4.0)


class TestScale:
    def test_mad_of_known_residuals(self):
        r = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        assert sigma_from_residuals(r, "mad") == pytest.approx(1.4826)

    def test_pearson_moment(self):
        r = np.array([1.0, -1.0, 2.0, -2.0])
        assert sigma_from_residuals(r, "pearson-moment", dof=2) == pytest.approx(np.sqrt(5.0))

    def test_degenerate(self):
        with pytest.raises(DegenerateScaleError):
            sigma_from_residuals(np.zeros(5), "mad")
        with pytest.raises(DegenerateScaleError):
            ScaleEstimate(0.0, "mad", FULL)

    def test_family_defaults(self):
        ds = make_dataset(n=40)
        f = fit_ml(ds, get_family("poisson-log"), FULL)
        assert estimate_sigma(ds, get_family("poisson-log"), f).sigma_hat == 1.0
        g = make_dataset("gaussian-identity", (0.0, 1.0, 0.0, 0.0), n=400, seed=3, sigma=2.0)
        fg = fit_ml(g, get_family("gaussian-identity"), FULL)
        s = estimate_sigma(g, get_family("gaussian-identity"), fg)
        assert s.method == "mad" and s.sigma_hat == pytest.approx(2.0, rel=0.15)

    def test_unknown_method(self):
        with pytest.raises(ContractViolation):
            sigma_from_residuals(np.ones(3), "iqr")
