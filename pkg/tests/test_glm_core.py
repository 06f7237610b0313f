import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from robustsel.errors import ContractViolation, DataError, DomainError, NumericOverflowError
from robustsel.glm_core import (
    FAMILY_NAMES,
    INTERCEPT_NAME,
    Dataset,
    ModelSubset,
    family_moments,
    get_family,
    linear_predictor,
    read_csv,
)


def _ds(n=5, p=2):
    X = np.column_stack([np.ones(n), np.arange(n, dtype=float)])[:, :p]
    return Dataset(np.arange(n, dtype=float), X, ("a", "b")[:p])


class TestDataset:
    def test_arrays_read_only(self):
        ds = _ds()
        with pytest.raises(ValueError):
            ds.X[0, 0] = 3.0
        assert ds.n == 5 and ds.p == 2

    @pytest.mark.parametrize(
        "y, X, names",
        [
            (np.ones(3), np.ones((4, 1)), ("a",)),
            (np.ones(3), np.ones((3, 2)), ("a",)),
            (np.ones(1), np.ones((1, 1)), ("a",)),
            (np.array([1.0, np.nan, 2.0]), np.ones((3, 1)), ("a",)),
            (np.ones(3), np.array([[1.0], [np.inf], [1.0]]), ("a",)),
        ],
    )
    def test_rejects_bad_shapes_and_values(self, y, X, names):
        with pytest.raises(ContractViolation):
            Dataset(y, X, names)

    def test_intercept_column_checked(self):
        with pytest.raises(ContractViolation):
            Dataset(np.ones(3), np.array([[1.0, 2], [2, 3], [1, 1]]), ("a", "b"), intercept=True)

    def test_design_and_names(self):
        ds = _ds()
        a = ModelSubset((1,))
        np.testing.assert_array_equal(ds.design(a)[:, 0], np.arange(5.0))
        assert a.names(ds) == ("b",)
        assert ds.column_index("b") == 1
        with pytest.raises(ContractViolation, match="available"):
            ds.column_index("zzz")
        with pytest.raises(ContractViolation):
            ds.design(ModelSubset((2,)))


class TestModelSubset:
    def test_ordering_enforced(self):
        with pytest.raises(ContractViolation):
            ModelSubset((2, 1))
        with pytest.raises(ContractViolation):
            ModelSubset((-1,))
        assert ModelSubset.of([3, 0, 1]).indices == (0, 1, 3)
        with pytest.raises(ContractViolation):
            ModelSubset.of([1, 1])

    def test_null_and_ops(self):
        a = ModelSubset((0, 2))
        assert a.p_alpha == 2 and not a.is_null and len(a) == 2
        assert ModelSubset().is_null
        assert a.without(2) == ModelSubset((0,))
        assert ModelSubset((0,)).issubset(a)
        assert a.label() == "{0,2}"

    @given(st.sets(st.integers(0, 20)))
    def test_of_roundtrip(self, s):
        a = ModelSubset.of(s)
        assert set(a.indices) == s
        assert list(a.indices) == sorted(s)


class TestFamilies:
    @pytest.mark.parametrize("name", FAMILY_NAMES)
    def test_derivatives_match_finite_differences(self, name):
        fam = get_family(name)
        eta = np.array([0.3, 0.7, 1.1, 2.0])
        h = 1e-6
        np.testing.assert_allclose(fam.h1(eta), (fam.h(eta + h) - fam.h(eta - h)) / (2 * h), rtol=1e-6)
        np.testing.assert_allclose(fam.h2(eta), (fam.h1(eta + h) - fam.h1(eta - h)) / (2 * h), rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(fam.v1(eta), (fam.v(eta + h) - fam.v(eta - h)) / (2 * h), rtol=1e-5, atol=1e-8)

    @pytest.mark.parametrize("name", FAMILY_NAMES)
    def test_link_inverts_h(self, name):
        fam = get_family(name)
        eta = np.array([0.2, 0.9, 1.5])
        np.testing.assert_allclose(fam.link(fam.h(eta)), eta, rtol=1e-12)

    @pytest.mark.parametrize("name, sigma", [("poisson-log", 1.0), ("binomial-logit", 1.0),
                                             ("gamma-log", 0.7), ("gaussian-identity", 1.3)])
    def test_variance_function_matches_distribution(self, name, sigma):
        fam = get_family(name)
        eta = np.array([-0.4, 0.3, 1.2])
        mean = fam.h(eta)
        var = fam.response_distribution(mean, sigma).var()
        np.testing.assert_allclose(var, (sigma * fam.v(eta)) ** 2, rtol=1e-12)

    def test_poisson_loglik_matches_scipy(self):
        fam = get_family("poisson-log")
        y = np.array([0.0, 3.0, 7.0])
        mu = np.array([0.5, 2.0, 6.0])
        assert fam.loglik(y, mu) == pytest.approx(stats.poisson.logpmf(y, mu).sum(), rel=1e-12)

    def test_reciprocal_domain(self):
        fam = get_family("gamma-reciprocal")
        with pytest.raises(DomainError, match="index 1"):
            fam.check_domain(np.array([0.5, -0.1]))

    def test_unknown_family(self):
        with pytest.raises(ContractViolation):
            get_family("tweedie")


def test_linear_predictor_contracts():
    ds = _ds()
    with pytest.raises(ContractViolation):
        linear_predictor(ds, ModelSubset((0, 1)), [1.0])
    np.testing.assert_array_equal(linear_predictor(ds, ModelSubset(), []), np.zeros(5))
    with pytest.raises(NumericOverflowError):
        linear_predictor(ds, ModelSubset((1,)), [1e308])


def test_family_moments_poisson():
    m = family_moments(get_family("poisson-log"), np.array([0.0, 1.0]))
    np.testing.assert_allclose(m.mean, np.exp([0.0, 1.0]))


class TestReadCsv:
    def test_reads_and_prepends_intercept(self, tmp_path, caplog):
        f = tmp_path / "d.csv"
        f.write_text("y,a,b,site\n1,0.5,2,x\n2,1.5,3,y\n0,2.5,1,z\n")
        ds = read_csv(f, "y")
        assert "site" in caplog.text
        assert ds.column_names == (INTERCEPT_NAME, "a", "b")
        np.testing.assert_array_equal(ds.y, [1, 2, 0])
        assert ds.intercept

    def test_missing_response_lists_columns(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("y,a\n1,2\n3,4\n")
        with pytest.raises(DataError, match="available: y, a"):
            read_csv(f, "count")

    @pytest.mark.parametrize("text, match", [("", "empty"), ("y,a\n", "no data"),
                                             ("y,a\n1,2\n3,NA\n", "d.csv:3"),
                                             ("y,a\n1,2\n3\n", "expected 2 fields")])
    def test_bad_files(self, tmp_path, text, match):
        f = tmp_path / "d.csv"
        f.write_text(text)
        with pytest.raises(DataError, match=match):
            read_csv(f, "y")

    def test_unreadable(self, tmp_path):
        with pytest.raises(DataError):
            read_csv(tmp_path / "nope.csv", "y")

