import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from robustsel.errors import ContractViolation
from robustsel.robust_loss import HuberPsi, RhoFunction, huber, psi, psi_prime, rho

finite = st.floats(-50, 50, allow_nan=False)
b_values = st.floats(0.1, 10.0)


@pytest.mark.parametrize("z, expected", [(0.0, 0.0), (1.0, 1.0), (1.9, 3.61), (2.0, 4.0), (-3.0, 4.0)])
def test_rho_values(z, expected):
    assert rho(RhoFunction(), z) == pytest.approx(expected)


@pytest.mark.parametrize("z, expected", [(1.0, 2.0), (-1.5, -3.0), (2.0, 0.0), (-2.5, 0.0)])
def test_psi_values(z, expected):
    assert psi(RhoFunction(), z) == pytest.approx(expected)


def test_psi_prime_and_huber():
    assert psi_prime(RhoFunction(), 0.3) == 2.0
    assert psi_prime(RhoFunction(), 3.0) == 0.0
    assert huber(HuberPsi(1.345), 5.0) == pytest.approx(1.345)
    assert huber(HuberPsi(1.345), -0.2) == pytest.approx(-0.2)
    np.testing.assert_array_equal(HuberPsi(1.0).derivative([0.5, 2.0]), [1.0, 0.0])


@pytest.mark.parametrize("z", [-3.0, -1.2, 0.4, 1.99, 2.5, 7.0])
def test_rho_is_integral_of_psi(z):
    loss = RhoFunction()
    pts = [p for p in loss.kinks if min(0, z) < p < max(0, z)]
    val, _ = integrate.quad(lambda t: float(loss.psi(t)), 0.0, z, points=pts or None, epsabs=1e-12, epsrel=1e-12)
    assert val == pytest.approx(min(z * z, 4.0), abs=1e-8)


@given(finite, b_values)
def test_psi_odd_and_bounded(z, b):
    loss = RhoFunction(b)
    assert loss.psi(-z) == -loss.psi(z)
    assert abs(loss.psi(z)) <= 2 * b


@given(finite, st.floats(0.1, 5.0))
def test_huber_bounded(r, c):
    assert abs(HuberPsi(c)(r)) <= c


@given(finite, finite, b_values)
def test_rho_monotone_in_abs(z1, z2, b):
    loss = RhoFunction(b)
    lo, hi = sorted([abs(z1), abs(z2)])
    assert loss.rho(lo) <= loss.rho(hi)


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_nonfinite_rejected(bad):
    with pytest.raises(ContractViolation):
        rho(RhoFunction(), bad)


@pytest.mark.parametrize("b", [0.0, -1.0, np.inf])
def test_invalid_b(b):
    with pytest.raises(ContractViolation):
        RhoFunction(b)


def test_invalid_c_and_kind():
    with pytest.raises(ContractViolation):
        HuberPsi(0.0)
    with pytest.raises(ContractViolation):
        RhoFunction(kind="smooth")


def test_array_input_returns_array():
    out = rho(RhoFunction(), np.array([0.5, 3.0]))
    assert isinstance(out, np.ndarray)
    np.testing.assert_allclose(out, [0.25, 4.0])
