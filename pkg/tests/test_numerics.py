import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as sp_integrate
from scipy.special import gammainc, gamma

from coalpoint.numerics import (
    InvalidIntegrandError,
    QuadratureBudgetError,
    integrate_cumulative,
    integrate_finite,
    integrate_semi_infinite,
)


def half_gamma_series(x, sigma=-0.5, terms=60):
    # int_0^x s^sigma e^-s ds = sum (-1)^m x^(m+sigma+1) / (m! (m+sigma+1))
    total = 0.0
    for m in range(terms):
        total += (-1) ** m * x ** (m + sigma + 1) / (math.factorial(m) * (m + sigma + 1))
    return total


def test_exponential_tail():
    r = integrate_semi_infinite(lambda x: np.exp(-x), abs_tol=1e-10)
    assert abs(r.value - 1.0) <= 1e-10
    assert r.error_estimate >= 0 and r.evaluations > 0


def test_algebraic_tail_with_hint():
    r = integrate_semi_infinite(lambda x: (1 + x) ** -2.0, abs_tol=1e-10, tail_decay_hint=2.0)
    assert abs(r.value - 1.0) <= 1e-10


def test_critical_spectrum_integrand():
    f = lambda x: (1 + x) ** -2.0 * (x / (1 + x)) ** 2
    r = integrate_semi_infinite(f, abs_tol=1e-10, tail_decay_hint=2.0)
    assert abs(r.value - 1 / 3) <= 1e-9


def test_empty_interval_costs_nothing():
    r = integrate_finite(lambda s: np.full_like(s, np.nan), 0.0, 0.0)
    assert (r.value, r.error_estimate, r.evaluations) == (0.0, 0.0, 0)


def test_critical_w_theta_piece():
    r = integrate_finite(lambda u: np.exp(-u), 0.0, 1.0, abs_tol=1e-12)
    assert abs(r.value - (1 - math.exp(-1))) <= 1e-12


@pytest.mark.parametrize("sigma", [-0.5, -0.25])
def test_singular_endpoint_against_series(sigma):
    r = integrate_finite(lambda s: s**sigma * np.exp(-s), 0.0, 1.0, abs_tol=1e-11, singular_exponent_at_a=sigma)
    assert abs(r.value - half_gamma_series(1.0, sigma)) <= 1e-9


def test_singular_endpoint_against_incomplete_gamma():
    for x in (0.01, 0.5, 3.0, 12.0):
        r = integrate_finite(lambda s: s**-0.5 * np.exp(-s), 0.0, x, abs_tol=1e-12, singular_exponent_at_a=-0.5)
        assert r.value == pytest.approx(gammainc(0.5, x) * gamma(0.5), abs=1e-10)


def test_reversed_bounds_rejected():
    with pytest.raises(ValueError):
        integrate_finite(np.exp, 1.0, 0.0)


def test_nan_integrand_is_reported():
    with pytest.raises(InvalidIntegrandError):
        integrate_finite(lambda s: np.where(s > 0.5, np.nan, 1.0), 0.0, 1.0)


def test_budget_error_carries_partial_value():
    # 1/x on (0, inf) diverges: the doubling windows never shrink
    with pytest.raises(QuadratureBudgetError) as info:
        integrate_semi_infinite(lambda x: 1.0 / (1.0 + x), abs_tol=1e-10, budget=5000)
    assert info.value.partial.value > 0


def test_budget_error_on_finite_interval():
    with pytest.raises(QuadratureBudgetError):
        integrate_finite(lambda s: np.sin(1.0 / s), 1e-9, 1.0, abs_tol=1e-14, budget=3000)


def test_deterministic():
    f = lambda x: np.exp(-x) / (1 + x)
    a = integrate_semi_infinite(f, abs_tol=1e-12)
    b = integrate_semi_infinite(f, abs_tol=1e-12)
    assert a == b


def test_cumulative_matches_scipy():
    f = lambda u: np.exp(-0.7 * u) * (1 + u) ** -0.3
    pts = np.array([3.0, 0.0, 0.25, 7.5, 0.25, 1.0])
    values, errors = integrate_cumulative(f, pts, abs_tol=1e-13)
    for x, v in zip(pts, values):
        ref = sp_integrate.quad(f, 0, x, epsabs=1e-14, epsrel=1e-13)[0] if x > 0 else 0.0
        assert v == pytest.approx(ref, abs=1e-11)
    assert np.all(errors >= 0)


def test_cumulative_rejects_negative_points():
    with pytest.raises(ValueError):
        integrate_cumulative(np.exp, np.array([-1.0]))


_catalog = [
    lambda x: np.exp(-x),
    lambda x: (1 + x) ** -2.0,
    lambda x: np.exp(-2 * x) * (1 - np.exp(-x)) ** 3,
    lambda x: (1 + x) ** -3.0 * x,
]


@settings(max_examples=40, deadline=None)
@given(
    i=st.integers(0, len(_catalog) - 1),
    j=st.integers(0, len(_catalog) - 1),
    alpha=st.floats(-3, 3),
    beta=st.floats(-3, 3),
)
def test_linearity(i, j, alpha, beta):
    f, g = _catalog[i], _catalog[j]
    hint = 2.0  # every catalog entry decays at least like x^-2
    rf = integrate_semi_infinite(f, 1e-10, tail_decay_hint=hint)
    rg = integrate_semi_infinite(g, 1e-10, tail_decay_hint=hint)
    rh = integrate_semi_infinite(lambda x: alpha * f(x) + beta * g(x), 1e-10, tail_decay_hint=hint)
    slack = 2 * (rf.error_estimate * abs(alpha) + rg.error_estimate * abs(beta) + rh.error_estimate) + 1e-10
    assert abs(rh.value - (alpha * rf.value + beta * rg.value)) <= slack
