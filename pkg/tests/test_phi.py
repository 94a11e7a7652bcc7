import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from projflat.errors import DenominatorVanishes, NotRegularAtZero, RandersType, ValidationError
from projflat.phi import (
    MetricParams,
    algebraic_range,
    b_hat_direct,
    phi_minus_s_dphi_closed,
    regularity_range,
    solve_phi,
    taylor_phi,
)

from conftest import POLE_FINITE


def rk_oracle(params, s_end):
    """Independent adaptive Runge-Kutta march of the profile ODE from s = 0."""
    def rhs(s, z):
        f, df = z
        return [df, (params.k1 + params.k2 * s * s) * (f - s * df) / params.denominator(s * s)]
    sol = solve_ivp(rhs, (0.0, s_end), [1.0, params.epsilon], method="DOP853", rtol=1e-13, atol=1e-14,
                    dense_output=True)
    return sol.sol


@pytest.mark.parametrize("params, s_max", [
    (MetricParams(1.0, 1.0, 0.0, 0.0), 2.0),
    (MetricParams(0.5, 2.0, -1.0, 0.3), 1.5),
    (POLE_FINITE, 1.3),
])
def test_phi_matches_runge_kutta(params, s_max):
    sol = solve_phi(params, s_max)
    s = np.linspace(-s_max, s_max, 101)
    ref_pos, ref_neg = rk_oracle(params, s_max), rk_oracle(params, -s_max)
    ref = np.where(s >= 0, ref_pos(np.abs(s))[0], ref_neg(-np.abs(s))[0])
    assert np.max(np.abs(sol(s) - ref)) < 1e-10


def test_phi_initial_values_and_residual():
    p = MetricParams(0.5, 2.0, -1.0, 0.3)
    sol = solve_phi(p, 1.0)
    f, df, _ = sol.derivs(0.0)
    assert f == pytest.approx(1.0, abs=1e-15)
    assert df == pytest.approx(0.3, abs=1e-14)
    assert np.max(np.abs(sol.residual(np.linspace(-1, 1, 333)))) < 1e-10


def test_taylor_coefficients_against_solution():
    p = MetricParams(0.7, -0.4, 1.1, 0.2)
    sol = solve_phi(p, 0.5)
    c = taylor_phi(p)
    for s in (0.02, 0.01):
        poly = sum(ci * s**i for i, ci in enumerate(c))
        # the remainder is O(s^5)
        assert abs(float(sol(s)) - poly) < 5.0 * s**5


def test_square_profiles_are_closed_form():
    for sign in (1, -1):
        p = MetricParams(2.0 * sign, 0.0, -3.0 * sign, 0.7)
        sol = solve_phi(p, 0.5)
        s = np.linspace(-0.5, 0.5, 11)
        assert np.allclose(sol(s), 1 + 0.7 * s + sign * s * s, atol=0, rtol=1e-15)
        assert np.max(np.abs(sol.residual(s))) < 1e-14


def test_complex_step_derivative_of_phi():
    sol = solve_phi(MetricParams(0.5, 2.0, -1.0, 0.3), 1.0)
    s = np.linspace(-0.9, 0.9, 7)
    h = 1e-30
    d = np.imag(sol(s + 1j * h)) / h
    assert np.allclose(d, sol.derivs(s)[1], rtol=1e-13, atol=1e-13)


@given(
    k1=st.floats(-2, 2), k2=st.floats(-2, 2), k3=st.floats(-2, 2), eps=st.floats(-1, 1),
)
@settings(max_examples=25, deadline=None, derandomize=True)
def test_integral_identity_property(k1, k2, k3, eps):
    if abs(k2 - k1 * k3) < 1e-3:
        return
    p = MetricParams(k1, k2, k3, eps)
    try:
        sup = regularity_range(p)
    except NotRegularAtZero:
        return
    s_max = min(math.sqrt(sup) * 0.9, 1.5) if math.isfinite(sup) else 1.5
    sol = solve_phi(p, s_max)
    s = np.linspace(-s_max, s_max, 17)
    f, df, _ = sol.derivs(s)
    assert np.allclose(f - s * df, phi_minus_s_dphi_closed(p, s), rtol=1e-8, atol=1e-13)


@pytest.mark.parametrize("k, expected", [
    ((2.0, 0.0, -3.0, 2.0), 1.0),
    ((-2.0, 0.0, 3.0, 0.0), 0.5),
    ((1.0, -1.0, 0.0, 0.0), (1 + math.sqrt(5)) / 2),
    ((1.0, 1.0, 0.0, 0.0), math.inf),
])
def test_regularity_range_values(k, expected):
    got = regularity_range(MetricParams(*k))
    assert got == pytest.approx(expected, rel=1e-12) if math.isfinite(expected) else got == math.inf


def test_algebraic_range_stops_at_denominator_root():
    assert algebraic_range(MetricParams(1.0, -1.0, 0.0)) == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-14)


def test_tiny_k2_is_harmless():
    p = MetricParams(1.0, 1.5732393842443256e-139, 1.0)
    assert regularity_range(p) == math.inf
    assert np.max(np.abs(solve_phi(p, 1.0).residual(np.linspace(-1, 1, 51)))) < 1e-10


def test_b_hat_direct_table():
    cases = [
        (lambda s: 1 + s, lambda s: np.ones_like(s), lambda s: np.zeros_like(s), 1.0),
        (lambda s: 1 + s * s, lambda s: 2 * s, lambda s: np.full_like(s, 2.0), 1.0),
        (lambda s: 1 - s * s, lambda s: -2 * s, lambda s: np.full_like(s, -2.0), 1 / math.sqrt(2)),
    ]
    for f, df, ddf, want in cases:
        assert b_hat_direct(f, df, ddf) == pytest.approx(want, abs=1e-9)


def test_randers_type_rejected():
    with pytest.raises(RandersType):
        MetricParams(1.0, 2.0, 2.0)


def test_denominator_vanishing_rejected():
    with pytest.raises(DenominatorVanishes):
        solve_phi(MetricParams(2.0, 0.0, -3.0, 0.0), 1.5)


def test_bad_inputs():
    with pytest.raises(ValidationError):
        MetricParams(float("nan"), 0.0, 1.0)
    with pytest.raises(ValidationError):
        solve_phi(MetricParams(1.0, 1.0, 0.0), -1.0)
