import numpy as np
import pytest

from projflat.errors import (
    NonPositiveResult,
    OutOfRegularRange,
    SolutionLeavesAdmissibleRegion,
    TargetOutOfRange,
    ValidationError,
)
from projflat.gauge import (
    canonical_gauge,
    inverse_transform,
    invert_norm_relation,
    solve_B,
    solve_gauge_ivp,
    square_gauge,
    transform,
)
from projflat.phi import MetricParams


def test_canonical_matches_ivp_at_known_point():
    p = MetricParams(2.0, 0.0, -3.0)
    can, ivp = canonical_gauge(p, 0.5), solve_gauge_ivp(p, 1.0, -1.0, 1.0, 0.5)
    for g in (can, ivp):
        u, v, w = g(0.25)
        assert (u, v, w) == pytest.approx((0.421875, -0.421875, 0.5625), abs=1e-10)


@pytest.mark.parametrize("k", [(0.5, 2.0, -1.0), (-1.0, -0.5, 2.0), (1.0, -1.0, 0.0)])
def test_canonical_solves_gauge_odes(k):
    g = canonical_gauge(MetricParams(*k), 1.0)
    B = np.linspace(0, 1.0, 300)
    assert np.max(g.residuals(B)) < 1e-9
    assert np.allclose(g.norm_relation(B), B, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("sign", [1, -1])
def test_square_gauge_against_ivp(sign):
    t_max = 0.9 if sign > 0 else 0.45
    sq = square_gauge(sign, t_max)
    ivp = solve_gauge_ivp(MetricParams(2.0 * sign, 0.0, -3.0 * sign), 1.0, 0.0, 1.0, t_max)
    B = np.linspace(0, t_max, 500)
    for a, b in zip(sq(B), ivp(B)):
        assert np.max(np.abs(a - b)) < 1e-9


def test_square_minus_values():
    assert square_gauge(-1)(0.3) == pytest.approx((1.69, 0.0, np.sqrt(1.3)), abs=1e-15)


@pytest.mark.parametrize("sign", [1, -1])
def test_square_norm_relation_inverse(sign):
    g = square_gauge(sign, 0.4)
    tau = np.array([0.0, 0.05, 0.2, g.norm_relation(0.39)])
    B = g.closed_inverse(tau)
    assert np.allclose(B, tau / (1 + sign * tau), rtol=1e-15)
    assert np.allclose(g.norm_relation(B), tau, rtol=1e-14, atol=1e-16)
    assert np.allclose(invert_norm_relation(tau, g), B, rtol=1e-13, atol=1e-16)


def test_bisection_inverse_for_ivp_gauge():
    p = MetricParams(0.5, 2.0, -1.0)
    g = solve_gauge_ivp(p, 2.0, -0.5, 1.5, 1.0)
    tau = np.linspace(0, 0.9 * float(g.norm_relation(1.0)), 9)
    B = solve_B(tau, g)
    assert np.allclose(g.norm_relation(B), tau, rtol=1e-12, atol=1e-15)
    with pytest.raises(TargetOutOfRange):
        invert_norm_relation(2.0 * float(g.norm_relation(1.0)), g)


def test_complex_lift_matches_finite_difference():
    g = solve_gauge_ivp(MetricParams(0.5, 2.0, -1.0), 1.0, -0.5, 1.0, 1.0)
    B, h = 0.4, 1e-30
    lifted = g(np.array(B) + 1j * h)
    fd = [(a - b) / 2e-6 for a, b in zip(g(B + 1e-6), g(B - 1e-6))]
    for z, d in zip(lifted, fd):
        assert np.imag(z) / h == pytest.approx(d, rel=1e-7)


def test_transform_round_trip():
    g = canonical_gauge(MetricParams(0.5, 2.0, -1.0), 1.0)
    h_sq, rho = transform(2.0, 0.3, 0.5, g)
    a_sq, beta = inverse_transform(h_sq, rho, 0.5, g)
    assert (a_sq, beta) == pytest.approx((2.0, 0.3), rel=1e-14)


def test_errors():
    g = canonical_gauge(MetricParams(0.5, 2.0, -1.0), 1.0)
    with pytest.raises(OutOfRegularRange):
        transform(1.0, 0.1, 2.0, g)
    with pytest.raises(ValidationError):
        transform(-1.0, 0.1, 0.5, g)
    with pytest.raises(OutOfRegularRange):
        square_gauge(1, 1.0)
    with pytest.raises(ValidationError):
        solve_gauge_ivp(MetricParams(0.5, 2.0, -1.0), -1.0, 0.0, 1.0, 1.0)
    with pytest.raises(SolutionLeavesAdmissibleRegion):
        solve_gauge_ivp(MetricParams(0.5, 2.0, -1.0), 1.0, 5.0, 1.0, 1.0)
    gi = solve_gauge_ivp(MetricParams(0.5, 2.0, -1.0), 1.0, 0.5, 1.0, 0.6)
    with pytest.raises(NonPositiveResult):
        inverse_transform(0.1, 1.0, 0.5, gi)
