import math

import numpy as np
import pytest

from projflat.errors import DegenerateField, OutOfRegularRange, ValidationError
from projflat.phi import MetricParams
from projflat.sphere import (
    NavigationBundle,
    SphereData,
    christoffel_fd,
    conformal_residuals,
    beta_reconstruction_residual,
    metric_split_residual,
    find_c_poles,
    square_alpha_beta_closed,
)


def riemann_sectional_fd(sphere, x, u, v, step=1e-4):
    """Sectional curvature of h from finite-difference Christoffel symbols."""
    n = sphere.n
    G = christoffel_fd(sphere, x)
    dG = np.empty((n, n, n, n))  # dG[m] = d_m Gamma
    for m in range(n):
        e = np.zeros(n)
        e[m] = step
        dG[m] = (christoffel_fd(sphere, x + e) - christoffel_fd(sphere, x - e)) / (2 * step)
    # R^l_ijk = d_j G^l_ik - d_k G^l_ij + G^l_jm G^m_ik - G^l_km G^m_ij
    R = (np.einsum("jlik->lijk", dG) - np.einsum("klij->lijk", dG)
         + np.einsum("ljm,mik->lijk", G, G) - np.einsum("lkm,mij->lijk", G, G))
    g = sphere.h_matrix(x)
    Rlow = np.einsum("pl,lijk->pijk", g, R)
    num = np.einsum("pijk,p,i,j,k->", Rlow, u, v, u, v)
    den = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    return num / den


def test_h_has_constant_curvature(rng):
    sphere = SphereData(1.7, 0.3, (0.1, 0.2, -0.3))
    for _ in range(3):
        x, u, v = rng.normal(size=(3, 3)) * 0.6
        assert riemann_sectional_fd(sphere, x, u, v) == pytest.approx(1.7, rel=1e-5)


def test_delta_constant(rng):
    sphere = SphereData(1.3, 0.4, (0.2, -0.1, 0.3))
    d = sphere.delta_at(rng.normal(size=(200, 3)))
    assert np.std(d) < 1e-12


def test_from_delta():
    s = SphereData.from_delta(2.0, 0.3, 3, direction=(1, 2, 3, 4))
    assert s.delta() == pytest.approx(0.3, rel=1e-14)
    assert np.linalg.norm(s.functional()) == pytest.approx(0.3, rel=1e-14)


def test_poles():
    s = SphereData.from_delta(2.0, 0.3, 2, direction=(0.2, 0.9, -0.4))
    p1, p2 = find_c_poles(s)
    for p in (p1, p2):
        assert p.c**2 == pytest.approx(0.3**2 / 2.0, rel=1e-12)
        assert np.linalg.norm(p.ambient) == pytest.approx(1 / math.sqrt(2.0), rel=1e-13)
    with pytest.raises(DegenerateField):
        find_c_poles(SphereData(1.0, 0.0, (0.0, 0.0)))


def test_chart_round_trip_and_recentering(rng):
    s = SphereData(1.5, 0.2, (0.3, -0.1))
    x, y = rng.normal(size=(2, 2))
    X, V = s.to_ambient(x, y)
    x2, y2 = s.from_ambient(X, V)
    assert np.allclose(x2, x, atol=1e-14) and np.allclose(y2, y, atol=1e-14)
    other = s.recentered(X)
    xl, yl = other.from_ambient(X, V)
    assert np.allclose(xl, 0, atol=1e-14)
    assert float(other.c(xl)) == pytest.approx(float(s.c(x)), abs=1e-14)
    assert float(other.h_sq(xl, yl)) == pytest.approx(float(s.h_sq(x, y)), rel=1e-13)


def test_conformal_identities(rng):
    s = SphereData(1.3, 0.4, (0.2, -0.1, 0.3))
    for x in rng.normal(size=(5, 3)) * 0.7:
        r1, r2 = conformal_residuals(s, x)
        assert r1 < 1e-7 and r2 < 1e-7


def test_reconstruction_residuals(general_bundle, rng):
    x, y = rng.normal(size=(100, 3)) * 0.7, rng.normal(size=(100, 3))
    assert np.max(np.abs(beta_reconstruction_residual(x, y, general_bundle))) < 1e-12
    assert np.max(np.abs(metric_split_residual(x, y, general_bundle))) < 1e-12


def test_square_reconstruction_matches_closed_form(square_bundles, rng):
    for (sign, _), bundle in square_bundles.items():
        x, y = rng.normal(size=(50, 2)) * 0.7, rng.normal(size=(50, 2))
        a, b = bundle.alpha_beta(x, y)
        a2, b2 = square_alpha_beta_closed(x, y, bundle.sphere, sign)
        assert np.allclose(a, a2, rtol=1e-12) and np.allclose(b, b2, rtol=1e-12, atol=1e-14)


def test_F_positive_and_homogeneous(general_bundle, rng):
    x, y = rng.normal(size=(50, 3)) * 0.7, rng.normal(size=(50, 3))
    F = general_bundle.F(x, y)
    assert np.all(F > 0)
    assert np.allclose(general_bundle.F(x, 2.5 * y), 2.5 * F, rtol=1e-14)
    assert np.max(general_bundle.data(x, y)["B"]) <= general_bundle.b_sq_max * (1 + 1e-12)


@pytest.mark.parametrize("mu", [0.5, 1.0, 3.7])
def test_zero_minus_rejection_boundary(mu):
    edge = mu / math.sqrt(12.0)
    p = MetricParams(-2.0, 0.0, 3.0)
    for f in (0.9, 1 - 1e-12, 1.0, 1 + 1e-12, 1.1):
        sphere = SphereData.from_delta(mu, edge * f)
        d = sphere.delta()
        if mu * mu <= 12.0 * d * d:
            with pytest.raises(OutOfRegularRange):
                NavigationBundle.build(sphere, p, "square")
        else:
            NavigationBundle.build(sphere, p, "square")


def test_bad_sphere_data():
    with pytest.raises(ValidationError):
        SphereData(-1.0, 0.0, (0.0, 0.0))
    with pytest.raises(ValidationError):
        SphereData(1.0, 0.0, (0.0,))
