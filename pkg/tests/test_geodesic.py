import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from projflat.errors import GaugeMismatch, OutOfRegularRange, ValidationError
from projflat.geodesic import (
    GaugedDelta,
    closed_geodesic_length,
    integrate_geodesic,
    length_L1,
    length_L2,
    length_square,
    projective_factor,
    series_L,
    spray_assembled,
)
from projflat.phi import MetricParams
from projflat.sphere import NavigationBundle, SphereData

from conftest import GENERAL


def spray_oracle(F, x, y, hx=1e-4, hy=1e-4):
    """G^i = 1/4 g^il ([F^2]_{x^k y^l} y^k - [F^2]_{x^l}) with every derivative by finite differences."""
    n = len(x)
    L = lambda xx, yy: float(F(xx, yy)) ** 2
    E = np.eye(n)
    g = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            g[i, j] = 0.5 * (L(x, y + hy * (E[i] + E[j])) - L(x, y + hy * (E[i] - E[j]))
                             - L(x, y - hy * (E[i] - E[j])) + L(x, y - hy * (E[i] + E[j]))) / (4 * hy * hy)
    Lx = np.array([(L(x + hx * E[l], y) - L(x - hx * E[l], y)) / (2 * hx) for l in range(n)])
    # sum_k y^k d/dx^k of L_{y^l} = directional x-derivative of L_y along y
    Ly = lambda xx: np.array([(L(xx, y + hy * E[l]) - L(xx, y - hy * E[l])) / (2 * hy) for l in range(n)])
    Lxy_y = (Ly(x + hx * y) - Ly(x - hx * y)) / (2 * hx)
    return 0.25 * np.linalg.solve(g, Lxy_y - Lx)


def test_spray_matches_finsler_oracle(general_bundle, rng):
    for _ in range(4):
        x, y = rng.normal(size=3) * 0.5, rng.normal(size=3)
        G = spray_oracle(general_bundle.F, x, y)
        P = float(projective_factor(x, y, general_bundle))
        assert np.allclose(P * y, G, atol=2e-6 * np.linalg.norm(y) ** 2)
        assert np.allclose(spray_assembled(x, y, general_bundle), P * y, rtol=1e-10, atol=1e-12)


def test_square_spray_matches_oracle(square_bundles, rng):
    for bundle in square_bundles.values():
        x, y = rng.normal(size=2) * 0.5, rng.normal(size=2)
        G = spray_oracle(bundle.F, x, y)
        assert np.allclose(float(projective_factor(x, y, bundle)) * y, G, atol=2e-6 * np.linalg.norm(y) ** 2)


def test_projective_factor_is_homogeneous(general_bundle, rng):
    x, y = rng.normal(size=(20, 3)) * 0.5, rng.normal(size=(20, 3))
    assert np.allclose(projective_factor(x, 3.0 * y, general_bundle),
                       3.0 * projective_factor(x, y, general_bundle), rtol=1e-13)


def test_geodesics_are_great_circles(general_bundle):
    # projective flatness: the path stays in the 2-plane spanned by X0 and V0
    path = integrate_geodesic(np.array([0.1, -0.2, 0.3]), np.array([0.5, 0.1, -0.4]), 3.0, general_bundle)
    basis, _ = np.linalg.qr(np.stack([path.X[0], path.V[0]], axis=1))
    off_plane = path.X - (path.X @ basis) @ basis.T
    assert np.max(np.abs(off_plane)) < 1e-10


@pytest.mark.parametrize("family", ["poles", "equator"])
@pytest.mark.parametrize("sign, eps", [(1, 2.0), (-1, 0.0)])
def test_square_loop_lengths(family, sign, eps):
    sphere = SphereData.from_delta(1.0, 0.1, 2, direction=(0.3, 0.4, 0.5))
    bundle = NavigationBundle.build(sphere, MetricParams(2.0 * sign, 0.0, -3.0 * sign, eps), "square")
    L, path = closed_geodesic_length(bundle, family)
    assert L == pytest.approx(length_square(sign, 1.0, 0.1), rel=1e-9)
    assert path.charts > 1


def test_general_loop_matches_both_formulas():
    mu, d = 1.3, 0.25
    bundle = NavigationBundle.build(SphereData.from_delta(mu, d, 2), GENERAL)
    L, _ = closed_geodesic_length(bundle, "poles")
    assert L == pytest.approx(length_L1(GENERAL, mu, d), rel=1e-9)
    assert L == pytest.approx(length_L2(GENERAL, mu, d), rel=1e-9)


def test_L2_against_gauss_legendre():
    p, mu, d = MetricParams(0.7, -0.4, 1.1, 0.2), 2.0, 0.4
    top = 4 * d * d / mu**2
    x, w = leggauss(60)
    th = 0.5 * top * (x + 1)
    sigma = 0.5 * top * np.sum(w * 0.5 * (p.k2 * th + p.k3) / p.denominator(th))
    assert length_L2(p, mu, d) == pytest.approx(2 * math.pi / math.sqrt(mu) * math.exp(-sigma), rel=1e-13)


def test_known_closed_form_length():
    # (2, 0, -3): sigma has a closed form giving 2 pi (1 - 4 delta^2)^{-3/2}
    p, d = MetricParams(2.0, 0.0, -3.0, 2.0), 0.05
    want = 2 * math.pi * (1 - 4 * d * d) ** -1.5
    assert length_L1(p, 1.0, d) == pytest.approx(want, rel=1e-12)
    assert length_L2(p, 1.0, d) == pytest.approx(want, rel=1e-12)


def test_series_remainder_is_sixth_order():
    p = MetricParams(0.5, 2.0, -1.0)
    r = [length_L2(p, 1.0, d) - series_L(p, 1.0, d) for d in (0.04, 0.02)]
    assert r[0] / r[1] == pytest.approx(64.0, rel=0.1)


def test_riemannian_loop():
    bundle = NavigationBundle.build(SphereData(2.0, 0.0, (0.0, 0.0)), GENERAL)
    L, _ = closed_geodesic_length(bundle, "poles")
    assert L == pytest.approx(2 * math.pi / math.sqrt(2.0), rel=1e-12)
    assert length_L1(GENERAL, 2.0, 0.0) == length_L2(GENERAL, 2.0, 0.0) == 2 * math.pi / math.sqrt(2.0)


def test_gauge_tags_do_not_mix():
    a, b = GaugedDelta(0.1, "canonical"), GaugedDelta(0.1, "square")
    with pytest.raises(GaugeMismatch):
        a + b
    with pytest.raises(GaugeMismatch):
        length_square(1, 1.0, a)
    with pytest.raises(GaugeMismatch):
        length_L2(GENERAL, 1.0, b)
    assert (a + GaugedDelta(0.2, "canonical")).value == pytest.approx(0.3)


def test_length_errors():
    with pytest.raises(OutOfRegularRange):
        length_square(-1, 1.0, 0.3)
    with pytest.raises(OutOfRegularRange):
        length_L2(MetricParams(2.0, 0.0, -3.0), 1.0, 0.6)
    with pytest.raises(ValidationError):
        length_L1(GENERAL, -1.0, 0.1)
    with pytest.raises(ValidationError):
        integrate_geodesic([0.0, 0.0], [0.0, 0.0], 1.0, SphereData(1.0, 0.0, (0.0, 0.0)), "h")
