"""Sprays, geodesics and closed-geodesic lengths.

In the gnomonic chart the spray of F is G^i = P y^i, so geodesics solve
x'' = -2 P(x, x') x'. Closed geodesics leave any single chart, so the
integrator hops to a chart centred at the current point whenever mu|x|^2
grows past CHART_LIMIT.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import (
    ChartExit,
    GaugeMismatch,
    NonConvergence,
    OutOfRegularRange,
    ValidationError,
)
from .gauge import canonical_gauge
from .phi import MetricParams, regularity_range, solve_phi
from .sphere import NavigationBundle, SphereData, _dot, find_c_poles

CHART_LIMIT = 3.0  # switch charts beyond 60 degrees from the centre
MAX_CHART_SWITCHES = 200


# spray scalars of an (alpha, beta)-metric

def spray_scalars(phi, s, b_sq):
    """Q, Theta, Psi, Delta at (s, b^2)."""
    f, df, ddf = phi.derivs(s)
    pm = f - s * df
    Q = df / pm
    dQ = ddf * f / (pm * pm)
    Delta = 1.0 + s * Q + (b_sq - s * s) * dQ
    return Q, (Q - s * dQ) / (2.0 * Delta), dQ / (2.0 * Delta), Delta


@dataclass(frozen=True, eq=False)
class SprayData:
    bundle: NavigationBundle

    def Q(self, s, b_sq):
        return spray_scalars(self.bundle.phi, s, b_sq)[0]

    def Theta(self, s, b_sq):
        return spray_scalars(self.bundle.phi, s, b_sq)[1]

    def Psi(self, s, b_sq):
        return spray_scalars(self.bundle.phi, s, b_sq)[2]

    def Delta(self, s, b_sq):
        return spray_scalars(self.bundle.phi, s, b_sq)[3]

    def tau(self, x):
        x = np.asarray(x, dtype=float)
        u, _, w = self.bundle.gauge(self.bundle.B(x))
        return _tau(self.bundle.sphere, x, u, w)

    def theta_form(self, x, y):
        return tau_theta(x, y, self.bundle)[1]


def _tau(sphere: SphereData, x, u, w):
    return (sphere.k - sphere.mu * _dot(sphere.xi_vec, x)) / np.sqrt(sphere.q(x)) * u / w


def tau_theta(x, y, bundle: NavigationBundle, d=None):
    """tau(x) and the 1-form theta(x, y)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if d is None:
        d = bundle.data(x, y)
    sp, k1 = bundle.sphere, bundle.params.k1
    u, v = d["u"], d["v"]
    tau = _tau(sp, x, u, d["w"])
    theta = (k1 * u - v) * tau * d["beta"] / u - sp.mu * _dot(x, y) / sp.q(x)
    return tau, theta


def projective_factor(x, y, bundle: NavigationBundle, d=None):
    """P with G^i = P y^i."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if d is None:
        d = bundle.data(x, y)
    p = bundle.params
    tau, theta = tau_theta(x, y, bundle, d)
    s = d["s"]
    f, df, _ = bundle.phi.derivs(s)
    f1 = 1.0 + (p.k1 + p.k3) * s * s + p.k2 * s**4
    return theta + 0.5 * tau * (f1 * df / f - (p.k1 + p.k2 * s * s) * s) * d["alpha"]


def h_projective_factor(x, y, mu: float):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return -mu * _dot(x, y) / (1.0 + mu * _dot(x, x))


def spray_assembled(x, y, bundle: NavigationBundle):
    """G^i built from G_alpha, Q, Theta, Psi and r_00 (beta closed, so s_ij = 0)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    p = bundle.params
    d = bundle.data(x, y)
    tau, theta = tau_theta(x, y, bundle, d)
    b_low, a = bundle.b_form(x)
    b_up = np.linalg.solve(a, b_low)
    B, alpha, beta, s = d["B"], d["alpha"], d["beta"], d["s"]
    G_alpha = theta * y - 0.5 * tau * (p.k1 * alpha**2 + p.k2 * beta**2) * b_up
    r00 = tau * ((1.0 + p.k1 * B) * alpha**2 + (p.k2 * B + p.k3) * beta**2)
    _, Theta, Psi, _ = spray_scalars(bundle.phi, s, B)
    return G_alpha + r00 * (Theta * y / alpha + Psi * b_up)


# geodesics

@dataclass(frozen=True, eq=False)
class GeodesicPath:
    t: np.ndarray
    X: np.ndarray  # global-ambient positions, shape (N, n+1)
    V: np.ndarray  # global-ambient velocities
    metric: str  # "F" or "h": the arclength the parameter measures
    closed_at: float | None
    f_length: np.ndarray  # running integral of F along the path
    angle: np.ndarray  # running sqrt(mu) * h-length
    charts: int

    @property
    def length(self) -> float:
        return float(self.f_length[-1])


def _rhs_factory(sphere: SphereData, bundle: NavigationBundle | None, metric: str):
    n = sphere.n
    sm = math.sqrt(sphere.mu)

    def rhs(t, z):
        x, y = z[:n], z[n:2 * n]
        h = math.sqrt(float(sphere.h_sq(x, y)))
        if metric == "h":
            P = float(h_projective_factor(x, y, sphere.mu))
        else:
            P = float(projective_factor(x, y, bundle))
        Fv = float(bundle.F(x, y)) if bundle is not None else h
        out = np.empty_like(z)
        out[:n] = y
        out[n:2 * n] = -2.0 * P * y
        out[2 * n] = sm * h
        out[2 * n + 1] = Fv
        return out

    return rhs


def integrate_geodesic(
    x0, y0, T: float, model: NavigationBundle | SphereData, metric: str = "F",
    tol: float = 1e-12, stop_when_closed: bool = False,
) -> GeodesicPath:
    """Geodesic of F (or of h) from (x0, y0) in the model's chart, y0 rescaled to unit speed.

    With stop_when_closed the run ends when the swept angle reaches 2 pi.
    """
    if isinstance(model, NavigationBundle):
        bundle, sphere = model, model.sphere
    else:
        bundle, sphere = None, model
        if metric != "h":
            raise ValidationError("an F-geodesic needs a NavigationBundle")
    if metric not in ("F", "h"):
        raise ValidationError("metric must be 'F' or 'h'")
    x0, y0 = np.asarray(x0, dtype=float), np.asarray(y0, dtype=float)
    if not np.any(y0 != 0):
        raise ValidationError("y0 must be nonzero")
    if not (T > 0) or not (tol > 0):
        raise ValidationError("T and tol must be positive")
    speed = float(bundle.F(x0, y0)) if metric == "F" else float(sphere.h_eval(x0, y0))
    y0 = y0 / speed
    n = sphere.n

    def leave(t, z):
        return sphere_cur.mu * float(np.dot(z[:n], z[:n])) - CHART_LIMIT

    leave.terminal, leave.direction = True, 1.0

    def closed(t, z):
        return z[2 * n] - 2.0 * math.pi

    closed.terminal, closed.direction = True, 1.0

    ts, Xs, Vs, Ls, As = [], [], [], [], []
    sphere_cur, bundle_cur = sphere, bundle
    z = np.concatenate([x0, y0, [0.0, 0.0]])
    t, switches, closed_at = 0.0, 0, None
    while True:
        rhs = _rhs_factory(sphere_cur, bundle_cur, metric)
        events = (leave, closed) if stop_when_closed else (leave,)
        sol = solve_ivp(rhs, (t, T), z, method="DOP853", rtol=tol, atol=tol * 1e-2, events=events)
        if sol.status == -1:
            raise NonConvergence(f"geodesic integration failed: {sol.message}")
        x, y = sol.y[:n].T, sol.y[n:2 * n].T
        X, V = sphere_cur.to_ambient(x, y)
        keep = slice(1, None) if ts else slice(None)
        ts.append(sol.t[keep]); Xs.append(X[keep]); Vs.append(V[keep])
        As.append(sol.y[2 * n][keep]); Ls.append(sol.y[2 * n + 1][keep])
        t, z = float(sol.t[-1]), sol.y[:, -1].copy()
        if sol.status == 0:
            break
        if stop_when_closed and len(sol.t_events) > 1 and sol.t_events[1].size:
            closed_at = float(sol.t_events[1][0])
            break
        switches += 1
        if switches > MAX_CHART_SWITCHES:
            raise ChartExit("too many chart switches")
        sphere_cur = sphere_cur.recentered(X[-1])
        if bundle is not None:
            bundle_cur = bundle.with_sphere(sphere_cur)
        xn, yn = sphere_cur.from_ambient(X[-1], V[-1])
        z = np.concatenate([xn, yn, z[2 * n:]])
    if stop_when_closed and closed_at is None:
        raise NonConvergence("geodesic did not close within T")
    return GeodesicPath(
        np.concatenate(ts), np.concatenate(Xs), np.concatenate(Vs), metric, closed_at,
        np.concatenate(Ls), np.concatenate(As), switches + 1,
    )


def _chart_start(sphere: SphereData, X, V):
    """Chart centred at X, with (x0, y0) for the ambient start (X, V)."""
    local = sphere.recentered(X)
    x0, y0 = local.from_ambient(X, V)
    return local, x0, y0


def family_start(sphere: SphereData, family: str):
    """Ambient (X, V) on a closed geodesic through the poles of c or on the equator c = 0."""
    n1 = sphere.n + 1
    a = sphere.functional()
    na = float(np.linalg.norm(a))
    r = 1.0 / math.sqrt(sphere.mu)
    if na < 1e-14:
        # Riemannian case: every great circle qualifies
        X = sphere.to_ambient(np.zeros(sphere.n))
        V = sphere.to_ambient(np.zeros(sphere.n), np.eye(sphere.n)[0])[1]
        return X, V / np.linalg.norm(V)
    ahat = a / na
    # a unit vector orthogonal to a, deterministic
    basis = np.eye(n1)[np.argsort(np.abs(ahat))]
    e = basis[0] - np.dot(basis[0], ahat) * ahat
    e /= np.linalg.norm(e)
    if family == "poles":
        P, _ = find_c_poles(sphere)
        return P.ambient, e
    if family == "equator":
        f = basis[1] - np.dot(basis[1], ahat) * ahat - np.dot(basis[1], e) * e
        f /= np.linalg.norm(f)
        return r * e, f
    raise ValidationError("family must be 'poles' or 'equator'")


def closed_geodesic_length(model: NavigationBundle | SphereData, family: str = "poles",
                           metric: str = "F", tol: float = 1e-12) -> tuple[float, GeodesicPath]:
    """F-length of one loop of the closed geodesic through the poles (or on c = 0)."""
    sphere = model.sphere if isinstance(model, NavigationBundle) else model
    X, V = family_start(sphere, family)
    local, x0, y0 = _chart_start(sphere, X, V)
    target = local if isinstance(model, SphereData) else model.with_sphere(local)
    T = 4.0 * math.pi / math.sqrt(sphere.mu) * 4.0
    path = integrate_geodesic(x0, y0, T, target, metric, tol, stop_when_closed=True)
    gap = float(np.linalg.norm(path.X[-1] - path.X[0])) * math.sqrt(sphere.mu)
    if gap > 1e-6:
        raise NonConvergence(f"loop failed to close (gap {gap:.2e})")
    return path.length, path


# length formulas

@dataclass(frozen=True)
class GaugedDelta:
    """A delta value tagged with the gauge it was measured in."""

    value: float
    gauge: str

    def __post_init__(self):
        if self.gauge not in ("canonical", "square"):
            raise ValidationError("gauge tag must be 'canonical' or 'square'")
        if not (self.value >= 0) or not math.isfinite(self.value):
            raise ValidationError("delta must be finite and >= 0")

    def _same(self, other):
        if isinstance(other, GaugedDelta):
            if other.gauge != self.gauge:
                raise GaugeMismatch(f"cannot mix {self.gauge} and {other.gauge} deltas")
            return other.value
        return NotImplemented

    def __add__(self, other):
        o = self._same(other)
        return o if o is NotImplemented else GaugedDelta(self.value + o, self.gauge)

    def __sub__(self, other):
        o = self._same(other)
        return o if o is NotImplemented else self.value - o

    def __eq__(self, other):
        o = self._same(other)
        return o if o is NotImplemented else self.value == o

    def __hash__(self):
        return hash((self.value, self.gauge))


def _delta_value(delta, gauge: str) -> float:
    if isinstance(delta, GaugedDelta):
        if delta.gauge != gauge:
            raise GaugeMismatch(f"this formula uses the {gauge} gauge, got a {delta.gauge} delta")
        return delta.value
    d = float(delta)
    if not (d >= 0) or not math.isfinite(d):
        raise ValidationError("delta must be finite and >= 0")
    return d


def _check_mu(mu):
    if not (mu > 0) or not math.isfinite(mu):
        raise ValidationError("mu must be positive and finite")


def _canonical_top(params: MetricParams, mu: float, d: float) -> float:
    top = 4.0 * d * d / (mu * mu)
    if not top < regularity_range(params):
        raise OutOfRegularRange(f"4 delta^2/mu^2 = {top:.6g} is outside the regular range")
    return top


def length_L1(params: MetricParams, mu: float, delta, tol: float = 1e-12) -> float:
    """Quadrature of F along a closed geodesic through the poles (canonical gauge)."""
    _check_mu(mu)
    d = _delta_value(delta, "canonical")
    period = 2.0 * math.pi / math.sqrt(mu)
    if d == 0:
        return period
    top = _canonical_top(params, mu, d)
    gauge = canonical_gauge(params, top)
    phi = solve_phi(params, 2.0 * d / mu * (1.0 + 1e-9))
    sm = math.sqrt(mu)

    def integrand(t):
        sn = math.sin(sm * t)
        B = top * sn * sn
        _, _, w = gauge(B)
        return float(phi(-2.0 * d / mu * sn)) / float(w)

    # quarter-period breakpoints keep the subdivision aligned with the integrand's symmetry
    pts = [period * j / 4.0 for j in range(1, 4)]
    val, err = quad(integrand, 0.0, period, points=pts, epsabs=tol, epsrel=1e-14, limit=1000)
    return val


def _sigma(params: MetricParams, top: float) -> float:
    val, _ = quad(lambda th: 0.5 * (params.k2 * th + params.k3) / params.denominator(th),
                  0.0, top, epsabs=1e-15, epsrel=1e-13, limit=1000)
    return val


def length_L2(params: MetricParams, mu: float, delta) -> float:
    """(2 pi / sqrt(mu)) exp(-sigma(4 delta^2 / mu^2)): F-length of the equatorial loop."""
    _check_mu(mu)
    d = _delta_value(delta, "canonical")
    period = 2.0 * math.pi / math.sqrt(mu)
    if d == 0:
        return period
    return period * math.exp(-_sigma(params, _canonical_top(params, mu, d)))


def series_L(params: MetricParams, mu: float, delta) -> float:
    """Expansion of the closed-geodesic length through delta^4."""
    _check_mu(mu)
    d = _delta_value(delta, "canonical")
    k1, k2, k3 = params.k1, params.k2, params.k3
    sm = math.sqrt(mu)
    return (2.0 * math.pi / sm - 4.0 * k3 * math.pi * d**2 / (mu**2 * sm)
            + 4.0 * (3.0 * k3**2 + 2.0 * k1 * k3 - 2.0 * k2) * math.pi * d**4 / (mu**4 * sm))


def length_square(sign: int, mu: float, delta) -> float:
    """2 pi / sqrt(mu) +- 8 pi delta^2 / mu^{5/2} for the square families (square gauge)."""
    _check_mu(mu)
    if sign not in (1, -1):
        raise ValidationError("sign must be +1 or -1")
    d = _delta_value(delta, "square")
    if sign < 0 and not mu * mu > 12.0 * d * d:
        raise OutOfRegularRange("F0- needs mu^2 > 12 delta^2")
    return 2.0 * math.pi / math.sqrt(mu) + sign * 8.0 * math.pi * d * d / (mu**2 * math.sqrt(mu))
