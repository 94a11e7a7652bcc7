"""Flag curvature: the projective-factor route, the reduced function R(s, t) and
its variant R~(s, t), the square-family closed forms, and extrema over the domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize

from .errors import (
    EmptyDomain,
    OutsideDomain,
    RegularityViolated,
    RouteDisagreement,
    ValidationError,
)
from .gauge import UvwGauge, invert_norm_relation, solve_B
from .geodesic import projective_factor, tau_theta
from .phi import MetricParams, PhiSolution
from .sphere import NavigationBundle, _dot, regular_setup, resolve_gauge

DOMAIN_SLACK = 1e-12
CSTEP = 1e-30


def _arr(x):
    x = np.asarray(x)
    return x if np.iscomplexobj(x) else x.astype(float)


def _fs(params: MetricParams, s):
    k1, k2, k3 = params.k1, params.k2, params.k3
    s2 = s * s
    f1 = 1.0 + (k1 + k3) * s2 + k2 * s2 * s2
    f2 = k2 * s2 * s2 - k1 * s2 - 2.0
    f3 = 3.0 * k2 * s2 + k1 + 3.0 * k3
    # (4 f1 - f2^2) / s^2 as an exact polynomial, so s = 0 needs no limit
    quot = 4.0 * k3 + (8.0 * k2 - k1 * k1) * s2 + 2.0 * k1 * k2 * s2 * s2 - k2 * k2 * s2**3
    return f1, f2, f3, quot


def _R_core(params, phi, mu, s, T, u, v, w):
    f, df, _ = phi.derivs(s)
    f1, f2, f3, quot = _fs(params, s)
    brace = 3.0 * u * (f1 * f1 * df * df / (f * f) + quot) + 2.0 * (u * f3 - v) * (f2 - f1 * s * df / f)
    return u / (f * f * w * w) * brace * T + mu * u * (f1 * s * df - f2 * f) / (2.0 * f**3)


@dataclass(frozen=True, eq=False)
class CurvatureModel:
    """(params, gauge, mu, delta) with phi solved on the whole s-range of the domain."""

    params: MetricParams
    gauge: UvwGauge
    phi: PhiSolution
    mu: float
    delta: float
    b_sq_max: float

    @classmethod
    def build(cls, params: MetricParams, mu: float, delta: float, gauge: UvwGauge | str = "canonical"):
        if not (mu > 0) or not math.isfinite(mu):
            raise ValidationError("mu must be positive and finite")
        if not (delta >= 0) or not math.isfinite(delta):
            raise ValidationError("delta must be finite and >= 0")
        gauge = resolve_gauge(params, gauge)
        b_sq_max, phi = regular_setup(params, gauge, mu, delta)
        return cls(params, gauge, phi, float(mu), float(delta), b_sq_max)

    @classmethod
    def from_bundle(cls, bundle: NavigationBundle):
        return cls(bundle.params, bundle.gauge, bundle.phi, bundle.mu, bundle.delta, bundle.b_sq_max)

    @property
    def t_max(self) -> float:
        return self.delta**2 / self.mu

    @property
    def t_o(self) -> float:
        """Unique t_o with w^2 t_o^2 / (u + v t_o^2) = 4 delta^2 / mu^2."""
        return math.sqrt(float(invert_norm_relation(4.0 * self.delta**2 / self.mu**2, self.gauge)))

    def B_of_t(self, t):
        t = _arr(t)
        target = 4.0 * (self.delta**2 - self.mu * t) / self.mu**2
        target = np.where(np.real(target) < 0, 0.0, target)
        return solve_B(target, self.gauge)

    def R(self, s, t, check: bool = True, B=None):
        s, t = np.broadcast_arrays(_arr(s), _arr(t))
        B = self.B_of_t(t) if B is None else B
        if check:
            slack = DOMAIN_SLACK * max(1.0, self.t_max)
            if np.any(t < -slack) or np.any(t > self.t_max + slack) or np.any(s * s > B + DOMAIN_SLACK):
                raise OutsideDomain("(s, t) outside D")
        u, v, w = self.gauge(B)
        return _R_core(self.params, self.phi, self.mu, s, t, u, v, w)

    def A(self, tt):
        tt = _arr(tt)
        u, v, w = self.gauge(tt * tt)
        return (self.delta**2 - 0.25 * self.mu**2 * w * w * tt * tt / (u + v * tt * tt)) / self.mu

    def R_tilde(self, s, tt, check: bool = True):
        s, tt = np.broadcast_arrays(_arr(s), _arr(tt))
        if check:
            t_o = self.t_o
            if np.any(tt < -DOMAIN_SLACK) or np.any(tt > t_o * (1 + DOMAIN_SLACK) + DOMAIN_SLACK) \
                    or np.any(np.abs(s) > tt + DOMAIN_SLACK):
                raise OutsideDomain("(s, t) outside D~")
        u, v, w = self.gauge(tt * tt)
        return _R_core(self.params, self.phi, self.mu, s, self.A(tt), u, v, w)


def R_eval(s, t, model: CurvatureModel):
    return model.R(s, t)


def R_tilde_eval(s, t, model: CurvatureModel):
    return model.R_tilde(s, t)


# the projective route

def _curvature_terms(x, y, bundle: NavigationBundle):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    d = bundle.data(x, y)
    p, sp = bundle.params, bundle.sphere
    k1, k2, k3 = p.k1, p.k2, p.k3
    mu = sp.mu
    u, v, w = d["u"], d["v"], d["w"]
    alpha, beta, s = d["alpha"], d["beta"], d["s"]
    tau, theta = tau_theta(x, y, bundle, d)
    q = sp.q(x)
    sq = np.sqrt(q)
    kk = sp.k - mu * _dot(sp.xi_vec, x)
    xy, yy, xiy = _dot(x, y), _dot(y, y), _dot(sp.xi_vec, y)
    # tau_0 = d tau(y); 1/w multiplies both terms (checked against autodiff of tau)
    tau0 = (tau * (k3 * u - v) * kk / (w * sq) * beta
            - mu * u / (w * sq) * (kk * xy / q + xiy))
    theta0 = ((k1 * u - v) / u * (tau**2 * alpha**2 + tau0 * beta + 2.0 * tau * theta * beta)
              + (k1 * k3 - 2.0 * k2 + (k3 + 2.0 * k1) * v / u - 2.0 * v * v / (u * u)) * tau**2 * beta**2
              - mu * (q * yy - 2.0 * mu * xy**2) / q**2)
    f, df, _ = bundle.phi.derivs(s)
    f1 = 1.0 + (k1 + k3) * s * s + k2 * s**4
    K = ((theta**2 - theta0) / (alpha**2 * f**2)
         + 0.5 / f**2 * ((k1 + k2 * s * s) * s - f1 * df / f) * tau0 / alpha
         - f1 * (k1 + 2.0 * k3 + 3.0 * k2 * s * s) * s * tau**2 * df / (2.0 * f**3)
         + 3.0 * f1**2 * tau**2 * df**2 / (4.0 * f**4)
         + (4.0 * k2 - k1**2 + 2.0 * k2 * (k1 + 2.0 * k3) * s * s + 3.0 * k2**2 * s**4) * s * s * tau**2 / (4.0 * f**2))
    return K, d


def flag_curvature_fd(x, y, bundle: NavigationBundle, step: float = 1e-5):
    """(P^2 - P_{x^k} y^k) / F^2 with the directional derivative by central differences."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    e = step / ny
    P = projective_factor(x, y, bundle)
    dP = (projective_factor(x + e * y, y, bundle) - projective_factor(x - e * y, y, bundle)) / (2.0 * e[..., 0])
    F = bundle.F(x, y)
    return (P * P - dP) / (F * F)


def flag_curvature_numeric(x, y, bundle: NavigationBundle, cross_check: bool = True, tol: float = 1e-4):
    """K at (x, y) from closed-form theta_0, tau_0, confirmed by a finite-difference route."""
    K, _ = _curvature_terms(x, y, bundle)
    if cross_check:
        K_fd = flag_curvature_fd(x, y, bundle)
        gap = np.abs(K - K_fd)
        if np.any(gap > tol * np.maximum(1.0, np.abs(K))):
            raise RouteDisagreement(f"closed-form and finite-difference K differ by {float(np.max(gap)):.3e}")
    return K


def K_via_R(x, y, bundle: NavigationBundle, model: CurvatureModel | None = None):
    """R(beta/alpha, c^2) at (x, y)."""
    model = model or CurvatureModel.from_bundle(bundle)
    a, b = bundle.alpha_beta(x, y)
    return model.R(b / a, bundle.sphere.c(x) ** 2)


# square families

VARIANTS = {
    "square-plus": (1, 2.0),   # F_2^+ : phi = (1 + s)^2
    "zero-plus": (1, 0.0),     # F_0^+ : phi = 1 + s^2
    "zero-minus": (-1, 0.0),   # F_0^- : phi = 1 - s^2
}


def variant_params(variant: str) -> MetricParams:
    sign, eps = _variant(variant)
    return MetricParams(2.0 * sign, 0.0, -3.0 * sign, eps)


def _variant(variant: str):
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ValidationError(f"variant must be one of {sorted(VARIANTS)}") from None


def square_flag_curvature(s, c_sq, epsilon: float, sign: int, mu: float, delta: float):
    """K of F_eps^+- as a function of s = beta/alpha and c^2 (square gauge)."""
    s, c2 = np.asarray(s, dtype=float), np.asarray(c_sq, dtype=float)
    e, d2 = epsilon, delta * delta
    phi = 1.0 + e * s + sign * s * s
    num = (6.0 * mu * (e * e - 4.0 * sign) * (1.0 - sign * s * s) ** 2 * c2
           + (mu * mu + 4.0 * sign * d2) * (sign * e * s**3 + 6.0 * sign * s * s + 3.0 * e * s + 2.0) * phi)
    den = 128.0 / mu**2 * (mu / 4.0 + sign * d2 / mu - sign * c2) ** 3 * phi**4
    return num / den


def t_o_closed(sign: int, mu: float, delta: float) -> float:
    return 2.0 * delta / math.sqrt(mu * mu + 4.0 * sign * delta * delta)


def R_tilde_closed(variant: str, s, tt, mu: float, delta: float):
    """Closed forms of R~ for the three square variants."""
    s, t = np.asarray(s, dtype=float), np.asarray(tt, dtype=float)
    d2 = delta * delta
    if variant == "square-plus":
        xi = d2 / mu + mu / 4.0
        return 4.0 * xi * ((1.0 + s) / (1.0 - t * t)) ** -3
    if variant == "zero-plus":
        return ((1 - t * t) ** 2 * (2 * (mu * mu + 4 * d2) * (1 - 5 * s * s) * t * t + 3 * mu * mu * s**4
                                    + 4 * (mu * mu + 10 * d2) * s * s + mu * mu - 8 * d2)
                / (mu * (1 + s * s) ** 4))
    if variant == "zero-minus":
        return ((1 + t * t) ** 2 * (2 * (4 * d2 - mu * mu) * (1 + 5 * s * s) * t * t + 3 * mu * mu * s**4
                                    - 4 * (mu * mu - 10 * d2) * s * s + mu * mu + 8 * d2)
                / (mu * (1 - s * s) ** 4))
    _variant(variant)


@dataclass(frozen=True)
class ClosedFormExtrema:
    variant: str
    min: float
    max: float
    t_o: float
    t1: float | None


def closed_form_extrema(variant: str, mu: float, delta: float) -> ClosedFormExtrema:
    sign, _ = _variant(variant)
    if not (mu > 0) or not (delta >= 0):
        raise ValidationError("need mu > 0 and delta >= 0")
    d2, m2 = delta * delta, mu * mu
    if variant == "zero-minus" and not mu * mu > 12.0 * delta * delta:
        raise RegularityViolated("F0- is regular only for mu^2 > 12 delta^2")
    t_o = t_o_closed(sign, mu, delta)
    if variant == "square-plus":
        r = math.sqrt(4 * d2 + m2)
        return ClosedFormExtrema(variant, (r - 2 * delta) ** 3 / (mu * r), (r + 2 * delta) ** 3 / (mu * r), t_o, None)
    t1 = math.sqrt(2.0) * delta / math.sqrt(m2 + 6.0 * sign * d2)
    if variant == "zero-plus":
        return ClosedFormExtrema(variant, (m2 - 8 * d2) / mu, (m2 + 4 * d2) ** 4 / (mu * (m2 + 8 * d2) ** 3), t_o, t1)
    return ClosedFormExtrema(variant, mu**5 * (m2 - 16 * d2) / (m2 - 8 * d2) ** 3,
                             (m2 - 4 * d2) ** 4 / (mu * (m2 - 8 * d2) ** 3), t_o, t1)


# domains and extrema

@dataclass(frozen=True, eq=False)
class CurvatureDomain:
    """D = {0 <= t <= delta^2/mu, s^2 <= B(t)} or D~ = {0 <= t <= t_o, |s| <= t}."""

    kind: str  # "D" or "D_tilde"
    model: CurvatureModel
    t_hi: float = field(init=False)

    def __post_init__(self):
        if self.kind not in ("D", "D_tilde"):
            raise ValidationError("kind must be 'D' or 'D_tilde'")
        t_hi = self.model.t_max if self.kind == "D" else self.model.t_o
        if not (t_hi >= 0) or not math.isfinite(t_hi):
            raise EmptyDomain("domain has no admissible points")
        object.__setattr__(self, "t_hi", t_hi)

    @property
    def route(self) -> str:
        return "R" if self.kind == "D" else "R_tilde"

    def s_bound(self, t):
        t = _arr(t)
        return np.sqrt(self.model.B_of_t(t)) if self.kind == "D" else t

    def evaluate(self, s, t, B=None):
        if self.kind == "D":
            return self.model.R(s, t, check=False, B=B)
        return self.model.R_tilde(s, t, check=False)

    def from_unit(self, a, b):
        t = np.asarray(b, dtype=float) * self.t_hi
        return (2.0 * np.asarray(a, dtype=float) - 1.0) * self.s_bound(t), t

    def grid(self, n: int):
        """n x n grid in unit coordinates; returns S, T and B(T) (None on D~)."""
        a = np.linspace(0.0, 1.0, n)
        t = a * self.t_hi
        A, Tg = np.meshgrid(a, t, indexing="xy")
        if self.kind == "D":
            B = np.broadcast_to(self.model.B_of_t(t)[:, None], A.shape)
            return (2.0 * A - 1.0) * np.sqrt(B), Tg, B
        return (2.0 * A - 1.0) * Tg, Tg, None

    def boundary(self):
        """Boundary curves as maps r in [0, 1] -> (s, t)."""
        if self.kind == "D":
            sb0 = float(self.s_bound(0.0))
            return {
                "upper": lambda r: (self.s_bound(r * self.t_hi), r * self.t_hi),
                "lower": lambda r: (-self.s_bound(r * self.t_hi), r * self.t_hi),
                "cap": lambda r: ((2.0 * r - 1.0) * sb0, np.zeros_like(_arr(r))),
            }
        return {
            "upper": lambda r: (r * self.t_hi, r * self.t_hi),
            "lower": lambda r: (-r * self.t_hi, r * self.t_hi),
            "cap": lambda r: ((2.0 * r - 1.0) * self.t_hi, np.full_like(_arr(r), self.t_hi)),
        }

    def corners(self):
        if self.kind == "D":
            sb0 = float(self.s_bound(0.0))
            return [(0.0, self.t_hi), (-sb0, 0.0), (sb0, 0.0)]
        return [(0.0, 0.0), (-self.t_hi, self.t_hi), (self.t_hi, self.t_hi)]


@dataclass(frozen=True)
class Candidate:
    s: float
    t: float
    value: float
    source: str


@dataclass(frozen=True)
class FlagCurvatureReport:
    min: float
    max: float
    argmin: tuple
    argmax: tuple
    method: str
    route: str
    boundary_diagnostics: tuple  # Candidates for critical points found on boundary curves

    def as_dict(self):
        return {
            "min": self.min, "max": self.max,
            "argmin": list(self.argmin), "argmax": list(self.argmax),
            "method": self.method, "route": self.route,
            "boundary_critical_points": [
                {"curve": c.source, "s": c.s, "t": c.t, "value": c.value} for c in self.boundary_diagnostics
            ],
        }


def boundary_critical_points(domain: CurvatureDomain, n_scan: int = 4001):
    """Zeros of the derivative of the evaluator along each boundary curve.

    Derivatives are taken by complex step, so flat critical points (where
    value-based differences drown in roundoff) are still located sharply.
    """
    out = []
    for name, curve in domain.boundary().items():
        def dg(r, curve=curve):
            s, t = curve(np.asarray(r, dtype=float) + 1j * CSTEP)
            return np.imag(domain.evaluate(s, t)) / CSTEP

        r = np.linspace(0.0, 1.0, n_scan)[1:-1]
        der = dg(r)
        roots = [float(x) for x in r[der == 0]]
        for i in np.nonzero(np.sign(der[:-1]) * np.sign(der[1:]) < 0)[0]:
            roots.append(brentq(lambda z: float(dg(z)), r[i], r[i + 1], xtol=1e-16, rtol=1e-15, maxiter=200))
        for rc in sorted(roots):
            s, t = curve(np.float64(rc))
            out.append(Candidate(float(s), float(t), float(domain.evaluate(s, t)), name))
    return out


def _pick(cands, sign):
    # extreme value; ties broken by lexicographic (s, t)
    best = min(cands, key=lambda c: (sign * c.value, c.s, c.t))
    return best


def extrema(domain: CurvatureDomain, grid: int = 801, n_starts: int = 5) -> FlagCurvatureReport:
    """Grid scan, simplex refinement and boundary critical points, merged."""
    if domain.t_hi == 0.0:
        v = float(domain.evaluate(0.0, 0.0))
        return FlagCurvatureReport(v, v, (0.0, 0.0), (0.0, 0.0), "Point", domain.route, ())
    a = np.linspace(0.0, 1.0, grid)
    A, Bg = np.meshgrid(a, a, indexing="xy")
    S, T, Bv = domain.grid(grid)
    vals = domain.evaluate(S, T, Bv)
    if not np.all(np.isfinite(vals)):
        raise EmptyDomain("evaluator is not finite on the domain grid")
    cands = []
    flat = vals.ravel()
    for sign in (1.0, -1.0):
        order = np.argsort(sign * flat, kind="stable")[:n_starts]
        for idx in order:
            cands.append(Candidate(float(S.ravel()[idx]), float(T.ravel()[idx]), float(flat[idx]), "grid"))

            def obj(z, sign=sign):
                s, t = domain.from_unit(np.clip(z[0], 0, 1), np.clip(z[1], 0, 1))
                return sign * float(domain.evaluate(s, t))

            z0 = np.array([A.ravel()[idx], Bg.ravel()[idx]])
            res = minimize(obj, z0, method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
            s, t = domain.from_unit(np.clip(res.x[0], 0, 1), np.clip(res.x[1], 0, 1))
            cands.append(Candidate(float(s), float(t), float(domain.evaluate(s, t)), "simplex"))
    crit = boundary_critical_points(domain)
    cands.extend(crit)
    for s, t in domain.corners():
        cands.append(Candidate(float(s), float(t), float(domain.evaluate(s, t)), "corner"))
    lo, hi = _pick(cands, 1.0), _pick(cands, -1.0)
    return FlagCurvatureReport(lo.value, hi.value, (lo.s, lo.t), (hi.s, hi.t), "Grid+Refine",
                               domain.route, tuple(crit))
