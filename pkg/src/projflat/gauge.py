"""Deformation gauges (u, v, w) of b^2 and the map (alpha, beta) -> (h, rho).

A gauge is any solution of

    u' = (v - k1 u) / f
    v' = (u (k2 u - k3 v - 2 k1 v) + 2 v^2) / (u f)
    w' = w (3 v - k3 u - 2 k1 u) / (2 u f),      f = 1 + (k1+k3) t + k2 t^2,

and turns F's data into h^2 = u alpha^2 + v beta^2, rho = w beta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp

from ._interp import complex_step_dt, hermite5
from .errors import (
    NonConvergence,
    NonPositiveResult,
    OutOfRegularRange,
    SolutionLeavesAdmissibleRegion,
    TargetOutOfRange,
    ValidationError,
)
from .phi import MetricParams, check_denominator, regularity_range

SQUARE_PARAMS = {1: (2.0, 0.0, -3.0), -1: (-2.0, 0.0, 3.0)}
SQUARE_RANGE = {1: 1.0, -1: 0.5}
BLOW_UP = 1e10


def gauge_rhs(params: MetricParams, t, u, v, w):
    k1, k2, k3 = params.k1, params.k2, params.k3
    f = params.denominator(t)
    du = (v - k1 * u) / f
    dv = (u * (k2 * u - k3 * v - 2 * k1 * v) + 2 * v * v) / (u * f)
    dw = w * (3 * v - k3 * u - 2 * k1 * u) / (2 * u * f)
    return du, dv, dw


@dataclass(frozen=True, eq=False)
class UvwGauge:
    params: MetricParams
    kind: str  # "canonical", "square" or "ivp"
    t_max: float
    sign: int | None = None
    initial: tuple | None = None
    _interp: object = field(default=None, repr=False)

    def __call__(self, B):
        """(u, v, w) at B = b^2 (scalar or array; complex B for complex-step use)."""
        B = np.asarray(B)
        cplx = np.iscomplexobj(B)
        if not cplx:
            B = B.astype(float)
        if self.kind == "square":
            one = 1.0 - self.sign * B
            return one * one, np.zeros_like(B), np.sqrt(one)
        if cplx and self.kind == "ivp":
            a, b = B.real, B.imag
            vals, ders = self(a), self.derivatives(a)
            return tuple(x + 1j * b * dx for x, dx in zip(vals, ders))
        if self.kind == "canonical":
            if cplx:
                sigma = self._interp(B.real) + 1j * B.imag * self._interp(B.real, 1)
            else:
                sigma = self._interp(B)
            p = self.params
            u = np.exp(2.0 * sigma)
            return u, (p.k1 + p.k3 + p.k2 * B) * u, np.sqrt(p.denominator(B)) * np.exp(sigma)
        if self.t_max == 0.0:
            u0, v0, w0 = self.initial
            return np.full_like(B, u0), np.full_like(B, v0), np.full_like(B, w0)
        y = self._interp(B)
        return y[..., 0], y[..., 1], y[..., 2]

    def derivatives(self, B):
        """(u', v', w') from the gauge's own representation."""
        B = np.asarray(B, dtype=float)
        if self.kind == "square":
            one = 1.0 - self.sign * B
            return -2.0 * self.sign * one, np.zeros_like(B), -0.5 * self.sign / np.sqrt(one)
        if self.kind == "canonical":
            p = self.params
            sigma, dsigma = self._interp(B), self._interp(B, 1)
            u = np.exp(2.0 * sigma)
            du = 2.0 * dsigma * u
            dv = p.k2 * u + (p.k1 + p.k3 + p.k2 * B) * du
            f = p.denominator(B)
            df = p.k1 + p.k3 + 2.0 * p.k2 * B
            dw = np.exp(sigma) * (0.5 * df / np.sqrt(f) + np.sqrt(f) * dsigma)
            return du, dv, dw
        if self.t_max == 0.0:
            return (np.zeros_like(B),) * 3
        y = self._interp(B, 1)
        return y[..., 0], y[..., 1], y[..., 2]

    def residuals(self, B):
        """Max-abs residual of the three gauge ODEs at each B."""
        u, v, w = self(B)
        du, dv, dw = self.derivatives(B)
        ru, rv, rw = gauge_rhs(self.params, np.asarray(B, dtype=float), u, v, w)
        return np.maximum.reduce([np.abs(du - ru), np.abs(dv - rv), np.abs(dw - rw)])

    def norm_relation(self, B):
        """||rho||_h^2 as a function of b^2: w^2 B / (u + v B)."""
        B = np.asarray(B, dtype=float)
        u, v, w = self(B)
        return w * w * B / (u + v * B)

    def closed_inverse(self, target):
        """Closed-form inverse of the norm relation, or None when there is none."""
        target = np.asarray(target)
        if not np.iscomplexobj(target):
            target = target.astype(float)
        if self.kind == "canonical":
            return target
        if self.kind == "square":
            return target / (1.0 + self.sign * target)
        return None

    @property
    def regular_sup(self) -> float:
        return SQUARE_RANGE[self.sign] if self.kind == "square" else self.t_max


def _sigma_prime(params: MetricParams, B):
    return 0.5 * (params.k2 * B + params.k3) / params.denominator(B)


def _sigma_second(params: MetricParams, B):
    f = params.denominator(B)
    df = params.k1 + params.k3 + 2.0 * params.k2 * B
    return 0.5 * (params.k2 * f - (params.k2 * B + params.k3) * df) / (f * f)


def default_t_max(params: MetricParams, cap: float = 10.0) -> float:
    return min(0.999 * regularity_range(params), cap)


def canonical_gauge(params: MetricParams, t_max: float | None = None) -> UvwGauge:
    """u = e^{2 sigma}, v = (k1+k3+k2 B) u, w = sqrt(f(B)) e^sigma; norm relation is the identity."""
    if t_max is None:
        t_max = default_t_max(params)
    if not (t_max >= 0) or not math.isfinite(t_max):
        raise ValidationError("t_max must be finite and >= 0")
    check_denominator(params, t_max)
    n = max(64, int(math.ceil(t_max / 2e-3)))
    nodes = np.linspace(0.0, max(t_max, 1e-12), n + 1)
    pieces = [
        quad(lambda th: _sigma_prime(params, th), a, b, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
        for a, b in zip(nodes[:-1], nodes[1:])
    ]
    sigma = np.concatenate([[0.0], np.cumsum(pieces)])
    interp = hermite5(nodes, sigma, _sigma_prime(params, nodes), _sigma_second(params, nodes))
    return UvwGauge(params, "canonical", float(t_max), _interp=interp)


def square_gauge(sign: int, t_max: float | None = None, epsilon: float = 0.0) -> UvwGauge:
    """u = (1 -+ B)^2, v = 0, w = sqrt(1 -+ B) for the F+ (sign=+1) / F- (sign=-1) families."""
    if sign not in (1, -1):
        raise ValidationError("sign must be +1 or -1")
    sup = SQUARE_RANGE[sign]
    if t_max is None:
        t_max = sup * (1.0 - 1e-12)
    if not (0 <= t_max < sup):
        raise OutOfRegularRange(f"square gauge {'+' if sign > 0 else '-'} needs t_max < {sup}")
    params = MetricParams(*SQUARE_PARAMS[sign], epsilon)
    return UvwGauge(params, "square", float(t_max), sign=sign)


def solve_gauge_ivp(
    params: MetricParams, u0: float, v0: float, w0: float, t_max: float, tol: float = 1e-9
) -> UvwGauge:
    """Integrate the gauge ODEs from (u0, v0, w0) at t = 0."""
    if not (u0 > 0) or w0 == 0:
        raise ValidationError("need u0 > 0 and w0 != 0")
    if not (tol > 0):
        raise ValidationError("tol must be positive")
    if not (t_max >= 0) or not math.isfinite(t_max):
        raise ValidationError("t_max must be finite and >= 0")
    if t_max == 0.0:
        return UvwGauge(params, "ivp", 0.0, initial=(u0, v0, w0))
    check_denominator(params, t_max)

    def rhs(t, y):
        return np.array(gauge_rhs(params, t, y[0], y[1], y[2]))

    def leave_u(t, y):
        return y[0]

    def leave_w(t, y):
        return y[2]

    def blow_up(t, y):
        # the v equation is of Riccati type and can diverge in finite t
        return BLOW_UP - abs(y[1]) / (1.0 + abs(y[0]))

    leave_u.terminal = leave_w.terminal = blow_up.terminal = True
    n = max(16, int(math.ceil(t_max / 1e-3)))
    nodes = np.linspace(0.0, t_max, n + 1)
    sol = solve_ivp(
        rhs, (0.0, t_max), [u0, v0, w0], method="DOP853", t_eval=nodes,
        rtol=1e-13, atol=1e-15, events=(leave_u, leave_w, blow_up),
    )
    if sol.status == 1:
        raise SolutionLeavesAdmissibleRegion(f"u or w reached zero, or v diverged, at t = {sol.t[-1]:.6g}")
    if sol.status != 0:
        raise NonConvergence(f"gauge integration failed: {sol.message}")
    Y = sol.y.T
    dY = np.array([rhs(t, y) for t, y in zip(sol.t, Y)])
    ddY = np.array([complex_step_dt(rhs, t, y) for t, y in zip(sol.t, Y)])
    g = UvwGauge(params, "ivp", float(t_max), initial=(u0, v0, w0),
                 _interp=hermite5(sol.t, Y, dY, ddY))
    probe = np.linspace(0.0, t_max, 1000)
    # relative to the size of the derivatives, which grow without bound near a blow-up
    scale = np.maximum(1.0, np.max(np.abs(np.array(gauge_rhs(params, probe, *g(probe)))), axis=0))
    worst = float(np.max(g.residuals(probe) / scale))
    if not worst < tol:
        raise NonConvergence(f"gauge ODE residual {worst:.3e} exceeds tol {tol:.1e}")
    return g


def transform(alpha_sq, beta, B, gauge: UvwGauge):
    """(alpha^2, beta) -> (h^2, rho)."""
    if np.any(np.asarray(alpha_sq) <= 0):
        raise ValidationError("alpha_sq must be positive")
    _check_B(B, gauge)
    u, v, w = gauge(B)
    h_sq = u * alpha_sq + v * beta * beta
    if np.any(h_sq <= 0):
        raise NonPositiveResult("h^2 <= 0")
    return h_sq, w * beta


def inverse_transform(h_sq, rho, B, gauge: UvwGauge):
    """(h^2, rho) -> (alpha^2, beta)."""
    _check_B(B, gauge)
    u, v, w = gauge(B)
    alpha_sq = (h_sq - v / (w * w) * rho * rho) / u
    if np.any(alpha_sq <= 0):
        raise NonPositiveResult("alpha^2 <= 0")
    return alpha_sq, rho / w


def _check_B(B, gauge):
    B = np.asarray(B)
    if np.any(B < 0) or np.any(B > gauge.t_max):
        raise OutOfRegularRange(f"B outside gauge range [0, {gauge.t_max}]")


def invert_norm_relation(target, gauge: UvwGauge, xtol: float = 1e-15):
    """Solve w^2(B) B / (u(B) + v(B) B) = target for B by bisection (vectorised)."""
    target = np.asarray(target, dtype=float)
    top = float(gauge.norm_relation(gauge.t_max))
    if np.any(target < 0) or (gauge.t_max > 0 and np.any(target >= top)):
        raise TargetOutOfRange(f"target must lie in [0, {top})")
    lo = np.zeros_like(target)
    hi = np.full_like(target, gauge.t_max)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = gauge.norm_relation(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= xtol * np.maximum(1.0, hi)):
            break
    B = 0.5 * (lo + hi)
    return np.where(target == 0, 0.0, B)


def solve_B(target, gauge: UvwGauge):
    """B for a norm-relation target, via the closed inverse when the gauge has one."""
    target = np.asarray(target)
    if np.iscomplexobj(target) and gauge.kind == "ivp":
        # first-order lift: dB/dtarget = u f / w^2
        B = invert_norm_relation(target.real, gauge)
        u, _, w = gauge(B)
        return B + 1j * target.imag * u * gauge.params.denominator(B) / (w * w)
    B = gauge.closed_inverse(target)
    if B is None:
        return invert_norm_relation(target, gauge)
    return B
