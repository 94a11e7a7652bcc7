"""The profile function phi(s) of F = alpha*phi(beta/alpha).

phi solves

    {1 + (k1+k3) s^2 + k2 s^4} phi'' = (k1 + k2 s^2) (phi - s phi'),  phi(0) = 1,

with phi'(0) = epsilon free.  The two square families (k1, k2, k3) = (+-2, 0, -+3)
have the closed form phi = 1 + epsilon*s +- s^2.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import (
    DenominatorVanishes,
    NonConvergence,
    NotRegularAtZero,
    RandersType,
    ValidationError,
)

# largest |s| probed for a zero of phi when the algebraic range is unbounded
S_PROBE_CAP = 20
EDGE_MARGIN = 1e-7


@dataclass(frozen=True)
class MetricParams:
    k1: float
    k2: float
    k3: float
    epsilon: float = 0.0

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "epsilon"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if math.isclose(self.k2, self.k1 * self.k3, rel_tol=1e-12, abs_tol=1e-15):
            raise RandersType(
                f"k2 == k1*k3 ({self.k2} vs {self.k1 * self.k3}) is of Randers type"
            )

    @property
    def square_sign(self) -> int | None:
        """+1 for the F+ family (2, 0, -3), -1 for F- (-2, 0, 3), otherwise None."""
        if self.k2 == 0.0:
            if self.k1 == 2.0 and self.k3 == -3.0:
                return 1
            if self.k1 == -2.0 and self.k3 == 3.0:
                return -1
        return None

    def denominator(self, B):
        """1 + (k1+k3) B + k2 B^2, with B standing for s^2 or b^2."""
        return 1.0 + (self.k1 + self.k3) * B + self.k2 * B * B

    def with_epsilon(self, epsilon: float) -> "MetricParams":
        return MetricParams(self.k1, self.k2, self.k3, epsilon)


def _positive_linear_root(a: float, b: float) -> list[float]:
    """[-b/a] when a B + b has a finite positive root, else []."""
    if a == 0.0:
        return []
    r = -b / a
    return [r] if math.isfinite(r) and r > 0 else []


def check_denominator(params: MetricParams, B_max: float) -> None:
    """Raise DenominatorVanishes unless 1+(k1+k3)B+k2B^2 > 0 on [0, B_max]."""
    roots = denominator_roots(params)
    if any(r <= B_max for r in roots) or params.denominator(B_max) <= 0:
        raise DenominatorVanishes(
            f"1+(k1+k3)B+k2B^2 vanishes on [0, {B_max}] for {params}"
        )


def phi_minus_s_dphi_closed(params: MetricParams, s):
    """phi - s phi' from the exponential-integral identity (independent of any solver)."""
    k1, k2 = params.k1, params.k2
    roots = denominator_roots(params)
    r = roots[0] if roots else None

    def one(si):
        top = si * si
        if r is None or top < 0.5 * r:
            I, _ = quad(lambda th: (k1 + k2 * th) / params.denominator(th),
                        0.0, top, epsabs=0.0, epsrel=1e-11, limit=500)
        else:
            # theta = r (1 - e^-x) keeps the integrand bounded near the pole at r
            # f(th) = (r - th) m(th) with m linear
            b = params.k1 + params.k3

            def g(x):
                th = r * (1.0 - math.exp(-x))
                return -(k1 + k2 * th) / (k2 * th + k2 * r + b)
            I, _ = quad(g, 0.0, -math.log1p(-top / r), epsabs=0.0, epsrel=1e-11, limit=500)
        return math.exp(-0.5 * I)
    return np.vectorize(one, otypes=[float])(np.asarray(s, dtype=float))


@dataclass(frozen=True, eq=False)
class PhiSolution:
    params: MetricParams
    s_max: float
    kind: str  # "square+", "square-" or "numeric"
    _interp: object = field(default=None, repr=False)

    def derivs(self, s):
        """Return (phi, phi', phi'') at s (scalar or array).

        Complex s with a tiny imaginary part is accepted for complex-step
        differentiation; the result is exact to first order in Im s.
        """
        s = np.asarray(s)
        if self.kind == "numeric":
            if np.iscomplexobj(s):
                a, b = s.real, s.imag
                d = [self._interp(a, nu) for nu in range(4)]
                return d[0] + 1j * b * d[1], d[1] + 1j * b * d[2], d[2] + 1j * b * d[3]
            s = s.astype(float)
            return self._interp(s), self._interp(s, 1), self._interp(s, 2)
        if not np.iscomplexobj(s):
            s = s.astype(float)
        sg = 1.0 if self.kind == "square+" else -1.0
        eps = self.params.epsilon
        return 1.0 + eps * s + sg * s * s, eps + 2.0 * sg * s, np.full_like(s, 2.0 * sg)

    def __call__(self, s):
        return self.derivs(s)[0]

    def residual(self, s):
        p = self.params
        f, df, ddf = self.derivs(s)
        s = np.asarray(s, dtype=float)
        return p.denominator(s * s) * ddf - (p.k1 + p.k2 * s * s) * (f - s * df)


def _phi_rhs(params):
    def rhs(s, z):
        f, df = z
        return [df, (params.k1 + params.k2 * s * s) * (f - s * df) / params.denominator(s * s)]
    return rhs


TAYLOR_ORDER = 40
MAX_TAYLOR_STEP = 0.1


def _shifted(coeffs, c):
    """Coefficients in x of the polynomial sum coeffs[j] s^j evaluated at s = c + x."""
    return P.Polynomial(coeffs)(P.Polynomial([c, 1.0])).coef


def _taylor_segment(params: MetricParams, c: float, h: float, f0: float, df0: float, order: int):
    """Scaled Taylor coefficients b_n = a_n h^n of phi about s = c.

    Uses the ODE in the form f1(s) phi'' + g(s) s phi' - g(s) phi = 0 with
    g = k1 + k2 s^2, rewritten in xi = (s - c)/h.
    """
    k1, k2, k3 = params.k1, params.k2, params.k3
    pw = h ** np.arange(5)
    p = _shifted([1.0, 0.0, k1 + k3, 0.0, k2], c)
    p = p * pw[: len(p)]
    q = _shifted([0.0, k1, 0.0, k2], c)
    q = h * q * pw[: len(q)]
    g = _shifted([k1, 0.0, k2], c)
    g = h * h * g * pw[: len(g)]
    b = np.zeros(order + 1)
    b[0], b[1] = f0, h * df0
    for n in range(order - 1):
        acc = 0.0
        for j in range(1, len(p)):
            m = n - j + 2
            if m >= 2:
                acc += p[j] * m * (m - 1) * b[m]
        for j in range(len(q)):
            m = n - j + 1
            if m >= 1:
                acc += q[j] * m * b[m]
        for j in range(len(g)):
            m = n - j
            if m >= 0:
                acc -= g[j] * b[m]
        b[n + 2] = -acc / (p[0] * (n + 2) * (n + 1))
    return b


class TaylorTable:
    """Piecewise scaled Taylor polynomials of phi on [-s_max, s_max]."""

    def __init__(self, hi, centers, steps, coeffs):
        self.hi = np.asarray(hi)
        self.centers = np.asarray(centers)
        self.steps = np.asarray(steps)
        self.coeffs = np.asarray(coeffs)
        n = np.arange(self.coeffs.shape[1])
        self._tables = (
            self.coeffs,
            self.coeffs[:, 1:] * n[1:],
            self.coeffs[:, 2:] * (n[2:] * (n[2:] - 1)),
            self.coeffs[:, 3:] * (n[3:] * (n[3:] - 1) * (n[3:] - 2)),
        )

    def __call__(self, s, nu=0):
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self.hi, s, side="left"), 0, len(self.hi) - 1)
        h = self.steps[idx]
        xi = (s - self.centers[idx]) / h
        table = self._tables[nu]
        out = np.zeros_like(xi)
        for j in range(table.shape[1] - 1, -1, -1):
            out = out * xi + table[idx, j]
        return out / h**nu


def theta_roots(params: MetricParams) -> list[complex]:
    """Roots in theta of 1 + (k1+k3) theta + k2 theta^2, stable for tiny k2."""
    a, b = params.k2, params.k1 + params.k3
    if a == 0.0:
        return [complex(-1.0 / b)] if b != 0.0 else []
    disc = cmath.sqrt(b * b - 4.0 * a)
    q = -0.5 * (b + disc if b >= 0 else b - disc)
    # q / a may overflow when k2 is negligible; such a root is simply far away
    far = complex(q / a) if abs(q) < 1e300 * abs(a) else complex(math.inf)
    return [far, 1.0 / q]


def denominator_roots(params: MetricParams) -> list[float]:
    """Sorted positive real roots in theta of the denominator polynomial."""
    return sorted(z.real for z in theta_roots(params)
                  if math.isfinite(z.real) and abs(z.imag) <= 1e-12 * max(1.0, abs(z)) and z.real > 0)


def _root_distance(params: MetricParams, c: float) -> float:
    out = math.inf
    for th in theta_roots(params):
        if cmath.isinf(th):
            continue
        r = cmath.sqrt(th)
        out = min(out, abs(r - c), abs(-r - c))
    return out


def _march(params: MetricParams, s_max: float, direction: float):
    segs = []
    c, f0, df0 = 0.0, 1.0, params.epsilon
    while direction * c < s_max:
        h = min(MAX_TAYLOR_STEP, 0.3 * _root_distance(params, c), s_max - direction * c)
        b = _taylor_segment(params, c, direction * h, f0, df0, TAYLOR_ORDER)
        n = np.arange(len(b))
        f0 = float(np.sum(b))
        df0 = float(np.sum(b[1:] * n[1:])) / (direction * h)
        end = c + direction * h
        segs.append((max(c, end), c, direction * h, b))
        c = end
    return segs


def solve_phi(params: MetricParams, s_max: float, tol: float = 1e-9) -> PhiSolution:
    """Solve for phi on [-s_max, s_max] and validate the result."""
    if not (s_max > 0) or not math.isfinite(s_max):
        raise ValidationError("s_max must be positive and finite")
    if not (tol > 0):
        raise ValidationError("tol must be positive")
    check_denominator(params, s_max * s_max)

    sign = params.square_sign
    if sign is not None:
        return PhiSolution(params, s_max, "square+" if sign > 0 else "square-")

    segs = _march(params, s_max, -1.0)[::-1] + _march(params, s_max, 1.0)
    hi, centers, steps, coeffs = zip(*segs)
    sol = PhiSolution(params, s_max, "numeric", TaylorTable(hi, centers, steps, coeffs))
    _validate(sol, tol)
    return sol


def _validate(sol: PhiSolution, tol: float) -> None:
    s = np.linspace(-sol.s_max, sol.s_max, 1000)
    # scaled by the size of the balanced terms: near a pole of phi'' both grow
    # without bound and f1 itself carries cancellation error
    p = sol.params
    f, df, ddf = sol.derivs(s)
    scale = np.maximum(1.0, np.maximum(np.abs(p.denominator(s * s) * ddf),
                                       np.abs((p.k1 + p.k2 * s * s) * (f - s * df))))
    res = np.max(np.abs(sol.residual(s)) / scale)
    if not res < tol:
        raise NonConvergence(f"phi ODE residual {res:.3e} exceeds tol {tol:.1e}")
    f, df, _ = sol.derivs(s)
    pm = f - s * df
    # only a clearly negative value counts: the true value may sit below roundoff
    if np.any(pm <= -1e-12 * (np.abs(f) + np.abs(s * df))):
        raise NonConvergence("phi - s phi' lost positivity")
    probe = np.linspace(-sol.s_max, sol.s_max, 41)
    fp, dfp, _ = sol.derivs(probe)
    closed = phi_minus_s_dphi_closed(sol.params, probe)
    # phi - s phi' can be far below the size of its two terms; allow for that cancellation
    gap = np.abs((fp - probe * dfp) - closed)
    allowed = 1e-8 * closed + 1e-13 * (np.abs(fp) + np.abs(probe * dfp))
    if not np.all(gap <= allowed):
        worst = float(np.max(gap / allowed))
        raise NonConvergence(f"phi - s phi' disagrees with the integral identity ({worst:.2e} x allowance)")


def taylor_phi(params: MetricParams) -> tuple[float, float, float, float, float]:
    """Coefficients of phi through s^4: (1, eps, k1/2, 0, k2/12 - k1^2/8 - k1 k3/12)."""
    k1, k2, k3 = params.k1, params.k2, params.k3
    return (1.0, params.epsilon, 0.5 * k1, 0.0, k2 / 12.0 - k1 * k1 / 8.0 - k1 * k3 / 12.0)


def _algebraic_member(params: MetricParams, B: float) -> bool:
    k1, k2, k3 = params.k1, params.k2, params.k3
    S = (1.0 + k1 * B > 0) and (params.denominator(B) > 0)
    if k2 <= 0:
        return S
    T = (
        (k1 + k3 >= 0)
        or (k1 + k3 + 2 * k2 * B <= 0 and params.denominator(B) > 0)
        or (k1 + k3 + 2 * k2 * B > 0 and 4 * k2 - (k1 + k3) ** 2 > 0)
    )
    return S and T


def algebraic_range(params: MetricParams) -> float:
    """Supremum of b^2 allowed by the polynomial conditions alone (may be inf).

    Membership can only change at a positive root of 1 + k1 B, of the
    denominator polynomial, or of k1 + k3 + 2 k2 B, so each piece between
    consecutive breakpoints is tested once.
    """
    k1, k2, k3 = params.k1, params.k2, params.k3
    br = set(_positive_linear_root(k1, 1.0))
    br |= set(denominator_roots(params))
    br |= set(_positive_linear_root(2 * k2, k1 + k3))
    br = sorted(br)
    edges = [0.0] + br
    for i, lo in enumerate(edges):
        if i > 0 and not _algebraic_member(params, lo):
            return lo
        hi = edges[i + 1] if i + 1 < len(edges) else (lo + 1.0) * 2.0
        if not _algebraic_member(params, 0.5 * (lo + hi)):
            if i == 0:
                raise NotRegularAtZero(f"{params} is not regular for small b^2")
            return lo
    return math.inf


def first_zero_of_phi(params: MetricParams, s_limit: float) -> float:
    """Smallest |s| <= s_limit with phi(s) = 0, or inf."""
    sol = solve_phi(params, s_limit, tol=1e-8)
    s = np.linspace(0.0, s_limit, 4001)
    best = math.inf
    for sg in (1.0, -1.0):
        vals = sol(sg * s)
        bad = np.nonzero(vals <= 0)[0]
        if len(bad):
            j = bad[0]
            z = brentq(lambda t: float(sol(sg * t)), s[j - 1], s[j], xtol=1e-14)
            best = min(best, z)
    return best


def regularity_range(params: MetricParams) -> float:
    """Supremum of b^2 on which F = alpha phi(beta/alpha) is regular."""
    sup = algebraic_range(params)
    # phi'' blows up at a finite edge, so stay a hair inside it; far edges are probed only to the cap
    s_limit = min(math.sqrt(sup) * (1.0 - EDGE_MARGIN), S_PROBE_CAP)
    z = first_zero_of_phi(params, s_limit)
    if z >= s_limit * (1.0 - 1e-12):
        # a zero of phi at the algebraic edge does not shrink the range
        return sup
    return min(sup, z * z)


def b_hat(phi: PhiSolution) -> float:
    """Threshold norm of beta beyond which F fails to be regular."""
    return math.sqrt(regularity_range(phi.params))


def regular_at(phi, dphi, ddphi, b: float, n_s: int = 4001) -> bool:
    """The three positivity conditions for |s| <= b, checked on a grid."""
    s = np.linspace(-b, b, n_s)
    f, df, ddf = phi(s), dphi(s), ddphi(s)
    pm = f - s * df
    return bool(np.all(f > 0) and np.all(pm > 0) and np.all(pm + (b * b - s * s) * ddf > 0))


def b_hat_direct(phi, dphi, ddphi, b_cap: float = 10.0, step: float = 1e-2) -> float:
    """b-hat for an arbitrary profile (Randers included) straight from the positivity conditions."""
    if not regular_at(phi, dphi, ddphi, 1e-9):
        raise NotRegularAtZero("profile not regular near b = 0")
    lo = 0.0
    b = step
    while b <= b_cap:
        if not regular_at(phi, dphi, ddphi, b):
            hi = b
            while hi - lo > 1e-12:
                mid = 0.5 * (lo + hi)
                if regular_at(phi, dphi, ddphi, mid):
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        lo = b
        b += step
    return math.inf
