"""Constant-curvature sphere in a gnomonic chart, its conformal field c and
the (alpha, beta) data reconstructed from it.

The sphere of curvature mu is {X in R^{n+1} : |X|^2 = 1/mu}. A chart is fixed by
an orthonormal frame O whose first column points at the chart centre, and
    X = O (1/sqrt(mu), x) / sqrt(1 + mu |x|^2).
In every chart c is the restriction of a linear functional, c = <a, X>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import root

from .errors import DegenerateField, OutOfRegularRange, ValidationError
from .gauge import UvwGauge, canonical_gauge, solve_B, square_gauge
from .phi import MetricParams, PhiSolution, regularity_range, solve_phi


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def householder_to(target):
    """Orthogonal symmetric O with O e0 = target (target a unit vector)."""
    target = np.asarray(target, dtype=float)
    e0 = np.zeros_like(target)
    e0[0] = 1.0
    v = e0 - target
    nv = np.linalg.norm(v)
    if nv < 1e-15:
        return np.eye(len(target))
    v /= nv
    return np.eye(len(target)) - 2.0 * np.outer(v, v)


@dataclass(frozen=True, eq=False)
class SphereData:
    """Navigation data (mu, k, xi) in one chart.

    frame maps chart-ambient coordinates to global ambient coordinates.
    """

    mu: float
    k: float
    xi: tuple
    frame: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.mu > 0) or not math.isfinite(self.mu):
            raise ValidationError("mu must be positive and finite")
        xi = tuple(float(v) for v in np.ravel(self.xi))
        if len(xi) < 2:
            raise ValidationError("dimension must be at least 2")
        if not all(map(math.isfinite, xi + (self.k,))):
            raise ValidationError("k and xi must be finite")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "k", float(self.k))

    @classmethod
    def from_delta(cls, mu: float, delta: float, n: int = 2, direction=None):
        """Data whose poles sit along `direction` (default: the chart centre)."""
        if delta < 0:
            raise ValidationError("delta must be >= 0")
        if direction is None:
            return cls(mu, 2.0 * delta / math.sqrt(mu), (0.0,) * n)
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        # c = <a, X> has delta = |a|
        a = delta * d
        return cls(mu, -2.0 * a[0] / math.sqrt(mu), tuple(2.0 * a[1:] / mu))

    @property
    def n(self) -> int:
        return len(self.xi)

    @property
    def xi_vec(self) -> np.ndarray:
        return np.array(self.xi)

    # metric h
    def q(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 + self.mu * _dot(x, x)

    def h_sq(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        q = self.q(x)
        return (q * _dot(y, y) - self.mu * _dot(x, y) ** 2) / (q * q)

    def h_eval(self, x, y):
        return np.sqrt(self.h_sq(x, y))

    def h_matrix(self, x):
        x = np.asarray(x, dtype=float)
        q = self.q(x)
        eye = np.eye(self.n)
        return (q[..., None, None] * eye - self.mu * x[..., :, None] * x[..., None, :]) / (q * q)[..., None, None]

    def h_inverse(self, x):
        x = np.asarray(x, dtype=float)
        q = self.q(x)
        eye = np.eye(self.n)
        return q[..., None, None] * (eye + self.mu * x[..., :, None] * x[..., None, :])

    # conformal field c
    def c(self, x):
        x = np.asarray(x, dtype=float)
        return (-self.k + self.mu * _dot(self.xi_vec, x)) / (2.0 * np.sqrt(self.q(x)))

    def grad_c(self, x):
        x = np.asarray(x, dtype=float)
        q = self.q(x)
        num = -self.k + self.mu * _dot(self.xi_vec, x)
        return (self.mu * self.xi_vec / (2.0 * np.sqrt(q))[..., None]
                - (num * self.mu / (2.0 * q ** 1.5))[..., None] * x)

    def c0(self, x, y):
        return _dot(self.grad_c(x), np.asarray(y, dtype=float))

    def grad_c_norm_sq(self, x):
        g = self.grad_c(x)
        return np.einsum("...i,...ij,...j->...", g, self.h_inverse(x), g)

    def delta_at(self, x):
        """sqrt(|grad c|_h^2 + mu c^2) at x; constant on the sphere."""
        return np.sqrt(self.grad_c_norm_sq(x) + self.mu * self.c(x) ** 2)

    def delta(self) -> float:
        return float(self.delta_at(np.zeros(self.n)))

    # ambient picture
    @property
    def frame_matrix(self) -> np.ndarray:
        return np.eye(self.n + 1) if self.frame is None else self.frame

    def functional(self) -> np.ndarray:
        """Global-ambient vector a with c = <a, X>."""
        a_loc = np.concatenate([[-self.k * math.sqrt(self.mu) / 2.0], self.mu * self.xi_vec / 2.0])
        return self.frame_matrix @ a_loc

    def to_ambient(self, x, y=None):
        """Global-ambient point (and velocity when y is given)."""
        x = np.asarray(x, dtype=float)
        q = self.q(x)
        sq = np.sqrt(q)[..., None]
        head = np.full(x.shape[:-1] + (1,), 1.0 / math.sqrt(self.mu))
        Xl = np.concatenate([head, x], axis=-1) / sq
        X = Xl @ self.frame_matrix.T
        if y is None:
            return X
        y = np.asarray(y, dtype=float)
        xy = _dot(x, y)[..., None]
        Vl = (np.concatenate([np.zeros_like(head), y], axis=-1) / sq
              - Xl * self.mu * xy / q[..., None])
        return X, Vl @ self.frame_matrix.T

    def from_ambient(self, X, V=None):
        """Chart coordinates of a global-ambient point (and velocity)."""
        Xl = np.asarray(X, dtype=float) @ self.frame_matrix
        x0 = Xl[..., :1]
        if np.any(x0 <= 0):
            raise ValidationError("point is not in this chart's hemisphere")
        sm = math.sqrt(self.mu)
        x = Xl[..., 1:] / (sm * x0)
        if V is None:
            return x
        Vl = np.asarray(V, dtype=float) @ self.frame_matrix
        y = (Vl[..., 1:] * x0 - Xl[..., 1:] * Vl[..., :1]) / (sm * x0 * x0)
        return x, y

    def recentered(self, X) -> "SphereData":
        """Same field in the chart centred at the global-ambient point X."""
        X = np.asarray(X, dtype=float)
        O = householder_to(X / np.linalg.norm(X))
        a_loc = O.T @ self.functional()
        sm = math.sqrt(self.mu)
        return SphereData(self.mu, -2.0 * a_loc[0] / sm, tuple(2.0 * a_loc[1:] / self.mu), frame=O)


@dataclass(frozen=True)
class Pole:
    ambient: np.ndarray
    chart: np.ndarray | None  # None when the pole is off this chart (at infinity or antipodal)
    c: float


def find_c_poles(data: SphereData, tol: float = 1e-13) -> tuple[Pole, Pole]:
    """The two zeros of grad c, by root-finding in a chart that contains one of them."""
    delta = data.delta()
    if delta < 1e-14:
        raise DegenerateField("c is constant (delta = 0)")
    work = data
    sol = root(data.grad_c, np.zeros(data.n), method="hybr", tol=tol)
    if not sol.success or data.mu * float(np.dot(sol.x, sol.x)) > 1e8:
        # no pole near this chart: move to a chart centred on the steepest direction of c
        a = data.functional()
        guess = a.copy()
        guess[0] = 0.0 if np.linalg.norm(a[1:]) > 0 else guess[0]
        work = data.recentered(guess / np.linalg.norm(guess))
        sol = root(work.grad_c, np.zeros(data.n), method="hybr", tol=tol)
        if not sol.success:
            from .errors import NonConvergence
            raise NonConvergence(f"pole search failed: {sol.message}")
    P = work.to_ambient(sol.x)
    Q = -P
    out = []
    for X in (P, Q):
        cval = float(np.dot(data.functional(), X))
        Xl = X @ data.frame_matrix
        chart = data.from_ambient(X) if Xl[0] > 1e-8 else None
        out.append(Pole(X, chart, cval))
    return out[0], out[1]


def resolve_gauge(params: MetricParams, gauge: UvwGauge | str) -> UvwGauge:
    if not isinstance(gauge, str):
        return gauge
    if gauge == "canonical":
        return canonical_gauge(params)
    if gauge == "square":
        sign = params.square_sign
        if sign is None:
            raise ValidationError("square gauge needs params (+-2, 0, -+3)")
        return square_gauge(sign, epsilon=params.epsilon)
    raise ValidationError(f"unknown gauge {gauge!r}")


def regular_setup(params: MetricParams, gauge: UvwGauge, mu: float, delta: float):
    """Largest b^2 reached on the sphere, checked against regularity, and a phi covering it."""
    top = 4.0 * delta * delta / mu**2
    sup = regularity_range(params)
    if gauge.kind == "square":
        # closed form: B_max < sup  <=>  4 delta^2 (1 -+ sup) < sup mu^2; for F0- this is mu^2 > 12 delta^2
        coef = 4.0 * (1.0 - gauge.sign * sup) / sup
        if not coef * delta * delta < mu * mu:
            raise OutOfRegularRange(
                f"b^2 leaves the regular range b^2 < {sup} (4 delta^2/mu^2 = {top:.6g})")
        b_sq_max = float(solve_B(top, gauge))
    else:
        if top >= float(gauge.norm_relation(gauge.t_max)):
            raise OutOfRegularRange("gauge range too short for this delta")
        b_sq_max = float(solve_B(top, gauge))
        if not b_sq_max < sup:
            raise OutOfRegularRange(f"b^2 reaches {b_sq_max} outside the regular range {sup}")
    s_cap = math.sqrt(sup) * (1.0 - 1e-9) if math.isfinite(sup) else math.inf
    s_max = min(max(math.sqrt(b_sq_max) * 1.001, 1e-3), s_cap)
    return b_sq_max, solve_phi(params, s_max)


@dataclass(frozen=True, eq=False)
class NavigationBundle:
    """A sphere model together with the metric family and gauge that turn it into F."""

    sphere: SphereData
    params: MetricParams
    gauge: UvwGauge
    phi: PhiSolution
    b_sq_max: float

    @classmethod
    def build(cls, sphere: SphereData, params: MetricParams, gauge: UvwGauge | str = "canonical"):
        gauge = resolve_gauge(params, gauge)
        b_sq_max, phi = regular_setup(params, gauge, sphere.mu, sphere.delta())
        return cls(sphere, params, gauge, phi, b_sq_max)

    @property
    def mu(self) -> float:
        return self.sphere.mu

    @property
    def delta(self) -> float:
        return self.sphere.delta()

    def with_sphere(self, sphere: SphereData) -> "NavigationBundle":
        return NavigationBundle(sphere, self.params, self.gauge, self.phi, self.b_sq_max)

    def rho_norm_sq(self, x):
        """||rho||_h^2 = 4 (delta^2 - mu c^2) / mu^2."""
        d = self.delta
        return np.maximum(4.0 * (d * d - self.mu * self.sphere.c(x) ** 2) / self.mu**2, 0.0)

    def B(self, x):
        return solve_B(self.rho_norm_sq(x), self.gauge)

    def data(self, x, y):
        """Everything the spray and curvature formulas need at (x, y)."""
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        B = self.B(x)
        u, v, w = self.gauge(B)
        beta = 2.0 * self.sphere.c0(x, y) / (self.mu * w)
        h_sq = self.sphere.h_sq(x, y)
        alpha_sq = (h_sq - v * beta * beta) / u
        if np.any(alpha_sq <= 0):
            raise OutOfRegularRange("alpha^2 <= 0: reconstruction left the regular range")
        alpha = np.sqrt(alpha_sq)
        return dict(B=B, u=u, v=v, w=w, alpha=alpha, beta=beta, s=beta / alpha, h_sq=h_sq)

    def alpha_beta(self, x, y):
        d = self.data(x, y)
        return d["alpha"], d["beta"]

    def F(self, x, y):
        d = self.data(x, y)
        return d["alpha"] * self.phi(d["s"])

    def b_form(self, x):
        """Covector b_i of beta and the matrix a_ij of alpha."""
        x = np.asarray(x, dtype=float)
        B = self.B(x)
        u, v, w = self.gauge(B)
        b = 2.0 * self.sphere.grad_c(x) / (self.mu * np.asarray(w)[..., None])
        a = (self.sphere.h_matrix(x) - np.asarray(v)[..., None, None] * b[..., :, None] * b[..., None, :]) \
            / np.asarray(u)[..., None, None]
        return b, a


def reconstruct_alpha_beta(x, y, bundle: NavigationBundle):
    return bundle.alpha_beta(x, y)


def square_alpha_beta_closed(x, y, sphere: SphereData, sign: int):
    """alpha = 4/mu (mu/4 +- delta^2/mu -+ c^2) h, beta = 4 mu^{-3/2} sqrt(...) c0."""
    mu, d = sphere.mu, sphere.delta()
    c = sphere.c(x)
    g = mu / 4.0 + sign * d * d / mu - sign * c * c
    return 4.0 / mu * g * sphere.h_eval(x, y), 4.0 * mu**-1.5 * np.sqrt(g) * sphere.c0(x, y)


def beta_reconstruction_residual(x, y, bundle: NavigationBundle):
    """(k - mu<xi,x>)<x,y> + q (<xi,y> - w sqrt(q) beta)."""
    s = bundle.sphere
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    d = bundle.data(x, y)
    q = s.q(x)
    return (s.k - s.mu * _dot(s.xi_vec, x)) * _dot(x, y) + q * (_dot(s.xi_vec, y) - d["w"] * np.sqrt(q) * d["beta"])


def metric_split_residual(x, y, bundle: NavigationBundle):
    """h^2 - (u alpha^2 + v beta^2)."""
    d = bundle.data(x, y)
    return d["h_sq"] - (d["u"] * d["alpha"] ** 2 + d["v"] * d["beta"] ** 2)


def christoffel_fd(sphere: SphereData, x, step: float = 1e-5):
    """Gamma^k_ij of h by central differences of the metric matrix."""
    x = np.asarray(x, dtype=float)
    n = sphere.n
    dg = np.empty((n, n, n))  # dg[m, i, j] = d_m g_ij
    for m in range(n):
        e = np.zeros(n)
        e[m] = step
        dg[m] = (sphere.h_matrix(x + e) - sphere.h_matrix(x - e)) / (2 * step)
    # low[i, j, l] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    low = 0.5 * (dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0))
    return np.einsum("kl,ijl->kij", sphere.h_inverse(x), low)


def covariant_hessian_c_fd(sphere: SphereData, x, step: float = 1e-5):
    """c_{i|j} = d_j d_i c - Gamma^k_ij c_k with finite differences."""
    x = np.asarray(x, dtype=float)
    n = sphere.n
    H = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        H[:, j] = (sphere.grad_c(x + e) - sphere.grad_c(x - e)) / (2 * step)
    G = christoffel_fd(sphere, x, step)
    return H - np.einsum("kij,k->ij", G, sphere.grad_c(x))


def conformal_residuals(sphere: SphereData, x, step: float = 1e-5):
    """Max-abs residuals of c_{i|j} + mu c h_ij = 0 and p_{i|j} + 2 c h_ij = 0 (p = 2 grad c / mu)."""
    cij = covariant_hessian_c_fd(sphere, x, step)
    hij = sphere.h_matrix(x)
    c = float(sphere.c(x))
    pij = 2.0 * cij / sphere.mu
    return float(np.max(np.abs(cij + sphere.mu * c * hij))), float(np.max(np.abs(pij + 2.0 * c * hij)))
