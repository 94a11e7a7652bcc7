import numpy as np
from scipy.interpolate import BPoly


def hermite5(nodes, y, dy, ddy):
    """Quintic Hermite interpolant through values and first two derivatives.

    ``y``, ``dy``, ``ddy`` have shape (len(nodes),) or (len(nodes), m).
    """
    y, dy, ddy = (np.asarray(a, dtype=float) for a in (y, dy, ddy))
    data = np.stack([y, dy, ddy], axis=1)
    return BPoly.from_derivatives(np.asarray(nodes, dtype=float), data)


def complex_step_dt(f, t, y, h=1e-30):
    """Directional derivative of f(t, y) along (1, f(t, y)), i.e. d/dt f on a solution."""
    f0 = np.asarray(f(t, y))
    return np.imag(np.asarray(f(t + 1j * h, np.asarray(y) + 1j * h * f0))) / h
