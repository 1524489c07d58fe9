"""Linear adaptation circuit.

``dX/dt = aY - bX + s(t)``, ``dY/dt = 1 - X``.  With ``xi = X - 1`` the pair
``(xi, Y)`` is driven by ``s - b`` and
``X(t) = 1 + (1/b) int_0^t Phi(v) (s(t - v) - b) dv`` with the response

    Phi(t) = b (lam_+ e^{lam_+ t} - lam_- e^{lam_- t}) / sqrt(b^2 - 4a).

``int_0^inf Phi = 0``, so ``X`` returns to 1 under any signal that settles.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import InputError
from ..kernels import TimeGrid
from ..volterra import trapezoid_convolution

__all__ = [
    "AdaptationParams",
    "AdaptationResponse",
    "adaptation_kernel",
    "adaptation_kernel_integral",
    "adaptation_response",
    "adaptation_ode",
]


@dataclass(frozen=True)
class AdaptationParams:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise InputError("a and b must be positive")
        if abs(self.b**2 - 4 * self.a) <= 1e-12 * max(self.b**2, 1.0):
            raise InputError("b^2 = 4a gives a repeated eigenvalue; the response form needs distinct ones")

    @property
    def eigenvalues(self):
        root = np.sqrt(complex(self.b**2 - 4 * self.a))
        return (-self.b + root) / 2, (-self.b - root) / 2, root


def adaptation_kernel(params, t):
    """Closed-form response; complex eigenvalues give a damped oscillation."""
    lp, lm, root = params.eigenvalues
    t = np.asarray(t, dtype=float)
    val = params.b / root * (lp * np.exp(lp * t) - lm * np.exp(lm * t))
    return val.real


def adaptation_kernel_integral(params, t):
    """``int_0^t Phi = b (e^{lam_+ t} - e^{lam_- t}) / sqrt(b^2 - 4a)``."""
    lp, lm, root = params.eigenvalues
    t = np.asarray(t, dtype=float)
    return (params.b / root * (np.exp(lp * t) - np.exp(lm * t))).real


@dataclass(frozen=True)
class AdaptationResponse:
    grid: TimeGrid
    phi: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    signal: np.ndarray = field(repr=False)


def _signal_samples(signal, grid):
    if callable(signal):
        s = np.asarray(signal(grid.nodes), dtype=float)
    else:
        s = np.asarray(signal, dtype=float)
    s = np.broadcast_to(s, (grid.n,)).astype(float)
    if not np.isfinite(s).all():
        raise InputError("signal must be finite")
    return s


def adaptation_response(params, grid, signal):
    """Response kernel and ``X(t)`` by trapezoid quadrature of the convolution.

    ``signal`` is a callable of time, an array of grid samples or a constant;
    the system starts at rest (``X = 1``) for ``t < 0`` with ``s = b``.
    """
    s = _signal_samples(signal, grid)
    phi = adaptation_kernel(params, grid.nodes)
    X = 1.0 + trapezoid_convolution(phi, s - params.b, grid.dt) / params.b
    return AdaptationResponse(grid, phi, X, s)


def adaptation_ode(params, grid, signal, rtol=1e-10, atol=1e-12):
    """Direct integration of the two ODEs from rest; ``signal`` must be callable."""
    a, b = params.a, params.b

    def rhs(t, y):
        X, Y = y
        return [a * Y - b * X + float(signal(t)), 1.0 - X]

    # at rest with s = b: X = 1 and aY = b X - s = 0
    sol = solve_ivp(rhs, (0.0, grid.t_max), [1.0, 0.0], t_eval=grid.nodes,
                    method="DOP853", rtol=rtol, atol=atol, max_step=0.1)
    return sol.y[0]
