"""Coherent feed-forward loop ``S -> X -> Y``, ``X AND Y -> Z``.

``dX/dt = S - aX``, ``dY/dt = X - bY``, ``dZ/dt = XY - cZ``.  Eliminating
``X`` and ``Y`` gives ``Z(t) = int int K(t - v, t - w) S(w) S(v) dw dv`` with
a closed-form kernel.  For fast ``a`` and ``c`` the rescaled output
``xi = a^2 b c Z / S_max^2`` (time ``tau = b t``) reduces to
``xi(tau) = S(tau) int e^{-(tau - s)} S(s) ds``: a delayed rise after the
signal turns on, an immediate drop when it turns off.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import InputError
from ..kernels import TimeGrid
from ..volterra import trapezoid_convolution

__all__ = [
    "FFLParams",
    "ffl_kernel",
    "FFLResponse",
    "ffl_response",
    "ffl_ode",
    "ffl_limit_response",
    "ffl_step_off",
]


@dataclass(frozen=True)
class FFLParams:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise InputError("a, b and c must be positive")


def _exp_window(kappa, m, shift):
    """``e^{shift} int_{-m}^0 e^{kappa s} ds`` without overflow (``shift - kappa m <= 0`` expected)."""
    kappa = np.broadcast_to(kappa, np.shape(m)).astype(float)
    out = np.empty(np.shape(m))
    small = np.abs(kappa * m) < 1e-8
    out[small] = np.exp(shift[small]) * m[small] * (1 - 0.5 * kappa[small] * m[small])
    k, mm, sh = kappa[~small], m[~small], shift[~small]
    out[~small] = (np.exp(sh) - np.exp(sh - k * mm)) / k
    return out


def ffl_kernel(params, eta, xi):
    """Closed-form kernel ``K(eta, xi)`` for ``eta, xi >= 0`` (broadcasting)."""
    a, b, c = params.a, params.b, params.c
    eta, xi = np.broadcast_arrays(np.asarray(eta, dtype=float), np.asarray(xi, dtype=float))
    m = np.minimum(eta, xi)
    if abs(b - a) < 1e-9 * max(a, b):
        # (1 - e^{-(b-a)(xi+s)})/(b-a) -> xi + s
        k = c - 2 * a
        shift = -a * (xi + eta)
        base = _exp_window(np.full_like(m, k), m, shift)
        # int_{-m}^0 s e^{k s} ds
        with np.errstate(over="ignore", invalid="ignore"):
            if abs(k) < 1e-12:
                lin = -0.5 * m**2 * np.exp(shift)
            else:
                lin = (-1.0 / k**2 - np.exp(-k * m) * (-m / k - 1.0 / k**2)) * np.exp(shift)
        return xi * base + lin
    first = _exp_window(np.full_like(m, c - 2 * a), m, -a * (xi + eta))
    second = _exp_window(np.full_like(m, c - a - b), m, -a * eta - b * xi)
    return (first - second) / (b - a)


@dataclass(frozen=True)
class FFLResponse:
    grid: TimeGrid
    Z_kernel: np.ndarray = field(repr=False)
    Z_ode: np.ndarray = field(repr=False)

    @property
    def deviation(self):
        return float(np.abs(self.Z_kernel - self.Z_ode).max())


def _samples(signal, grid):
    s = np.asarray(signal(grid.nodes) if callable(signal) else signal, dtype=float)
    s = np.broadcast_to(s, (grid.n,)).astype(float)
    if not np.isfinite(s).all():
        raise InputError("signal must be finite")
    return s


def ffl_kernel_output(params, grid, signal):
    """``Z`` at every node by the 2-D trapezoid rule on the kernel form (signal zero before 0)."""
    dt, n = grid.dt, grid.n
    s = _samples(signal, grid)
    lags = grid.nodes
    Kmat = ffl_kernel(params, lags[:, None], lags[None, :])
    Z = np.zeros(n)
    for k in range(1, n):
        w = s[k::-1].copy()  # S(t_k - lag)
        w[0] *= 0.5
        w[-1] *= 0.5
        Z[k] = dt * dt * (w @ Kmat[:k + 1, :k + 1] @ w)
    return Z


def ffl_ode(params, grid, signal, y0=(0.0, 0.0, 0.0), rtol=1e-10, atol=1e-13):
    """Direct integration; ``signal`` must be callable.  Returns ``(n, 3)`` for ``X, Y, Z``."""
    a, b, c = params.a, params.b, params.c

    def rhs(t, y):
        X, Y, Z = y
        return [float(signal(t)) - a * X, X - b * Y, X * Y - c * Z]

    sol = solve_ivp(rhs, (0.0, grid.t_max), list(y0), t_eval=grid.nodes, method="DOP853",
                    rtol=rtol, atol=atol, max_step=min(0.1, 0.5 / max(a, b, c)))
    return sol.y.T


def ffl_response(params, grid, signal):
    """``Z`` by kernel quadrature and by the ODE for a callable signal starting at 0."""
    return FFLResponse(grid, ffl_kernel_output(params, grid, signal), ffl_ode(params, grid, signal)[:, 2])


def ffl_limit_response(grid, signal):
    """Fast-limit output ``xi(tau)``, using the symmetrized singular kernel.

    Half the weight sits on each axis; both halves equal
    ``S(tau) int_0^tau e^{-(tau - s)} S(s) ds``.
    """
    s = _samples(signal, grid)
    conv = trapezoid_convolution(np.exp(-grid.nodes), s, grid.dt)
    return 0.5 * (s * conv) + 0.5 * (conv * s)


def ffl_step_off(params, t_off, t_max, dt=1e-3):
    """Scaled output ``xi = a^2 b c Z`` for a unit signal that has been on since ``-inf``
    and switches off at ``t_off`` (times in units of ``1/b``).

    Returns ``(tau, xi_ode, xi_limit)``.
    """
    a, b, c = params.a, params.b, params.c
    grid = TimeGrid(t_max, dt)
    tau = grid.nodes
    t = tau / b
    X0, Y0 = 1 / a, 1 / (a * b)
    y0 = [X0, Y0, X0 * Y0 / c]

    def rhs(on):
        def f(_, y):
            X, Y, Z = y
            return [on - a * X, X - b * Y, X * Y - c * Z]
        return f

    t_sw = t_off / b
    step = 0.5 / max(a, b, c)
    opts = dict(method="DOP853", rtol=1e-11, atol=1e-14, max_step=step, dense_output=True)
    on = solve_ivp(rhs(1.0), (0.0, t_sw), y0, **opts)
    off = solve_ivp(rhs(0.0), (t_sw, t[-1]), on.y[:, -1], **opts)
    before = t <= t_sw
    Z = np.where(before, on.sol(np.minimum(t, t_sw))[2], off.sol(np.maximum(t, t_sw))[2])
    xi = a * a * b * c * Z
    limit = np.where(tau <= t_off, 1.0, 0.0)
    return tau, xi, limit
