"""Kinetic proofreading (Hopfield) with degradation of the substrate complex.

States ``C`` (free), ``S`` (bound), ``S*`` (activated), an absorbing product
``P`` and a degradation sink.  A unit pulse of ``C`` at ``t = 0`` gives the
response ``Phi(t) = lambda S*(t)``; its integral ``P_inf`` is the yield.
"""
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import trapezoid

from ..errors import InputError
from ..kernels import TimeGrid
from ..network import validate_network
from ..renewal import ode_reference

__all__ = [
    "HopfieldParams",
    "HopfieldResponse",
    "Discrimination",
    "reference_params",
    "hopfield_network",
    "hopfield_response",
    "hopfield_yield",
    "hopfield_mean_time",
    "hopfield_discrimination",
]


@dataclass(frozen=True)
class HopfieldParams:
    """Rates and (dimensionless) free energies; time is measured in units of ``1/k``."""

    alpha: float
    beta: float
    Q: float
    mu: float
    lam: float
    E1: float
    E2: float
    k: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "Q", "mu", "lam", "k"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise InputError(f"{name} = {v} must be finite and nonnegative")
        if self.Q <= 0 or self.k <= 0 or self.lam <= 0:
            raise InputError("Q, k and lam must be positive")

    @property
    def xi(self):
        return float(np.exp(self.E1))

    @property
    def eta(self):
        return float(np.exp(self.E2 - self.E1))

    @property
    def zeta(self):
        return self.alpha * self.lam / (self.mu * self.beta * self.eta)

    def with_energies(self, E1, E2):
        return replace(self, E1=float(E1), E2=float(E2))

    def generator(self):
        """Transient 3x3 block over ``(C, S, S*)``."""
        k, a, b, Q, mu, lam = self.k, self.alpha, self.beta, self.Q, self.mu, self.lam
        xi, eE2, eta = self.xi, float(np.exp(self.E2)), self.eta
        return np.array([
            [-(k + b + mu), k * xi, b * eE2],
            [k, -(k * xi + a), a * eta / Q],
            [b, a, -(a * eta / Q + b * eE2 + lam)],
        ])


def reference_params(eps=0.01, s=0.5):
    """Parameter pair (preferred, rejected substrate) of the standard proofreading example."""
    base = dict(alpha=eps, beta=eps**2, Q=eps**-2, mu=eps, lam=2 * eps**2)
    p = HopfieldParams(E1=np.log(2.0), E2=np.log(4.0 / eps**s), **base)
    pb = HopfieldParams(E1=np.log(8.0), E2=np.log(16.0 / eps**s), **base)
    return p, pb


def hopfield_network(params):
    k, a, b, Q, mu, lam = params.k, params.alpha, params.beta, params.Q, params.mu, params.lam
    xi, eE2, eta = params.xi, float(np.exp(params.E2)), params.eta
    rates = [
        ("C", "S", k), ("S", "C", k * xi),
        ("C", "S*", b), ("S*", "C", b * eE2),
        ("S", "S*", a), ("S*", "S", a * eta / Q),
        ("S*", "P", lam),
    ]
    states = ["C", "S", "S*", "P"]
    if mu > 0:
        rates.append(("C", "0", mu))
        states.append("0")
    return validate_network(states, rates)


@dataclass(frozen=True)
class HopfieldResponse:
    grid: TimeGrid
    phi: np.ndarray
    P_quadrature: float
    P_laplace: float


def hopfield_yield(params):
    """``P_inf = lambda * (-A)^{-1} e_C`` restricted to ``S*`` (Laplace transform at 0)."""
    x = np.linalg.solve(-params.generator(), np.array([1.0, 0.0, 0.0]))
    return float(params.lam * x[2])


def hopfield_mean_time(params):
    """Mean production time ``int (C + S + S*) dt`` for a unit pulse without degradation."""
    p0 = replace(params, mu=0.0)
    x = np.linalg.solve(-p0.generator(), np.array([1.0, 0.0, 0.0]))
    return float(x.sum())


def hopfield_response(params, grid=None):
    """Response ``Phi = lambda S*`` to a unit pulse and the yield by two routes.

    The default grid covers 12 e-foldings of the slowest mode.
    """
    if grid is None:
        slow = float(np.min(np.abs(np.linalg.eigvals(params.generator()).real)))
        fast = float(np.max(np.abs(np.diag(params.generator()))))
        t_max = float(np.ceil(12.0 / slow))
        dt = t_max / max(2000, int(np.ceil(t_max * fast / 0.1)))
        grid = TimeGrid(t_max, dt)
    net = hopfield_network(params)
    ref = ode_reference(net, {"C": 1.0}, grid)
    phi = params.lam * ref.n[:, net.index("S*")]
    return HopfieldResponse(grid, phi, float(trapezoid(phi, dx=grid.dt)), hopfield_yield(params))


@dataclass(frozen=True)
class Discrimination:
    theta: float
    ratio: float
    ratio_quadrature: float
    P: float
    P_bar: float
    T: float
    T_bar: float

    @property
    def time_ratio(self):
        return self.T / self.T_bar


def hopfield_discrimination(params, params_bar, grid=None, quadrature=True):
    """Yield ratio ``P_bar / P`` and mean-time ratio ``T / T_bar``.

    ``params_bar`` must differ from ``params`` only in the energies, with
    ``E1 - E2`` kept fixed.
    """
    same = replace(params_bar, E1=params.E1, E2=params.E2) == params
    if not same:
        raise InputError("the two parameter sets may differ only in E1 and E2")
    if abs((params.E1 - params.E2) - (params_bar.E1 - params_bar.E2)) > 1e-9:
        raise InputError("E1 - E2 must be the same for both substrates")
    theta = float(np.exp(-(params_bar.E1 - params.E1)))
    P, Pb = hopfield_yield(params), hopfield_yield(params_bar)
    if quadrature:
        r, rb = hopfield_response(params, grid), hopfield_response(params_bar, grid)
        rq = rb.P_quadrature / r.P_quadrature
    else:
        rq = float("nan")
    return Discrimination(theta, Pb / P, rq, P, Pb, hopfield_mean_time(params), hopfield_mean_time(params_bar))
