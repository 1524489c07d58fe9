"""Polymer growth with non-exponential monomer addition.

Linear cascade: with a constant monomer flux ``I_1 = 1`` the flux into size
``l`` is ``I_l = Psi * I_{l-1}`` and ``dn_l/dt = I_l - I_{l+1}``.  Behind a
front moving at speed ``1/mu`` the sizes settle at ``n_l = mu``.

Nonlinear model: monomers attach at rate ``n_1 n_l`` into a transient state
``w_{l+1}``, which completes with delay density ``Psi``; polymers lose one
monomer at unit rate.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.stats import gamma

from ..errors import InputError, NegativeSolutionError
from ..kernels import TimeGrid
from ..volterra import trapezoid_convolution

__all__ = [
    "erlang_kernel",
    "PolymerFront",
    "polymer_front",
    "NonlinearPolymer",
    "nonlinear_polymer",
    "becker_doring_reference",
]


def erlang_kernel(shape, mean, t):
    """Erlang density with integer ``shape`` and given mean."""
    return gamma.pdf(np.asarray(t, dtype=float), a=shape, scale=mean / shape)


def _normalize(psi, dt, tol=1e-2):
    psi = np.asarray(psi, dtype=float)
    if (psi < 0).any() or not np.isfinite(psi).all():
        raise InputError("kernel samples must be finite and nonnegative")
    mass = trapezoid(psi, dx=dt)
    if abs(mass - 1.0) > tol:
        raise InputError(f"kernel integrates to {mass:.6g}; a normalized density is required")
    return psi / mass


@dataclass(frozen=True)
class PolymerFront:
    grid: TimeGrid
    n: np.ndarray = field(repr=False)  # (time, L_max), column l-1 is size l
    mu: float
    front: np.ndarray = field(repr=False)
    speed: float
    plateau: float
    boundary_hit: bool


def polymer_front(psi, grid, L_max):
    """Run the linear cascade and measure the front.

    The front position is the largest size with ``n_l >= mu / 2``; its speed
    is the slope of a least-squares line over the second half of the run.
    The plateau is the median of ``n_l(t_max)`` over ``L_max/4 <= l <= L_max/2``.
    ``boundary_hit`` flags runs whose front reached ``L_max``.
    """
    if L_max < 4:
        raise InputError("L_max must be at least 4")
    dt, n = grid.dt, grid.n
    psi = _normalize(psi, dt)
    if psi.shape != (n,):
        raise InputError(f"kernel has {psi.size} samples, grid has {n}")
    t = grid.nodes
    mu = float(trapezoid(t * psi, dx=dt))
    flux = np.ones(n)
    counts = np.empty((n, L_max))
    for ell in range(L_max):
        nxt = trapezoid_convolution(psi, flux, dt)
        counts[:, ell] = cumulative_trapezoid(flux - nxt, dx=dt, initial=0.0)
        flux = nxt
    above = counts >= 0.5 * mu
    # largest l with n_l >= mu/2 (0 when none)
    idx = np.where(above.any(axis=1), L_max - np.argmax(above[:, ::-1], axis=1), 0)
    half = t >= 0.5 * t[-1]
    speed = float(np.polyfit(t[half], idx[half], 1)[0])
    lo, hi = max(1, L_max // 4), max(2, L_max // 2)
    plateau = float(np.median(counts[-1, lo - 1:hi]))
    return PolymerFront(grid, counts, mu, idx, speed, plateau, bool(idx.max() >= L_max))


@dataclass(frozen=True)
class NonlinearPolymer:
    grid: TimeGrid
    n: np.ndarray = field(repr=False)  # (time, L_max), column l-1 is size l
    w: np.ndarray = field(repr=False)  # (time, L_max), column l-1 is transient state w_l (w_1 = 0)
    source: np.ndarray = field(repr=False)

    @property
    def monomers(self):
        return self.n[:, 0]

    def total_mass(self):
        sizes = np.arange(1, self.n.shape[1] + 1)
        return self.n @ sizes + self.w @ sizes

    def mass_residual(self):
        """Largest deviation of ``sum l (n_l + w_l)`` from the integrated source, per unit time."""
        dt = self.grid.dt
        # explicit Euler uses the left-point value of the source
        injected = np.concatenate([[0.0], np.cumsum(self.source[:-1]) * dt])
        dev = np.abs(self.total_mass() - self.total_mass()[0] - injected)
        return float(dev.max() / self.grid.t_max)


def _rhs_local(n, src, L):
    """Attachment, detachment and source terms (everything except the delayed completion)."""
    n1 = n[0]
    dn = np.zeros(L)
    g = np.zeros(L)  # attachment flux into w_l, l = 2..L
    g[1:] = n1 * n[:-1]
    # polymers of size l >= 2 lose n1 n_l to attachment (the largest size cannot grow)
    dn[1:L - 1] -= n1 * n[1:L - 1]
    # detachment l -> l-1 at unit rate for l >= 2
    dn[1:] -= n[1:]
    dn[1:L - 1] += n[2:L]
    dn[0] = 2 * n[1] + n[2:].sum() - n1 * n[1:L - 1].sum() - 2 * n1 * n1 + src
    return dn, g


def nonlinear_polymer(psi, source, grid, L_max, n_init=None, w_init=None):
    """Explicit Euler for the nonlinear delayed-attachment model.

    The completion flux ``I_l(t) = int Psi(t - s) n_1(s) n_{l-1}(s) ds`` is
    evaluated with the trapezoid rule over the whole history.  Attachment to
    the largest tracked size is switched off so the mass bookkeeping stays
    exact.

    Raises
    ------
    NegativeSolutionError
        If a concentration becomes negative; the message suggests a step.
    """
    dt, n_t = grid.dt, grid.n
    psi = _normalize(psi, dt)
    if psi.shape != (n_t,):
        raise InputError(f"kernel has {psi.size} samples, grid has {n_t}")
    src = np.broadcast_to(np.asarray(source(grid.nodes) if callable(source) else source, dtype=float), (n_t,)).copy()
    if (src < 0).any():
        raise InputError("source must be nonnegative")
    L = int(L_max)
    n = np.zeros((n_t, L))
    w = np.zeros((n_t, L))
    if n_init is not None:
        n[0] = np.asarray(n_init, dtype=float)
    if w_init is not None:
        w[0] = np.asarray(w_init, dtype=float)
    if (n[0] < 0).any() or (w[0] < 0).any():
        raise InputError("initial data must be nonnegative")
    g_hist = np.zeros((n_t, L))
    weights = psi * dt
    # lags beyond the point where the kernel tail holds < 1e-14 of its mass are dropped
    tail = np.cumsum(weights[::-1])[::-1]
    span = int(np.searchsorted(-tail, -1e-14)) + 1
    for k in range(n_t - 1):
        dn, g = _rhs_local(n[k], src[k], L)
        g_hist[k] = g
        # trapezoid over [0, t_k]: end weights halved
        j = min(k, span)
        I = weights[j::-1] @ g_hist[k - j:k + 1]
        if k > 0:
            I -= 0.5 * weights[0] * g_hist[k]
            if k <= span:
                I -= 0.5 * weights[k] * g_hist[0]
        else:
            I = np.zeros(L)
        n[k + 1] = n[k] + dt * (dn + I)
        w[k + 1] = w[k] + dt * (g - I)
        scale = max(1.0, float(np.abs(n[k + 1]).max()))
        if n[k + 1].min() < -1e-10 * scale or w[k + 1].min() < -1e-8 * scale:
            rate = 1.0 + 2.0 * float(np.abs(n[k]).max()) + float(np.abs(n[k]).sum())
            raise NegativeSolutionError(
                f"negative concentration at t = {grid.nodes[k + 1]:.4g}; try dt <= {0.5 / rate:.3g}")
    return NonlinearPolymer(grid, n, w, src)


def becker_doring_reference(source, grid, L_max, n_init=None):
    """Instantaneous-completion limit (``Psi = delta``) integrated by explicit Euler."""
    dt, n_t = grid.dt, grid.n
    src = np.broadcast_to(np.asarray(source(grid.nodes) if callable(source) else source, dtype=float), (n_t,))
    L = int(L_max)
    n = np.zeros((n_t, L))
    if n_init is not None:
        n[0] = np.asarray(n_init, dtype=float)
    for k in range(n_t - 1):
        dn, g = _rhs_local(n[k], src[k], L)
        n[k + 1] = n[k] + dt * (dn + g)
    return n
