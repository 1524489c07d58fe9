"""Solvers for the renewal (response function) equations.

General system, for every compartment ``alpha``::

    S_alpha(t) = S0_alpha(t) + sum_{beta != alpha} int_0^t G[beta->alpha](t-s) S_beta(s) ds
    J_alpha(t) = J0_alpha(t) + int_0^t K[alpha](t-s) S_alpha(s) ds
    dN_alpha/dt = e^T S_alpha - e^T J_alpha

and its scalar one-entrance form with ``B``, ``D`` and ``Phi``, ``k``.
Both are discretized with the product trapezoid rule (see :mod:`.volterra`),
and ``N`` is integrated with the same rule, so the discrete total mass is
conserved whenever the kernels conserve it node by node.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, trapezoid

from .errors import GridError, InputError, NegativeSolutionError
from .kernels import (TimeGrid, compute_forcing, compute_kernels,
                      initial_vector)
from .matfun import expm_column_sequence
from .network import decompose
from .volterra import solve_volterra, trapezoid_convolution

__all__ = [
    "RenewalSolution",
    "OdeReference",
    "EquivalenceReport",
    "solve_renewal",
    "solve_renewal_scalar",
    "ode_reference",
    "equivalence_check",
]

NEG_TOL = 1e-10


@dataclass(frozen=True)
class RenewalSolution:
    """Fluxes and contents on a grid.

    In the general case ``S[alpha]`` and ``J[alpha]`` have shape
    ``(n, |alpha|)``; in the scalar case they have shape ``(n,)`` and are
    also available as ``B`` and ``D``.
    """

    grid: TimeGrid
    labels: tuple
    S: dict = field(repr=False)
    J: dict = field(repr=False)
    N: dict = field(repr=False)
    N0: dict = field(repr=False)
    scalar: bool = False

    @property
    def B(self):
        return self.S

    @property
    def D(self):
        return self.J

    def total(self):
        return sum(self.N[a] for a in self.labels)

    def mass_drift(self):
        """Largest relative deviation of the total content from its initial value."""
        tot0 = sum(self.N0.values())
        dev = np.abs(self.total() - tot0).max()
        return float(dev / tot0) if tot0 > 0 else float(dev)


def _check_nonneg(name, arr, scale, slack=0.0):
    lo = float(np.min(arr)) if np.size(arr) else 0.0
    if lo < -NEG_TOL * max(1.0, scale) - slack:
        raise NegativeSolutionError(f"{name} dropped to {lo:.3e} (tolerance {NEG_TOL:g})")


def _positivity_hypotheses(exit_masses, forcing_masses, N0, tol):
    """Quadrature check: outflow kernels lose at most unit mass and the
    outflow forcing does not exceed the initial content."""
    ok = all(m <= 1.0 + tol for m in exit_masses)
    ok = ok and all(f <= N0[a] + tol * max(1.0, N0[a]) for a, f in forcing_masses.items())
    return ok


def _integrate(rate, N0, dt):
    # Simpson rather than trapezoid: the trapezoid overshoot (dt^2) pushes the
    # contents of draining compartments below zero; the rule is linear, so
    # totals are still conserved node by node
    if rate.size < 3:
        return N0 + np.concatenate([[0.0], 0.5 * dt * (rate[1:] + rate[:-1])])[:rate.size]
    return N0 + cumulative_simpson(rate, dx=dt, initial=0.0)


def _content_slack(rate, dt):
    """The first Simpson interval fits a parabola through lagging start-up samples
    and may dip by O(dt^3) below zero; the content check tolerates that."""
    return dt ** 3 * float(np.abs(rate).max()) if rate.size else 0.0


def solve_renewal(kernels, N0=None, check=True):
    """Solve the general renewal system.

    Parameters
    ----------
    kernels : KernelSet
        Kernels and forcing (see :meth:`KernelSet.with_forcing`).
    N0 : dict, optional
        Initial content per compartment; defaults to zero.
    check : bool
        Raise :class:`NegativeSolutionError` on undershoot below ``-1e-10``.
    """
    system = kernels.system
    grid = kernels.grid
    n, dt = grid.n, grid.dt
    labels = system.labels
    N0 = _initial_contents(labels, N0)
    sizes = [system[a].size for a in labels]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    d = int(offs[-1])
    kern = np.zeros((n, d, d))
    F = np.zeros((n, d))
    for ia, a in enumerate(labels):
        ra = slice(offs[ia], offs[ia + 1])
        S0 = np.asarray(kernels.S0[a], dtype=float)
        if S0.shape != (n, sizes[ia]):
            raise InputError(f"forcing S0[{a}] has shape {S0.shape}, expected {(n, sizes[ia])}")
        F[:, ra] = S0
        for ib, b in enumerate(labels):
            if a != b and (b, a) in kernels.G:
                g = kernels.G[b, a]
                if g.shape[0] != n:
                    raise InputError(f"kernel G[{b}->{a}] has {g.shape[0]} nodes, grid has {n}")
                kern[:, ra, offs[ib]:offs[ib + 1]] = g
    Sall = solve_volterra(kern, F, dt)
    S, J, N = {}, {}, {}
    for ia, a in enumerate(labels):
        Sa = Sall[:, offs[ia]:offs[ia + 1]]
        Ja = np.asarray(kernels.J0[a], dtype=float) + trapezoid_convolution(kernels.K[a], Sa, dt)
        S[a], J[a] = Sa, Ja
        N[a] = _integrate(Sa.sum(axis=1) - Ja.sum(axis=1), N0[a], dt)
    if check:
        nonneg_input = (kern.min() >= 0 and F.min() >= 0
                        and all(kernels.K[a].min() >= 0 and np.min(kernels.J0[a]) >= 0 for a in labels))
        scale = max(sum(N0.values()), float(np.abs(F).max()) if F.size else 0.0)
        if nonneg_input:
            for a in labels:
                _check_nonneg(f"S[{a}]", S[a], scale)
                _check_nonneg(f"J[{a}]", J[a], scale)
            exit_masses = []
            for a in labels:
                col = trapezoid(kernels.K[a].sum(axis=1), dx=dt, axis=0)
                exit_masses.extend(col.tolist())
            forcing = {a: float(trapezoid(kernels.J0[a].sum(axis=1), dx=dt)) for a in labels}
            if _positivity_hypotheses(exit_masses, forcing, N0, 1e-6):
                for a in labels:
                    _check_nonneg(f"N[{a}]", N[a], scale, _content_slack(S[a].sum(axis=1) - J[a].sum(axis=1), dt))
    return RenewalSolution(grid, labels, S, J, N, N0, scalar=False)


def _initial_contents(labels, N0):
    if N0 is None:
        N0 = {}
    out = {}
    for a in labels:
        v = float(N0.get(a, 0.0))
        if v < 0 or not np.isfinite(v):
            raise InputError(f"initial content N0[{a}] = {v} must be finite and nonnegative")
        out[a] = v
    unknown = set(N0) - set(labels)
    if unknown:
        raise InputError(f"initial contents name unknown compartments {sorted(unknown)}")
    return out


def solve_renewal_scalar(scalar, N0=None, check=True):
    """Solve the scalar one-entrance system.

    ``N0`` defaults to ``scalar.N0``.  Returns a :class:`RenewalSolution`
    with ``B`` and ``D`` as 1-D arrays.
    """
    grid = scalar.grid
    n, dt = grid.n, grid.dt
    labels = scalar.labels
    N0 = _initial_contents(labels, scalar.N0 if N0 is None else N0)
    m = len(labels)
    kern = np.zeros((n, m, m))
    F = np.zeros((n, m))
    for ia, a in enumerate(labels):
        F[:, ia] = scalar.B0[a]
        for ib, b in enumerate(labels):
            if a != b:
                phi = np.asarray(scalar.Phi[b, a], dtype=float)
                if phi.shape != (n,):
                    raise InputError(f"kernel Phi[{b}->{a}] has shape {phi.shape}, grid needs ({n},)")
                kern[:, ia, ib] = phi
    Ball = solve_volterra(kern, F, dt)
    B, D, N = {}, {}, {}
    for ia, a in enumerate(labels):
        B[a] = Ball[:, ia]
        D[a] = np.asarray(scalar.D0[a], dtype=float) + trapezoid_convolution(scalar.k[a], B[a], dt)
        N[a] = _integrate(B[a] - D[a], N0[a], dt)
    if check:
        nonneg_input = (kern.min() >= 0 and F.min() >= 0
                        and all(scalar.k[a].min() >= 0 and scalar.D0[a].min() >= 0 for a in labels))
        scale = max(sum(N0.values()), float(np.abs(F).max()) if F.size else 0.0)
        if nonneg_input:
            for a in labels:
                _check_nonneg(f"B[{a}]", B[a], scale)
                _check_nonneg(f"D[{a}]", D[a], scale)
            exit_masses = [float(trapezoid(scalar.k[a], dx=dt)) for a in labels]
            forcing = {a: float(trapezoid(scalar.D0[a], dx=dt)) for a in labels}
            if _positivity_hypotheses(exit_masses, forcing, N0, 1e-6):
                for a in labels:
                    _check_nonneg(f"N[{a}]", N[a], scale, _content_slack(B[a] - D[a], dt))
    return RenewalSolution(grid, labels, B, D, N, N0, scalar=True)


@dataclass(frozen=True)
class OdeReference:
    """Direct solution of ``dn/dt = A n`` aggregated per compartment."""

    grid: TimeGrid
    n: np.ndarray = field(repr=False)  # (nodes, states), network order
    N: dict = field(default=None, repr=False)
    S: dict = field(default=None, repr=False)
    J: dict = field(default=None, repr=False)


def ode_reference(network, n0, grid, system=None):
    """Exact solution ``n(t) = exp(tA) n0`` at the grid nodes.

    With ``system`` given, also returns per-compartment contents and the
    fluxes ``S_alpha = sum_beta A_{alpha beta} n_beta`` and
    ``J_alpha = C_alpha n_alpha``.
    """
    v = initial_vector(network, n0)
    traj = expm_column_sequence(network.A, v, grid.dt, grid.n)
    if system is None:
        return OdeReference(grid, traj)
    N, S, J = {}, {}, {}
    for c in system.compartments:
        na = traj[:, c.index]
        N[c.label] = na.sum(axis=1)
        J[c.label] = na * np.diag(system.exit_rates(c.label))[None, :]
        Sa = np.zeros_like(na)
        for b in system.compartments:
            if b.label != c.label:
                Sa += traj[:, b.index] @ system.block(c.label, b.label).T
        S[c.label] = Sa
    return OdeReference(grid, traj, N, S, J)


@dataclass(frozen=True)
class EquivalenceReport:
    deviation_N: dict
    deviation_S: dict
    deviation_J: dict
    tol: float
    solution: RenewalSolution = field(repr=False)
    reference: OdeReference = field(repr=False)

    @property
    def max_deviation(self):
        return max(max(d.values()) for d in (self.deviation_N, self.deviation_S, self.deviation_J))

    @property
    def max_deviation_N(self):
        return max(self.deviation_N.values())

    @property
    def passed(self):
        return self.max_deviation <= self.tol


def equivalence_check(network, partition, n0, grid, tol=1e-5, max_step=0.1):
    """Compare the renewal solution with the direct ODE solution.

    Raises
    ------
    GridError
        If ``dt * max|A_ii| > max_step``.
    """
    fastest = float(np.abs(np.diag(network.A)).max())
    if grid.dt * fastest > max_step:
        raise GridError(f"grid under-resolved: dt*max|A_ii| = {grid.dt * fastest:.3g} > {max_step}")
    system = partition if hasattr(partition, "compartments") else decompose(network, partition)
    kernels = compute_kernels(system, grid)
    S0, J0 = compute_forcing(system, grid, n0, kernels=kernels)
    v = initial_vector(network, n0)
    N0 = {c.label: float(v[c.index].sum()) for c in system.compartments}
    sol = solve_renewal(kernels.with_forcing(S0, J0), N0)
    ref = ode_reference(network, v, grid, system)
    dN = {a: float(np.abs(sol.N[a] - ref.N[a]).max()) for a in system.labels}
    dS = {a: float(np.abs(sol.S[a] - ref.S[a]).max()) for a in system.labels}
    dJ = {a: float(np.abs(sol.J[a] - ref.J[a]).max()) for a in system.labels}
    return EquivalenceReport(dN, dS, dJ, float(tol), sol, ref)
