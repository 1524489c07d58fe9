"""Age-structured formulation of the scalar renewal system.

Each compartment carries a density ``f_alpha(t, age)`` transported with unit
speed in age, removed at the age-dependent rate ``Lambda_alpha(age)`` and
re-injected at age zero of the receiving compartment:

    d_t f + d_age f = -Lambda_alpha(age) f
    f_alpha(t, 0)   = sum_beta int lambda_{beta alpha}(age) f_beta(t, age) d age

Rates and transit densities are related by
``lambda = Phi / (1 - sum int Phi)`` and ``Phi = lambda exp(-int Lambda)``.

The solver uses an age step equal to the time step, so transport is an exact
index shift.  Cohort masses are attenuated by ``exp(-Lambda dt)`` with the
rate at the start of the step, and the removed mass is routed to the
receiving compartments in proportion to the individual rates.  The scheme is
conservative and first order in ``dt``.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid

from . import backend as _backend
from .errors import InputError, NumericalError
from .kernels import ScalarKernelSet, TimeGrid
from .matfun import expm
from .renewal import solve_renewal_scalar

__all__ = [
    "AgeRates",
    "HistoryMeasure",
    "AgeDensity",
    "SpeReport",
    "HistoryVerdict",
    "rates_from_kernels",
    "kernels_from_rates",
    "solve_spe",
    "spe_rfe_equivalence",
    "forward_history_check",
]

DENOMINATOR_FLOOR = 1e-12


@dataclass(frozen=True)
class AgeRates:
    """Jump rates ``lam[(alpha, beta)]`` sampled at ages ``0, dt, ...``."""

    grid: TimeGrid
    labels: tuple
    lam: dict = field(repr=False)

    def total(self, alpha):
        out = np.zeros(self.grid.n)
        for b in self.labels:
            if b != alpha:
                out = out + self.lam[alpha, b]
        return out

    def max_rate(self):
        """Largest sampled rate per compartment (boundedness is only observed)."""
        return {a: float(self.total(a).max()) for a in self.labels}


def rates_from_kernels(scalar, floor=DENOMINATOR_FLOOR):
    """Age-dependent jump rates of a scalar kernel set.

    Raises
    ------
    InputError
        If the survival ``1 - sum int Phi`` falls below ``floor`` on the grid.
    """
    grid = scalar.grid
    lam = {}
    for a in scalar.labels:
        k = scalar.k[a]
        # the trapezoid error (dt^2) would swamp small survivals; Simpson is dt^4
        surv = 1.0 - cumulative_simpson(k, dx=grid.dt, initial=0.0)
        if not k.any():
            for b in scalar.labels:
                if b != a:
                    lam[a, b] = np.zeros(grid.n)
            continue
        low = np.nonzero(surv < floor)[0]
        if low.size:
            t = low[0] * grid.dt
            raise InputError(
                f"kernel mass of {a} exhausted at t = {t:.6g} (survival below {floor:g}); "
                "rates need kernels with unbounded support on the grid")
        for b in scalar.labels:
            if b != a:
                lam[a, b] = scalar.Phi[a, b] / surv
    return AgeRates(grid, tuple(scalar.labels), lam)


def kernels_from_rates(rates):
    """Transit densities ``Phi = lambda exp(-int Lambda)`` (cumulative trapezoid)."""
    grid = rates.grid
    Phi = {}
    for a in rates.labels:
        surv = np.exp(-cumulative_trapezoid(rates.total(a), dx=grid.dt, initial=0.0))
        for b in rates.labels:
            if b != a:
                Phi[a, b] = rates.lam[a, b] * surv
    return ScalarKernelSet.from_kernels(grid, Phi, labels=rates.labels)


@dataclass
class HistoryMeasure:
    """Past entries into each compartment.

    Attributes
    ----------
    atoms : dict
        ``alpha -> [(location, mass), ...]`` with ``location <= 0``.
    densities : dict
        ``alpha -> array`` of entry densities at locations ``0, -dt, -2dt, ...``
        (same ``dt`` as the solver grid).
    """

    atoms: dict = field(default_factory=dict)
    densities: dict = field(default_factory=dict)

    def __post_init__(self):
        for a, lst in self.atoms.items():
            clean = []
            for loc, mass in lst:
                loc, mass = float(loc), float(mass)
                if loc > 0:
                    raise InputError(f"history atom of {a} at positive location {loc}")
                if mass < 0 or not np.isfinite(mass):
                    raise InputError(f"history atom of {a} has invalid mass {mass}")
                clean.append((loc, mass))
            self.atoms[a] = clean
        for a, arr in self.densities.items():
            arr = np.asarray(arr, dtype=float)
            if (arr < 0).any() or not np.isfinite(arr).all():
                raise InputError(f"history density of {a} must be finite and nonnegative")
            self.densities[a] = arr

    def span(self, dt):
        s = 0.0
        for lst in self.atoms.values():
            for loc, _ in lst:
                s = max(s, -loc)
        for arr in self.densities.values():
            s = max(s, (arr.size - 1) * dt)
        return s

    def cells(self, alpha, dt):
        """Entry masses per age cell: ``(cell index, mass)`` pairs."""
        out = []
        for loc, mass in self.atoms.get(alpha, []):
            j = int(round(-loc / dt))
            if abs(j * dt + loc) > 1e-9 * max(1.0, -loc):
                raise InputError(f"history atom of {alpha} at {loc} is not on the age grid (dt={dt})")
            out.append((j, mass))
        arr = self.densities.get(alpha)
        if arr is not None:
            out.extend((j, v * dt) for j, v in enumerate(arr) if v > 0)
        return out


@dataclass(frozen=True)
class AgeDensity:
    """Solution of the age-structured system.

    ``f[alpha]`` has shape ``(len(snapshot_times), len(ages))``; ``N``, ``B``
    and ``D`` are full time series on ``grid``.
    """

    grid: TimeGrid
    ages: np.ndarray = field(repr=False)
    snapshot_times: np.ndarray = field(repr=False)
    f: dict = field(repr=False)
    N: dict = field(repr=False)
    B: dict = field(repr=False)
    D: dict = field(repr=False)
    rates: AgeRates = field(repr=False)

    def total(self):
        return sum(self.N.values())


def solve_spe(rates, history, t_max=None, store_every=None, age_max=None, impl=None):
    """Integrate the age-structured system along characteristics.

    Parameters
    ----------
    rates : AgeRates
    history : HistoryMeasure
    t_max : float, optional
        Horizon; defaults to the rate grid length minus the history span.
    store_every : int, optional
        Keep one density snapshot every this many steps (default: about 200
        snapshots).
    age_max : float, optional
        Largest resolved age; older cohorts are kept in the last cell and
        decay with its rate.  Defaults to ``t_max`` plus the history span.
    """
    impl = impl or _backend.impl
    dt = rates.grid.dt
    span = history.span(dt)
    if t_max is None:
        t_max = rates.grid.t_max - span
    grid = TimeGrid(t_max, dt)
    if age_max is None:
        age_max = t_max + span
    J = int(round(age_max / dt)) + 1
    if J < 2:
        raise InputError("age grid needs at least two cells")
    if J > rates.grid.n:
        raise InputError(
            f"rates sampled up to age {rates.grid.t_max}, need {age_max} (t_max + history span)")
    labels = rates.labels
    k = len(labels)
    total = np.stack([rates.total(a)[:J] for a in labels])
    surv = np.exp(-total * dt)
    route = np.zeros((k, k, J))
    with np.errstate(invalid="ignore", divide="ignore"):
        for ia, a in enumerate(labels):
            frac_out = (1.0 - surv[ia])
            for ib, b in enumerate(labels):
                if a != b:
                    share = np.where(total[ia] > 0, rates.lam[a, b][:J] / total[ia], 0.0)
                    route[ia, ib] = frac_out * share
    cum = np.concatenate([np.ones((k, 1)), np.cumprod(surv, axis=1)[:, :-1]], axis=1)
    mass = np.zeros((k, J))
    for ia, a in enumerate(labels):
        for j, w in history.cells(a, dt):
            if j >= J:
                raise InputError(f"history of {a} older than the age grid")
            mass[ia, j] += w * cum[ia, j]
    steps = grid.n - 1
    if store_every is None:
        store_every = max(1, steps // 200)
    n_snap = steps // store_every + 1 if store_every > 0 else 0
    snaps = np.zeros((max(n_snap, 1), k, J))
    content, born, left = impl.spe_run(np.ascontiguousarray(mass), np.ascontiguousarray(surv),
                                       np.ascontiguousarray(route), steps, store_every, snaps)
    if (snaps < -1e-14).any():
        raise NumericalError("negative age density")
    f = {a: snaps[:n_snap, ia] / dt for ia, a in enumerate(labels)}
    N = {a: content[:, ia] for ia, a in enumerate(labels)}
    B = {a: born[:, ia] / dt for ia, a in enumerate(labels)}
    D = {a: left[:, ia] / dt for ia, a in enumerate(labels)}
    times = np.arange(n_snap) * store_every * dt
    return AgeDensity(grid, np.arange(J) * dt, times, f, N, B, D, rates)


def history_forcing(scalar, history, grid):
    """Forcing ``B0``, ``D0`` and content ``N0`` generated by a history measure.

    ``B0_alpha(t) = sum_beta int Phi_{beta alpha}(t - x) m_beta(dx)`` and
    ``D0_alpha(t) = int k_alpha(t - x) m_alpha(dx)``.
    """
    dt = grid.dt
    n = grid.n
    B0 = {a: np.zeros(n) for a in scalar.labels}
    D0 = {a: np.zeros(n) for a in scalar.labels}
    N0 = {a: 0.0 for a in scalar.labels}
    for b in scalar.labels:
        cells = history.cells(b, dt)
        if not cells:
            continue
        surv = 1.0 - cumulative_trapezoid(scalar.k[b], dx=dt, initial=0.0)
        for j, w in cells:
            if j + n > scalar.grid.n:
                raise InputError(f"kernels sampled up to {scalar.grid.t_max}, history needs {(j + n - 1) * dt}")
            D0[b] += w * scalar.k[b][j:j + n]
            N0[b] += w * surv[j]
            for a in scalar.labels:
                if a != b:
                    B0[a] += w * scalar.Phi[b, a][j:j + n]
    return B0, D0, N0


@dataclass(frozen=True)
class SpeReport:
    deviation: dict
    tol: float
    spe: AgeDensity = field(repr=False)
    rfe: object = field(repr=False)

    @property
    def max_deviation(self):
        return max(self.deviation.values())

    @property
    def passed(self):
        return self.max_deviation <= self.tol


def spe_rfe_equivalence(scalar, history, t_max, tol=None):
    """Solve both formulations from the same history and compare contents.

    ``scalar`` must be sampled up to at least ``t_max`` plus the history span.
    The default tolerance is ``5 dt``.
    """
    dt = scalar.grid.dt
    grid = TimeGrid(t_max, dt)
    if tol is None:
        tol = 5.0 * dt
    rates = rates_from_kernels(scalar)
    spe = solve_spe(rates, history, t_max)
    n = grid.n
    B0, D0, N0 = history_forcing(scalar, history, grid)
    short = ScalarKernelSet.from_kernels(
        grid, {key: v[:n] for key, v in scalar.Phi.items()}, B0, D0, N0, labels=scalar.labels)
    rfe = solve_renewal_scalar(short)
    dev = {a: float(np.abs(spe.N[a] - rfe.N[a]).max()) for a in scalar.labels}
    return SpeReport(dev, float(tol), spe, rfe)


@dataclass(frozen=True)
class HistoryVerdict:
    compatible: bool
    residual: float
    predicted: dict = field(repr=False)


def forward_history_check(network, system, n0, history, tol=1e-9):
    """Check ``n0_beta = sum_atoms exp(-x A_{beta beta}) m`` for vector-valued atoms.

    ``history`` maps each compartment to a list of ``(location, mass vector)``
    with ``location <= 0``; missing compartments have no history.
    """
    from .kernels import initial_vector
    from .network import decompose

    if not hasattr(system, "compartments"):
        system = decompose(network, system)
    v = initial_vector(network, n0)
    pred, worst = {}, 0.0
    for c in system.compartments:
        p = np.zeros(c.size)
        for loc, m in history.get(c.label, []):
            if loc > 0:
                raise InputError(f"history atom of {c.label} at positive location {loc}")
            m = np.asarray(m, dtype=float)
            if m.shape != (c.size,):
                raise InputError(f"history atom of {c.label} needs a vector of length {c.size}")
            p += expm(system.block(c.label, c.label), -loc) @ m
        pred[c.label] = p
        worst = max(worst, float(np.abs(p - v[c.index]).max()))
    return HistoryVerdict(worst <= tol, worst, pred)
