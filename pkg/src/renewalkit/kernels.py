"""Response kernels and forcing terms of a compartment decomposition.

For compartments ``alpha`` and ``beta`` the inflow kernel

    G[beta->alpha](t) = A_{alpha beta} exp(t A_{beta beta})

maps the flux entering ``beta`` to the flux it later sends into ``alpha``, and
the outflow kernel

    K[alpha](t) = C_alpha exp(t A_{alpha alpha})

gives the flux leaving ``alpha`` per state.  All kernels are stored as samples
on a uniform grid.  When every compartment has at most one entrance point the
matrix kernels collapse to scalar transit-time densities ``Phi[alpha->beta]``.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from ._config import max_threads
from .errors import EntranceError, GridError, InputError
from .matfun import expm_column_sequence, expm_sequence
from .network import check_one_entrance

__all__ = [
    "TimeGrid",
    "KernelSet",
    "ScalarKernelSet",
    "MassEntry",
    "compute_kernels",
    "compute_forcing",
    "reduce_one_entrance",
    "compute_scalar_kernels",
    "kernel_mass_report",
    "suggest_t_max",
    "initial_vector",
]

_NEG_NOISE = 1e-13


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0, dt, ..., t_max``."""

    t_max: float
    dt: float

    def __post_init__(self):
        t_max, dt = float(self.t_max), float(self.dt)
        if not (dt > 0 and np.isfinite(dt)):
            raise GridError(f"dt must be positive, got {dt}")
        if not (t_max > 0 and np.isfinite(t_max)):
            raise GridError(f"t_max must be positive, got {t_max}")
        steps = round(t_max / dt)
        if steps < 1 or abs(steps * dt - t_max) > 1e-9 * max(t_max, 1.0):
            raise GridError(f"dt={dt} does not divide t_max={t_max}")
        object.__setattr__(self, "t_max", t_max)
        object.__setattr__(self, "dt", dt)

    @property
    def n(self):
        return round(self.t_max / self.dt) + 1

    @property
    def nodes(self):
        return np.arange(self.n) * self.dt

    def refine(self, factor=2):
        return TimeGrid(self.t_max, self.dt / factor)

    def extend(self, t_max):
        return TimeGrid(t_max, self.dt)


def _clean(arr, scale):
    """Zero out rounding-level negatives; larger negatives are left visible."""
    tiny = (arr < 0) & (arr > -_NEG_NOISE * max(scale, 1e-300))
    arr[tiny] = 0.0
    return arr


@dataclass(frozen=True)
class KernelSet:
    """Sampled matrix kernels and forcing of a compartment system.

    ``G`` maps ``(beta, alpha)`` to an array of shape ``(n, |alpha|, |beta|)``;
    pairs without any edge from ``beta`` into ``alpha`` are omitted (their
    kernel vanishes).  ``K`` maps ``alpha`` to ``(n, |alpha|, |alpha|)``;
    ``S0`` and ``J0`` map ``alpha`` to ``(n, |alpha|)``.
    """

    grid: TimeGrid
    system: object = field(repr=False)
    G: dict = field(repr=False)
    K: dict = field(repr=False)
    S0: dict = field(default=None, repr=False)
    J0: dict = field(default=None, repr=False)

    def __post_init__(self):
        n = self.grid.n
        if self.S0 is None:
            object.__setattr__(self, "S0", {c.label: np.zeros((n, c.size)) for c in self.system.compartments})
        if self.J0 is None:
            object.__setattr__(self, "J0", {c.label: np.zeros((n, c.size)) for c in self.system.compartments})

    @property
    def labels(self):
        return self.system.labels

    def inflow(self, beta, alpha):
        """G[beta->alpha], zeros if the pair is not connected."""
        if (beta, alpha) in self.G:
            return self.G[beta, alpha]
        return np.zeros((self.grid.n, self.system[alpha].size, self.system[beta].size))

    def with_forcing(self, S0, J0):
        return KernelSet(self.grid, self.system, self.G, self.K, dict(S0), dict(J0))

    def conservation_defect(self):
        """Largest per-node violation of sum_beta e^T G[alpha->beta] = e^T K[alpha]."""
        worst = 0.0
        for a in self.labels:
            out = self.K[a].sum(axis=1).copy()
            for b in self.labels:
                if (a, b) in self.G:
                    out -= self.G[a, b].sum(axis=1)
            if out.size:
                worst = max(worst, float(np.abs(out).max()))
        return worst


@dataclass(frozen=True)
class ScalarKernelSet:
    """Scalar kernels of a one-entrance decomposition.

    Attributes
    ----------
    Phi : dict
        ``(alpha, beta) -> (n,)`` transit density from ``alpha`` into ``beta``.
        Every ordered pair of distinct labels is present.
    k : dict
        ``alpha -> (n,)`` total exit density, equal to ``sum_beta Phi``.
    B0, D0 : dict
        ``alpha -> (n,)`` inflow and outflow forcing from the initial state.
    masses : dict
        ``(alpha, beta) -> float`` trapezoid integral of ``Phi``.
    N0 : dict
        ``alpha -> float`` initial content of each compartment.
    entrances : dict
        ``alpha -> state`` (or ``None``) used as the reference state.
    leaky : dict
        ``alpha -> bool``: some state reachable from the entrance cannot leave.
    """

    grid: TimeGrid
    labels: tuple
    Phi: dict = field(repr=False)
    k: dict = field(repr=False)
    B0: dict = field(repr=False)
    D0: dict = field(repr=False)
    masses: dict = field(repr=False)
    N0: dict = field(default=None, repr=False)
    entrances: dict = field(default=None, repr=False)
    leaky: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.N0 is None:
            object.__setattr__(self, "N0", {a: 0.0 for a in self.labels})
        if self.entrances is None:
            object.__setattr__(self, "entrances", {a: None for a in self.labels})
        if self.leaky is None:
            object.__setattr__(self, "leaky", {a: False for a in self.labels})

    @classmethod
    def from_kernels(cls, grid, Phi, B0=None, D0=None, N0=None, labels=None):
        """Build a set from transit densities alone; ``k`` is their row sum."""
        if labels is None:
            labels = []
            for a, b in Phi:
                for x in (a, b):
                    if x not in labels:
                        labels.append(x)
        labels = tuple(labels)
        n = grid.n
        full = {}
        for a in labels:
            for b in labels:
                if a != b:
                    arr = np.asarray(Phi.get((a, b), np.zeros(n)), dtype=float)
                    if arr.shape != (n,):
                        raise InputError(f"Phi[{a}->{b}] has shape {arr.shape}, grid needs ({n},)")
                    full[a, b] = arr
        k = {a: sum((full[a, b] for b in labels if b != a), np.zeros(n)) for a in labels}
        B0 = {a: np.asarray((B0 or {}).get(a, np.zeros(n)), dtype=float) for a in labels}
        D0 = {a: np.asarray((D0 or {}).get(a, np.zeros(n)), dtype=float) for a in labels}
        masses = {key: float(trapezoid(v, dx=grid.dt)) for key, v in full.items()}
        N0 = {a: float((N0 or {}).get(a, 0.0)) for a in labels}
        return cls(grid, labels, full, k, B0, D0, masses, N0)

    def with_forcing(self, B0=None, D0=None, N0=None):
        n = self.grid.n
        B0 = {a: np.asarray((B0 or {}).get(a, np.zeros(n)), dtype=float) for a in self.labels}
        D0 = {a: np.asarray((D0 or {}).get(a, np.zeros(n)), dtype=float) for a in self.labels}
        N0 = {a: float((N0 or {}).get(a, 0.0)) for a in self.labels}
        return ScalarKernelSet(self.grid, self.labels, self.Phi, self.k, B0, D0,
                               self.masses, N0, self.entrances, self.leaky)

    def total_mass(self, alpha):
        return sum(self.masses[alpha, b] for b in self.labels if b != alpha)


def initial_vector(network, n0):
    """Initial state as an array in network order; accepts arrays or dicts."""
    if n0 is None:
        return np.zeros(network.size)
    if isinstance(n0, dict):
        v = np.zeros(network.size)
        for s, x in n0.items():
            s = str(s)
            if s not in network.states:
                raise InputError(f"initial condition names unknown state {s!r}")
            v[network.index(s)] = float(x)
    else:
        v = np.array(n0, dtype=float).reshape(-1)
        if v.size != network.size:
            raise InputError(f"initial vector has {v.size} entries, network has {network.size} states")
    if not np.isfinite(v).all():
        raise InputError("initial condition has non-finite entries")
    if (v < 0).any():
        s = network.states[int(np.argmin(v))]
        raise InputError(f"negative initial amount {v.min()} in state {s!r}")
    return v


def _map(fn, items):
    items = list(items)
    workers = min(max_threads(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def compute_kernels(system, grid):
    """Sample the inflow and outflow kernels of every compartment on ``grid``."""
    n, dt = grid.n, grid.dt
    labels = system.labels
    A = system.network.A
    scale = float(np.abs(A).max()) if A.size else 1.0

    def one(beta):
        P = expm_sequence(system.block(beta, beta), dt, n)
        _clean(P, 1.0)
        out = {}
        for alpha in labels:
            if alpha == beta:
                continue
            blk = system.block(alpha, beta)
            if not (blk > 0).any():
                continue
            out[beta, alpha] = _clean(np.matmul(blk, P), scale)
        exit_rates = np.diag(system.exit_rates(beta))
        K = _clean(exit_rates[None, :, None] * P, scale)
        return out, K

    results = _map(one, labels)
    G, K = {}, {}
    for beta, (g, k) in zip(labels, results):
        G.update(g)
        K[beta] = k
    for arr in list(G.values()) + list(K.values()):
        arr.setflags(write=False)
    return KernelSet(grid, system, G, K)


def compute_forcing(system, grid, n0, kernels=None):
    """Forcing ``S0`` (inflow) and ``J0`` (outflow) generated by ``n0``.

    Parameters
    ----------
    n0 : array_like or dict
        Initial amounts indexed by network state.
    kernels : KernelSet, optional
        Reused if given; otherwise only the needed columns are propagated.

    Returns
    -------
    (dict, dict)
        ``S0[alpha]`` and ``J0[alpha]``, each of shape ``(n, |alpha|)``.
    """
    v = initial_vector(system.network, n0)
    n = grid.n
    S0 = {c.label: np.zeros((n, c.size)) for c in system.compartments}
    J0 = {c.label: np.zeros((n, c.size)) for c in system.compartments}
    for beta in system.compartments:
        nb = v[beta.index]
        if not nb.any():
            continue
        if kernels is not None:
            J0[beta.label] = kernels.K[beta.label] @ nb
            for alpha in system.labels:
                if (beta.label, alpha) in kernels.G:
                    S0[alpha] += kernels.G[beta.label, alpha] @ nb
            continue
        u = expm_column_sequence(system.block(beta.label, beta.label), nb, grid.dt, n)
        _clean(u, nb.max())
        J0[beta.label] = np.diag(system.exit_rates(beta.label))[None, :] * u
        for alpha in system.labels:
            if alpha != beta.label:
                blk = system.block(alpha, beta.label)
                if (blk > 0).any():
                    S0[alpha] += u @ blk.T
    for d in (S0, J0):
        for a in d:
            _clean(d[a], max(v.max(), 1e-300))
    return S0, J0


def _roots(system, roots=None):
    verdicts = check_one_entrance(system)
    bad = {a: v.states for a, v in verdicts.items() if v.kind == "multiple"}
    if bad:
        desc = "; ".join(f"{a}: {list(s)}" for a, s in bad.items())
        raise EntranceError(f"multiple entrance points ({desc}); scalar reduction needs at most one per compartment")
    out = {}
    for c in system.compartments:
        v = verdicts[c.label]
        if v.kind == "unique":
            out[c.label] = v.states[0]
        elif roots and c.label in roots:
            out[c.label] = str(roots[c.label])
        else:
            # no inflow from outside: the reference state only labels kernels
            # that never receive flux
            out[c.label] = c.states[0]
    return out, verdicts


def _leaky(system, alpha, root):
    """True if some state reachable from ``root`` inside ``alpha`` cannot exit."""
    E = system.internal(alpha)
    exits = np.diag(system.exit_rates(alpha)) > 0
    adj = (E.T > 0)  # adj[u, v]: edge u -> v
    np.fill_diagonal(adj, False)
    m = adj.shape[0]
    start = system.local_index(alpha, root)
    reach = np.zeros(m, dtype=bool)
    reach[start] = True
    stack = [start]
    while stack:
        u = stack.pop()
        for w in np.nonzero(adj[u])[0]:
            if not reach[w]:
                reach[w] = True
                stack.append(w)
    can_exit = exits.copy()
    changed = True
    while changed:
        new = can_exit | (adj & can_exit[None, :]).any(axis=1)
        changed = bool((new != can_exit).any())
        can_exit = new
    return bool((reach & ~can_exit).any())


def _masses(Phi, dt):
    return {key: float(trapezoid(v, dx=dt)) for key, v in Phi.items()}


def reduce_one_entrance(kernels, system=None, roots=None):
    """Scalar kernels from a :class:`KernelSet` of a one-entrance system.

    ``Phi[beta->alpha]`` is the ``(i_alpha, i_beta)`` entry of
    ``G[beta->alpha]`` and ``k[alpha]`` is the column sum of ``K[alpha]`` at
    the entrance.  Compartments without an entrance point use ``roots[alpha]``
    (default: their first state) as reference.

    Raises
    ------
    EntranceError
        If a compartment has several entrance points.
    """
    system = kernels.system if system is None else system
    root, _ = _roots(system, roots)
    n = kernels.grid.n
    labels = system.labels
    idx = {a: system.local_index(a, root[a]) for a in labels}
    Phi = {}
    for a in labels:
        for b in labels:
            if a == b:
                continue
            if (a, b) in kernels.G:
                Phi[a, b] = np.ascontiguousarray(kernels.G[a, b][:, idx[b], idx[a]])
            else:
                Phi[a, b] = np.zeros(n)
    k = {a: kernels.K[a][:, :, idx[a]].sum(axis=1) for a in labels}
    B0 = {a: np.ascontiguousarray(kernels.S0[a][:, idx[a]]) for a in labels}
    D0 = {a: kernels.J0[a].sum(axis=1) for a in labels}
    leaky = {a: _leaky(system, a, root[a]) for a in labels}
    return ScalarKernelSet(kernels.grid, labels, Phi, k, B0, D0,
                           _masses(Phi, kernels.grid.dt), None, root, leaky)


def _column_sequence(M, v, grid, dense_limit=300):
    """``exp(t M) v`` on the grid; large sparse blocks use Krylov-free expm_multiply."""
    if M.shape[0] <= dense_limit:
        return expm_column_sequence(M, v, grid.dt, grid.n)
    from scipy.sparse import csc_matrix
    from scipy.sparse.linalg import expm_multiply

    return expm_multiply(csc_matrix(M), v, start=0.0, stop=grid.t_max,
                         num=grid.n, endpoint=True)


def compute_scalar_kernels(system, grid, n0=None, roots=None):
    """Scalar kernels computed directly from entrance columns.

    Equivalent to ``reduce_one_entrance(compute_kernels(...))`` but only
    propagates one vector per compartment, so it scales to compartments with
    many internal states.
    """
    root, _ = _roots(system, roots)
    labels = system.labels
    n = grid.n
    v = initial_vector(system.network, n0)
    Phi, k, B0, D0, N0 = {}, {}, {}, {}, {}
    for c in system.compartments:
        a = c.label
        e = np.zeros(c.size)
        e[system.local_index(a, root[a])] = 1.0
        u = _clean(_column_sequence(system.block(a, a), e, grid), 1.0)
        exit_rates = np.diag(system.exit_rates(a))
        k[a] = u @ exit_rates
        for b in labels:
            if b == a:
                continue
            row = system.block(b, a)[system.local_index(b, root[b])]
            Phi[a, b] = u @ row if row.any() else np.zeros(n)
        B0[a] = np.zeros(n)
        D0[a] = np.zeros(n)
        N0[a] = float(v[c.index].sum())
    for c in system.compartments:
        nb = v[c.index]
        if not nb.any():
            continue
        u = _clean(_column_sequence(system.block(c.label, c.label), nb, grid), nb.max())
        D0[c.label] = u @ np.diag(system.exit_rates(c.label))
        for a in labels:
            if a != c.label:
                row = system.block(a, c.label)[system.local_index(a, root[a])]
                if row.any():
                    B0[a] = B0[a] + u @ row
    leaky = {a: _leaky(system, a, root[a]) for a in labels}
    return ScalarKernelSet(grid, labels, Phi, k, B0, D0, _masses(Phi, grid.dt),
                           N0, root, leaky)


@dataclass(frozen=True)
class MassEntry:
    total: float
    status: str  # conservative, sink, truncated or leaky
    deficit: float


def kernel_mass_report(scalar, tol=1e-6):
    """Total exit mass per compartment, classified.

    ``conservative`` means the masses sum to one within ``tol``; ``sink`` means
    they vanish; otherwise the deficit is attributed to an internal trap
    (``leaky``) or to the finite horizon (``truncated``).
    """
    out = {}
    for a in scalar.labels:
        tot = scalar.total_mass(a)
        if abs(tot) <= tol:
            status = "sink"
        elif abs(tot - 1.0) <= tol:
            status = "conservative"
        elif scalar.leaky.get(a, False):
            status = "leaky"
        else:
            status = "truncated"
        out[a] = MassEntry(tot, status, 1.0 - tot)
    return out


def suggest_t_max(system, floor=1e-8):
    """Horizon after which every compartment's slowest mode is below ``floor``.

    Returns
    -------
    (float or None, dict)
        The overall suggestion (``None`` if no compartment decays) and the
        per-compartment value (``None`` for compartments with a zero mode).
    """
    per = {}
    for c in system.compartments:
        ev = np.linalg.eigvals(system.block(c.label, c.label))
        lam = float(ev.real.max())
        scale = max(1.0, float(np.abs(ev).max()))
        per[c.label] = None if lam > -1e-12 * scale else float(np.log(floor) / lam)
    vals = [t for t in per.values() if t is not None]
    return (max(vals) if vals else None), per


def cumulative_mass(samples, dt):
    """Running trapezoid integral starting from zero."""
    return cumulative_trapezoid(samples, dx=dt, initial=0.0)
