"""Erlang-mixture approximation of transit densities and their network realization.

A probability measure on ``[0, inf)`` is approximated by

    f(t) = sum_j q_j gamma_{R, m_j}(t),   gamma_{R, m}(t) = R^{m+1} t^m exp(-R t) / m!

with a common rate ``R = M / s``: the time axis is cut into cells of width
``s / M`` (``s`` a high quantile of the target), cell ``j`` gets the target
mass ``q_j`` and the shape ``m_j = j``.  Doubling ``M`` until the
bounded-Lipschitz distance to the target is below ``eps`` gives the fit.

A fitted mixture is realized by a chain network: from the compartment root
the process jumps with rate ``R p`` to a branching state ``zeta``, chooses
branch ``j`` with rate ``R q_j`` and runs through ``m_j - 1`` intermediate
states at rate ``R`` before entering the root of the target compartment.
Every path has ``m_j + 1`` exponential stages, hence the Gamma shape above.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import linprog
from scipy.sparse.linalg import spsolve
from scipy.special import gammainc, gammaln

from .errors import ConvergenceError, InputError
from .kernels import TimeGrid, compute_scalar_kernels
from .network import decompose, validate_network

__all__ = [
    "TargetMeasure",
    "PhaseTypeModel",
    "FitResult",
    "gamma_density",
    "bounded_lipschitz",
    "fit_erlang_mixture",
    "fit_compartment",
    "build_network",
    "verify_approximation",
]


def gamma_density(rate, m, t):
    """``rate^(m+1) t^m exp(-rate t) / m!`` evaluated in log space."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp((m + 1) * np.log(rate) + m * np.log(t[pos]) - rate * t[pos] - gammaln(m + 1))
    if m == 0:
        out[~pos] = rate
    return out


class TargetMeasure:
    """Finite measure on ``[0, inf)`` built from simple components.

    Components: point masses, uniform pieces ``(a, b, mass)``, a sampled
    density on ``0, dt, 2dt, ...`` (linear between samples), and Erlang
    mixtures ``(rate, [(q, m), ...], mass)``.
    """

    def __init__(self, atoms=(), uniform=(), density=None, dt=None, erlang=()):
        self.atoms = [(float(t), float(w)) for t, w in atoms]
        self.uniform = [(float(a), float(b), float(w)) for a, b, w in uniform]
        self.erlang = [(float(r), [(float(q), int(m)) for q, m in br], float(w)) for r, br, w in erlang]
        for t, w in self.atoms:
            if t < 0 or w < 0:
                raise InputError(f"atom ({t}, {w}) must have nonnegative location and mass")
        for a, b, w in self.uniform:
            if not (0 <= a < b) or w < 0:
                raise InputError(f"uniform piece ({a}, {b}, {w}) is invalid")
        self.density = None
        self._cum = None
        if density is not None:
            d = np.asarray(density, dtype=float)
            if dt is None or dt <= 0:
                raise InputError("sampled density needs a positive dt")
            if (d < 0).any() or not np.isfinite(d).all():
                raise InputError("sampled density must be finite and nonnegative")
            self.density = d
            self.dt = float(dt)
            self._cum = cumulative_trapezoid(d, dx=self.dt, initial=0.0)

    # constructors -------------------------------------------------------
    @classmethod
    def point(cls, t, mass=1.0):
        return cls(atoms=[(t, mass)])

    @classmethod
    def uniform_on(cls, a, b, mass=1.0):
        return cls(uniform=[(a, b, mass)])

    @classmethod
    def from_samples(cls, samples, dt):
        return cls(density=samples, dt=dt)

    @classmethod
    def from_erlang(cls, rate, branches, mass=1.0):
        return cls(erlang=[(rate, branches, mass)])

    # queries ------------------------------------------------------------
    @property
    def mass(self):
        tot = sum(w for _, w in self.atoms) + sum(w for *_, w in self.uniform)
        tot += sum(w for *_, w in self.erlang)
        if self.density is not None:
            tot += self._cum[-1]
        return float(tot)

    def cdf(self, x):
        """Mass of ``[0, x]``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for t, w in self.atoms:
            out += w * (x >= t)
        for a, b, w in self.uniform:
            out += w * np.clip((x - a) / (b - a), 0.0, 1.0)
        for rate, br, w in self.erlang:
            for q, m in br:
                out += w * q * gammainc(m + 1, np.maximum(x, 0.0) * rate)
        if self.density is not None:
            grid = np.arange(self.density.size) * self.dt
            out += np.interp(x, grid, self._cum, left=0.0, right=self._cum[-1])
            # linear interpolation of the cumulative integral is exact only at nodes;
            # the error is below dt * max density
        return out

    def support_end(self):
        ends = [t for t, _ in self.atoms] + [b for _, b, _ in self.uniform]
        if self.density is not None:
            nz = np.nonzero(self.density > 0)[0]
            if nz.size:
                ends.append((nz[-1] + 1) * self.dt)
        for rate, br, _ in self.erlang:
            mmax = max(m for _, m in br)
            ends.append((mmax + 1 + 12 * np.sqrt(mmax + 1) + 40) / rate)
        return float(max(ends)) if ends else 0.0

    def quantile(self, p):
        """Smallest ``x`` with ``cdf(x) >= p * mass`` (bisection)."""
        target = p * self.mass
        lo, hi = 0.0, max(self.support_end(), 1e-12)
        if self.cdf(np.array([0.0]))[0] >= target:
            return 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.cdf(np.array([mid]))[0] >= target:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-13 * max(1.0, hi):
                break
        return hi

    def normalized(self):
        p = self.mass
        if p <= 0:
            raise InputError("target measure has zero mass")
        return TargetMeasure(
            atoms=[(t, w / p) for t, w in self.atoms],
            uniform=[(a, b, w / p) for a, b, w in self.uniform],
            density=None if self.density is None else self.density / p,
            dt=getattr(self, "dt", None),
            erlang=[(r, br, w / p) for r, br, w in self.erlang],
        )


def bounded_lipschitz(mu, nu, n_cells=3000, x_max=None):
    """Bounded-Lipschitz distance ``sup{int phi d(mu - nu): |phi|_inf + Lip(phi) <= 1}``.

    Both measures are lumped onto ``n_cells + 1`` nodes of ``[0, x_max]``
    (lumping moves mass by at most half a cell, so the value is accurate to
    about ``x_max / n_cells``) and the dual problem is solved as a linear
    program.
    """
    if x_max is None:
        x_max = max(mu.support_end(), nu.support_end()) * 1.05 + 1e-9
    h = x_max / n_cells
    nodes = np.arange(n_cells + 1) * h
    edges = np.concatenate([[-1.0], nodes[:-1] + 0.5 * h, [np.inf]])

    def lump(meas):
        c = meas.cdf(edges[1:-1])
        c = np.concatenate([[0.0], c, [meas.mass]])
        return np.diff(c)

    d = lump(mu) - lump(nu)
    K = d.size
    # variables: phi_0..phi_{K-1}, a (sup bound), L (Lipschitz bound)
    cost = np.concatenate([-d, [0.0, 0.0]])
    I = sparse.identity(K, format="csr")
    ones = np.ones((K, 1))
    diff = sparse.diags([-np.ones(K - 1), np.ones(K - 1)], [0, 1], shape=(K - 1, K), format="csr")
    hcol = np.full((K - 1, 1), -h)
    zK = np.zeros((K, 1))
    zD = np.zeros((K - 1, 1))
    A_ub = sparse.vstack([
        sparse.hstack([I, -ones, zK]),
        sparse.hstack([-I, -ones, zK]),
        sparse.hstack([diff, zD, hcol]),
        sparse.hstack([-diff, zD, hcol]),
        sparse.csr_matrix(np.concatenate([np.zeros(K), [1.0, 1.0]])[None, :]),
    ], format="csr")
    b_ub = np.concatenate([np.zeros(4 * K - 2), [1.0]])
    bounds = [(None, None)] * K + [(0, None), (0, None)]
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise ConvergenceError(f"bounded-Lipschitz linear program failed: {res.message}")
    return float(max(0.0, -res.fun))


@dataclass(frozen=True)
class PhaseTypeModel:
    """Erlang mixture shared by the listed compartment pairs.

    ``M`` cells of width ``scale / M`` give the common rate ``M / scale``;
    ``branches`` holds ``(q, m)`` with ``sum q = 1``; ``pairs`` holds
    ``(alpha, beta, p)``.
    """

    M: int
    scale: float
    branches: tuple
    pairs: tuple = ()

    def __post_init__(self):
        if self.M < 1:
            raise InputError("M must be a positive integer")
        qs = [q for q, _ in self.branches]
        if any(q <= 0 for q in qs) or any(m < 1 for _, m in self.branches):
            raise InputError("branches need q > 0 and m >= 1")
        if abs(sum(qs) - 1.0) > 1e-12:
            raise InputError(f"branch probabilities sum to {sum(qs)!r}, not 1")

    @property
    def rate(self):
        return self.M / self.scale

    @property
    def L(self):
        return len(self.branches)

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return sum(q * gamma_density(self.rate, m, t) for q, m in self.branches)

    def measure(self, mass=1.0):
        return TargetMeasure.from_erlang(self.rate, self.branches, mass)

    def with_pairs(self, pairs):
        return PhaseTypeModel(self.M, self.scale, self.branches, tuple(pairs))

    def to_dict(self):
        return {
            "M": int(self.M),
            "scale": float(self.scale),
            "branches": [{"q": float(q), "m": int(m)} for q, m in self.branches],
            "pairs": [{"alpha": a, "beta": b, "p": float(p)} for a, b, p in self.pairs],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            branches = tuple((float(b["q"]), int(b["m"])) for b in d["branches"])
            pairs = tuple((str(p["alpha"]), str(p["beta"]), float(p["p"])) for p in d.get("pairs", []))
            return cls(int(d["M"]), float(d.get("scale", 1.0)), branches, pairs)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed phase-type model: {exc}") from None


@dataclass(frozen=True)
class FitResult:
    model: PhaseTypeModel
    distance: float
    history: tuple = field(default=(), repr=False)  # (M, distance) per attempt


def _cells(target, M, scale, cutoff=1e-12):
    """Branches of the cell construction for a normalized target."""
    width = scale / M
    end = target.support_end()
    J = max(1, int(np.ceil(end / width - 1e-12)))
    edges = np.arange(J + 1) * width
    c = target.cdf(edges)
    q = np.diff(c)
    q[0] += c[0]  # mass at the origin goes to the first cell
    q[-1] += target.mass - c[-1]  # anything beyond the last edge
    js = np.arange(1, J + 1)
    keep = q >= cutoff
    q, js = q[keep], js[keep]
    q = q / q.sum()
    return tuple((float(a), int(b)) for a, b in zip(q, js))


def _exact_erlang(target):
    if target.atoms or target.uniform or target.density is not None or len(target.erlang) != 1:
        return None
    rate, br, w = target.erlang[0]
    return rate, br


def fit_erlang_mixture(target, eps=0.05, M_start=8, M_cap=4096, quantile=0.999, scale=None):
    """Fit a normalized Erlang mixture to ``target`` within distance ``eps``.

    Raises
    ------
    ConvergenceError
        If ``M`` reaches ``M_cap`` without meeting ``eps``; the message
        carries the achieved distance.
    """
    norm = target.normalized()
    exact = _exact_erlang(norm)
    if exact is not None:
        rate, br = exact
        M = max(1, int(round(rate)))
        model = PhaseTypeModel(M, M / rate, tuple(br))
        return FitResult(model, 0.0, ((M, 0.0),))
    if scale is None:
        scale = norm.quantile(quantile)
        if scale <= 0:
            scale = max(norm.support_end(), 1.0)
    hist = []
    M = int(M_start)
    while True:
        model = PhaseTypeModel(M, float(scale), _cells(norm, M, scale))
        dist = bounded_lipschitz(model.measure(), norm)
        hist.append((M, dist))
        if dist <= eps:
            return FitResult(model, dist, tuple(hist))
        if M * 2 > M_cap:
            raise ConvergenceError(
                f"eps = {eps} not reached with M <= {M_cap}: achieved distance {dist:.4g} at M = {M}")
        M *= 2


def fit_compartment(alpha, targets, eps=0.05, M_start=8, M_cap=4096, quantile=0.999):
    """Fit all transit densities leaving ``alpha`` with one common rate.

    ``targets`` maps ``beta`` to a :class:`TargetMeasure` whose mass is the
    branching probability ``p_{alpha beta}``.  Returns a list of models
    (one per target) sharing ``M`` and ``scale``.
    """
    targets = {b: t for b, t in targets.items() if t.mass > 0}
    if not targets:
        return []
    norms = {b: t.normalized() for b, t in targets.items()}
    scale = max(n.quantile(quantile) for n in norms.values())
    if scale <= 0:
        scale = 1.0
    M = int(M_start)
    while True:
        models, worst = [], 0.0
        for b, n in norms.items():
            br = _cells(n, M, scale)
            model = PhaseTypeModel(M, float(scale), br, ((alpha, b, targets[b].mass),))
            worst = max(worst, bounded_lipschitz(model.measure(), n))
            models.append(model)
        if worst <= eps:
            return models
        if M * 2 > M_cap:
            raise ConvergenceError(
                f"eps = {eps} not reached for {alpha} with M <= {M_cap}: achieved {worst:.4g}")
        M *= 2


def build_network(models, compartments=(), layout="auto", branched_limit=256):
    """Realize phase-type models as a reaction network.

    Parameters
    ----------
    models : iterable of PhaseTypeModel
    compartments : iterable of str
        Extra compartment labels without outgoing models.
    layout : {"auto", "branched", "shared"}
        ``branched`` builds one chain per branch; ``shared`` lets all
        branches of a pair enter one common chain at different positions
        (same kernel, far fewer states).  ``auto`` picks ``branched`` when a
        pair needs at most ``branched_limit`` chain states.

    Returns
    -------
    (ReactionNetwork, dict)
        The network and its partition ``label -> states``.
    """
    models = list(models)
    labels = list(dict.fromkeys(str(c) for c in compartments))
    for mdl in models:
        for a, b, _ in mdl.pairs:
            for x in (a, b):
                if x not in labels:
                    labels.append(x)
    out_rate, total_p, seen = {}, {}, set()
    for mdl in models:
        for a, b, p in mdl.pairs:
            if a == b:
                raise InputError(f"pair ({a}, {b}) maps a compartment to itself")
            if (a, b) in seen:
                raise InputError(f"pair ({a}, {b}) appears in more than one model")
            seen.add((a, b))
            if p < 0:
                raise InputError(f"negative branching probability for ({a}, {b})")
            if p == 0:
                continue
            r = out_rate.setdefault(a, mdl.rate)
            if abs(r - mdl.rate) > 1e-12 * r:
                raise InputError(f"models leaving {a} use different rates ({r} and {mdl.rate})")
            total_p[a] = total_p.get(a, 0.0) + p
    for a, tp in total_p.items():
        if tp > 1.0 + 1e-12:
            raise InputError(f"branching probabilities leaving {a} sum to {tp} > 1")
    states = list(labels)
    part = {a: [a] for a in labels}
    rates = []

    def add_state(owner, name):
        if name in part[owner] or name in states:
            raise InputError(f"state name collision: {name!r}")
        states.append(name)
        part[owner].append(name)

    for mdl in models:
        R = mdl.rate
        for a, b, p in mdl.pairs:
            if p == 0:
                continue
            z = f"{a}>{b}:z"
            add_state(a, z)
            rates.append((a, z, R * p))
            chain_states = sum(m - 1 for _, m in mdl.branches)
            use_branched = layout == "branched" or (layout == "auto" and chain_states <= branched_limit)
            if layout not in ("auto", "branched", "shared"):
                raise InputError(f"unknown layout {layout!r}")
            if use_branched:
                for idx, (q, m) in enumerate(mdl.branches, start=1):
                    prev = z
                    for step in range(1, m):
                        x = f"{a}>{b}:x{step}.{idx}"
                        add_state(a, x)
                        rates.append((prev, x, R * q if prev == z else R))
                        prev = x
                    rates.append((prev, b, R * q if prev == z else R))
            else:
                K = max(m for _, m in mdl.branches) - 1
                chain = [f"{a}>{b}:y{k}" for k in range(1, K + 1)]
                for y in chain:
                    add_state(a, y)
                for y0, y1 in zip(chain, chain[1:]):
                    rates.append((y0, y1, R))
                if chain:
                    rates.append((chain[-1], b, R))
                for q, m in mdl.branches:
                    # entering at position K + 2 - m leaves m hops to the target root
                    pos = K + 2 - m
                    dest = b if pos > K else chain[pos - 1]
                    rates.append((z, dest, R * q))
    for a, tp in total_p.items():
        if tp < 1.0 - 1e-12:
            sink = f"{a}:sink"
            add_state(a, sink)
            rates.append((a, sink, out_rate[a] * (1.0 - tp)))
    net = validate_network(states, rates)
    return net, part


def _exact_masses(system, root):
    """Infinite-horizon masses ``(A_{beta alpha} (-A_{alpha alpha})^{-1} e_root)`` per pair."""
    out = {}
    for c in system.compartments:
        a = c.label
        blk = sparse.csc_matrix(-system.block(a, a))
        # states without an exit (sinks) only receive mass; drop them from the solve
        live = np.flatnonzero(np.abs(blk.diagonal()) > 0)
        e = np.zeros(c.size)
        e[system.local_index(a, root[a])] = 1.0
        x = np.zeros(c.size)
        if live.size:
            sub = blk[live][:, live]
            x[live] = spsolve(sub, e[live]) if live.size > 1 else e[live] / sub.toarray()[0, 0]
        for b in system.labels:
            if b == a:
                continue
            row = system.block(b, a)[system.local_index(b, root[b])]
            out[a, b] = float(row @ x) if np.isfinite(x).all() else float("nan")
    return out


@dataclass(frozen=True)
class VerificationReport:
    target_mass: dict
    exact_mass: dict
    quadrature_mass: dict
    distance: dict
    scalar: object = field(repr=False)

    @property
    def total_distance(self):
        return float(sum(self.distance.values()))

    @property
    def mass_error(self):
        return max((abs(self.exact_mass[k] - self.target_mass[k]) for k in self.target_mass), default=0.0)


def verify_approximation(targets, network, partition, grid):
    """Recompute the kernels of a built network and compare them with the targets.

    Parameters
    ----------
    targets : dict
        ``(alpha, beta) -> TargetMeasure`` (unnormalized; mass = p).
    grid : TimeGrid
        Sampling grid for the recomputed kernels.
    """
    system = decompose(network, partition)
    roots = {a: a for a in system.labels}
    scalar = compute_scalar_kernels(system, grid, roots=roots)
    exact = _exact_masses(system, scalar.entrances)
    tm, em, qm, dist = {}, {}, {}, {}
    for (a, b), tgt in targets.items():
        tm[a, b] = tgt.mass
        em[a, b] = exact.get((a, b), 0.0)
        qm[a, b] = scalar.masses.get((a, b), 0.0)
        if tgt.mass <= 0:
            dist[a, b] = 0.0
            continue
        psi = TargetMeasure.from_samples(scalar.Phi[a, b], grid.dt)
        if psi.mass <= 0:
            dist[a, b] = float("inf")
            continue
        dist[a, b] = bounded_lipschitz(psi.normalized(), tgt.normalized())
    return VerificationReport(tm, em, qm, dist, scalar)
