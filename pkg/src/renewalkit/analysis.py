"""Analysis of scalar response kernels.

* Markovianity: a kernel set comes from a Markov jump process exactly when
  every kernel leaving a compartment is a single exponential with the
  compartment's total exit rate.
* Detailed balance: for a detailed-balanced network each transit density is
  a nonnegative mixture of decaying exponentials (completely monotone).
* Long-time behaviour: fluxes approach ``c0 v0`` where ``v0`` is the Perron
  vector of the kernel mass matrix and ``c0`` is the residue of
  ``(I - M(z))^{-1}`` at ``z = 0`` applied to the transformed forcing.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import nnls

from .errors import EntranceError, GridError, InputError, NumericalError
from .network import check_one_entrance, is_strongly_connected
from .renewal import solve_renewal_scalar

__all__ = [
    "SpectralKernel",
    "MarkovVerdict",
    "MonotonicityVerdict",
    "PerronResult",
    "AsymptoticsResult",
    "laplace_kernel",
    "build_M",
    "first_moments",
    "markovianity_test",
    "detailed_balance_kernel",
    "complete_monotonicity_check",
    "perron",
    "perron_details",
    "long_time_limits",
]


def laplace_kernel(samples, dt, z=0.0):
    """Trapezoid value of ``int_0^T exp(-z t) f(t) dt``."""
    f = np.asarray(samples, dtype=float)
    t = np.arange(f.size) * dt
    return float(trapezoid(np.exp(-z * t) * f, dx=dt))


def build_M(scalar, z=0.0):
    """Matrix with entries ``M[alpha, beta] = Laplace(Phi[beta->alpha])(z)``."""
    labels = scalar.labels
    m = len(labels)
    M = np.zeros((m, m))
    for i, a in enumerate(labels):
        for j, b in enumerate(labels):
            if a != b:
                M[i, j] = laplace_kernel(scalar.Phi[b, a], scalar.grid.dt, z)
    return M


def first_moments(scalar):
    """``D[alpha, beta] = int t Phi[beta->alpha](t) dt`` (minus the derivative of M at 0)."""
    labels = scalar.labels
    t = scalar.grid.nodes
    m = len(labels)
    D = np.zeros((m, m))
    for i, a in enumerate(labels):
        for j, b in enumerate(labels):
            if a != b:
                D[i, j] = trapezoid(t * scalar.Phi[b, a], dx=scalar.grid.dt)
    return D


# --------------------------------------------------------------------------
# Markovianity


@dataclass(frozen=True)
class MarkovVerdict:
    """Outcome of :func:`markovianity_test`.

    ``generator`` (column convention, ordered like ``labels``) is set only
    when every compartment passes.
    """

    markovian: bool
    labels: tuple
    rates: dict
    decay: dict
    deviation: dict
    evidence: dict
    generator: np.ndarray = field(default=None, repr=False)


def markovianity_test(scalar, tol=1e-6, window=5.0):
    """Test whether every kernel is ``lambda_ab exp(-r_a t)`` with ``r_a = sum_b lambda_ab``.

    The decay rate ``r_a`` is a least-squares fit of ``log k_a`` on
    ``[0, window / r_a]``; acceptance requires the relative sup-norm misfit
    of every kernel and of the rate balance to be at most ``tol``.
    """
    labels = scalar.labels
    t = scalar.grid.nodes
    dt = scalar.grid.dt
    rates, decay, dev, evidence = {}, {}, {}, {}
    ok_all = True
    for a in labels:
        k = scalar.k[a]
        if not k.any():
            decay[a] = 0.0
            dev[a] = 0.0
            for b in labels:
                if b != a:
                    rates[a, b] = 0.0
            evidence[a] = "no exits (absorbing)"
            continue
        mass = trapezoid(k, dx=dt)
        if k[0] <= 0:
            ok_all = False
            decay[a] = float("nan")
            dev[a] = float("inf")
            evidence[a] = "k(0) = 0: log-kernel not affine at t = 0"
            continue
        r0 = k[0] / mass
        stop = min(t.size, max(3, int(np.floor(window / r0 / dt)) + 1))
        tw, kw = t[:stop], k[:stop]
        if not kw[1:].any():
            raise InputError(f"exit kernel of {a} vanishes on the fit window")
        if (kw <= 0).any():
            ok_all = False
            decay[a] = float("nan")
            dev[a] = float("inf")
            first = int(np.argmax(kw <= 0))
            evidence[a] = f"k vanishes at t = {tw[first]:.6g} inside the fit window"
            continue
        slope, _ = np.polyfit(tw, np.log(kw), 1)
        r = -slope
        decay[a] = float(r)
        worst = 0.0
        lam_sum = 0.0
        for b in labels:
            if b == a:
                continue
            phi = scalar.Phi[a, b][:stop]
            lam = float(phi[0])
            rates[a, b] = lam
            lam_sum += lam
            peak = float(np.abs(phi).max())
            if peak > 0:
                worst = max(worst, float(np.abs(phi - lam * np.exp(-r * tw)).max()) / peak)
        balance = abs(lam_sum - r) / r
        dev[a] = max(worst, balance)
        if dev[a] <= tol:
            evidence[a] = f"single exponential, rate {r:.12g}"
        else:
            ok_all = False
            evidence[a] = (f"not a single exponential: kernel misfit {worst:.3e}, "
                           f"rate balance misfit {balance:.3e}")
    gen = None
    if ok_all:
        m = len(labels)
        gen = np.zeros((m, m))
        for i, a in enumerate(labels):
            for j, b in enumerate(labels):
                if a != b:
                    gen[j, i] = rates[a, b]
            gen[i, i] = -sum(rates[a, b] for b in labels if b != a)
    return MarkovVerdict(ok_all, tuple(labels), rates, decay, dev, evidence, gen)


# --------------------------------------------------------------------------
# Detailed balance


@dataclass(frozen=True)
class SpectralKernel:
    """``prefactor * sum_j weights[j] exp(-rates[j] t)``."""

    prefactor: float
    weights: np.ndarray
    rates: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.prefactor * (np.exp(-np.multiply.outer(t, self.rates)) @ self.weights)

    @property
    def modes(self):
        return list(zip(self.weights.tolist(), self.rates.tolist()))


def detailed_balance_kernel(system, certificate, source, target):
    """Spectral form of the transit density from ``source`` into ``target``.

    The source block is symmetrized with ``diag(sqrt(mu))`` and
    eigendecomposed; the weights are the squared entrance components of the
    orthonormal eigenvectors.
    """
    if certificate is None or not certificate.holds:
        raise InputError("detailed-balance kernel needs a detailed-balance certificate")
    verdicts = check_one_entrance(system)
    for lab in (source, target):
        if verdicts[lab].kind == "multiple":
            raise EntranceError(f"multiple entrance points in {lab}: {list(verdicts[lab].states)}")
    src = system[source]
    tgt = system[target]
    blk = system.block(target, source)
    if verdicts[source].kind == "unique":
        ib = system.local_index(source, verdicts[source].entrance)
    else:
        ib = 0
    if verdicts[target].kind == "unique":
        ia = system.local_index(target, verdicts[target].entrance)
        prefactor = float(blk[ia, ib])
        others = blk.copy()
        others[ia, ib] = 0.0
        if (others > 0).any():
            raise EntranceError(f"edges from {source} into {target} leave from states other than its entrance")
    else:
        prefactor = 0.0
    mu = np.asarray(certificate.mu)[src.index]
    root = np.sqrt(mu)
    D = system.block(source, source) * root[None, :] / root[:, None]
    D = 0.5 * (D + D.T)
    vals, Q = np.linalg.eigh(D)
    rates = -vals
    rates[(rates < 0) & (rates > -1e-12 * max(1.0, np.abs(vals).max()))] = 0.0
    weights = Q[ib, :] ** 2
    order = np.argsort(rates)
    return SpectralKernel(prefactor, weights[order], rates[order])


@dataclass(frozen=True)
class MonotonicityVerdict:
    consistent: bool
    violation: tuple  # (order, t) or None
    mixture_residual: float
    mixture_rates: np.ndarray = field(repr=False)
    mixture_weights: np.ndarray = field(repr=False)

    @property
    def wording(self):
        if self.consistent:
            return "consistent with detailed balance"
        order, t = self.violation
        return f"violated at order {order}, t = {t:.6g}"


def complete_monotonicity_check(samples, dt, n_max=4, tol=0.0, n_rates=120, max_points=1500):
    """Sign pattern of finite differences plus a nonnegative exponential-mixture fit.

    A difference of order ``n`` violates complete monotonicity when
    ``(-1)^n Delta^n f < -threshold`` with ``threshold`` covering rounding
    amplification (``2^n * 1e3 * eps * max|f|``) plus ``tol * max|f|``.
    The mixture fit uses ``n_rates`` log-spaced decay rates and reports the
    relative sup-norm residual.
    """
    f = np.asarray(samples, dtype=float)
    if n_max > 4:
        raise InputError("finite-difference order is capped at 4")
    if f.size < 2 * n_max + 1:
        raise GridError(f"{f.size} samples are too few for differences of order {n_max}")
    scale = float(np.abs(f).max())
    violation = None
    if scale > 0:
        diff = f.copy()
        for order in range(1, n_max + 1):
            diff = np.diff(diff)
            thr = (2.0 ** order) * 1e3 * np.finfo(float).eps * scale + tol * scale
            bad = np.nonzero(((-1) ** order) * diff < -thr)[0]
            if bad.size:
                violation = (order, float((bad[0] + order / 2.0) * dt))
                break
    T = (f.size - 1) * dt
    step = max(1, int(np.ceil(f.size / max_points)))
    ts = np.arange(0, f.size, step) * dt
    fs = f[::step]
    nus = np.concatenate([[0.0], np.geomspace(0.1 / T, min(1.0 / dt, 1e4), n_rates - 1)])
    basis = np.exp(-np.multiply.outer(ts, nus))
    if scale > 0:
        w, _ = nnls(basis, fs, maxiter=50 * n_rates)
        resid = float(np.abs(basis @ w - fs).max() / scale)
    else:
        w, resid = np.zeros(nus.size), 0.0
    return MonotonicityVerdict(violation is None, violation, resid, nus, w)


# --------------------------------------------------------------------------
# Perron vectors and long-time limits


@dataclass(frozen=True)
class PerronResult:
    v0: np.ndarray
    u0: np.ndarray
    rho: float
    residual: float


def perron_details(M0, tol=1e-8):
    """Perron root and normalized right/left vectors of a nonnegative irreducible matrix."""
    M0 = np.asarray(M0, dtype=float)
    if M0.ndim != 2 or M0.shape[0] != M0.shape[1]:
        raise InputError("Perron vectors need a square matrix")
    if (M0 < 0).any():
        raise InputError("matrix has negative entries")
    m = M0.shape[0]
    if m > 1 and not is_strongly_connected(M0.T > 0):
        raise InputError("kernel mass matrix is reducible")
    vals, vecs = np.linalg.eig(M0)
    i = int(np.argmax(vals.real))
    rho = float(vals[i].real)
    v = np.abs(vecs[:, i].real)
    v /= v.sum()
    lvals, lvecs = np.linalg.eig(M0.T)
    u = np.abs(lvecs[:, int(np.argmax(lvals.real))].real)
    u /= u @ v
    res = max(float(np.abs(M0 @ v - rho * v).max()), float(np.abs(u @ M0 - rho * u).max()) / max(1.0, u.max()))
    if res > max(tol, 1e-10):
        raise NumericalError(f"Perron vector residual {res:.3e} exceeds {tol:g}")
    if (v <= 0).any() or (u <= 0).any():
        raise NumericalError("Perron vector is not strictly positive")
    return PerronResult(v, u, rho, res)


def perron(M0, tol=1e-8):
    """Right and left Perron vectors ``(v0, u0)`` with ``sum(v0) = 1``, ``u0 . v0 = 1``."""
    r = perron_details(M0, tol)
    return r.v0, r.u0


@dataclass(frozen=True)
class AsymptoticsResult:
    labels: tuple
    v0: np.ndarray
    u0: np.ndarray
    c0: float
    N_inf: dict
    decay_rate: float
    c0_tail: float
    rho: float
    perron_residual: float
    mean_exit_time: dict
    n0_consistent: bool
    solution: object = field(default=None, repr=False)


def _decay_rate(t, dev, floor_abs=1e-12):
    """Exponential decay rate of ``dev`` fitted above its noise floor."""
    n = dev.size
    tail = dev[-max(3, n // 10):]
    floor = max(floor_abs, 10.0 * float(tail.min()))
    keep = np.nonzero(dev > floor)[0]
    if keep.size == 0:
        return float("inf")
    start = n - n // 3
    sel = keep[keep >= start]
    if sel.size < 10:
        # deviation drops under the floor before the last third; use the last
        # third of the resolved range instead
        sel = keep[keep >= keep[-1] - (keep[-1] - keep[0]) // 3]
    if sel.size < 3:
        return float("nan")
    slope, _ = np.polyfit(t[sel], np.log(dev[sel]), 1)
    return float(-slope)


def long_time_limits(scalar, B0=None, N0=None, D0=None, solution=None, tol=1e-4):
    """Limits of the scalar renewal system as ``t -> infinity``.

    Parameters
    ----------
    scalar : ScalarKernelSet
    B0, N0, D0 : dict, optional
        Forcing and initial contents (default: those stored in ``scalar``).
    solution : RenewalSolution, optional
        Solver output used for the tail fit; computed when omitted.
    tol : float
        Allowed distance of the Perron root from one.

    Returns
    -------
    AsymptoticsResult
        ``c0`` from the residue formula ``u0.B0hat / (u0 D v0)`` and
        ``N_inf[alpha] = c0 v0[alpha] int s k_alpha(s) ds``.
    """
    labels = scalar.labels
    dt = scalar.grid.dt
    B0 = scalar.B0 if B0 is None else B0
    D0 = scalar.D0 if D0 is None else D0
    N0 = scalar.N0 if N0 is None else N0
    M0 = build_M(scalar, 0.0)
    pr = perron_details(M0, tol=1e-6)
    if abs(pr.rho - 1.0) > tol:
        raise NumericalError(f"kernel masses are not conservative: Perron root {pr.rho:.6g}")
    D = first_moments(scalar)
    denom = float(pr.u0 @ D @ pr.v0)
    if not denom > 1e-12 * max(1.0, float(np.abs(D).max())):
        raise NumericalError("pole at z = 0 is not simple; residue formula unsupported")
    Bhat = np.array([trapezoid(np.asarray(B0[a]), dx=dt) for a in labels])
    c0 = float(pr.u0 @ Bhat / denom)
    t = scalar.grid.nodes
    mean_exit = {a: float(trapezoid(t * scalar.k[a], dx=dt)) for a in labels}
    N_inf = {a: c0 * float(pr.v0[i]) * mean_exit[a] for i, a in enumerate(labels)}
    n0_ok = all(abs(float(trapezoid(np.asarray(D0[a]), dx=dt)) - float(N0.get(a, 0.0)))
                <= 1e-6 * max(1.0, float(N0.get(a, 0.0))) for a in labels)
    if solution is None:
        solution = solve_renewal_scalar(scalar.with_forcing(B0, D0, N0), check=False)
    Bmat = np.stack([solution.B[a] for a in labels], axis=1)
    dev = np.abs(Bmat - c0 * pr.v0[None, :]).max(axis=1)
    rate = _decay_rate(t, dev)
    end = Bmat[-1]
    c0_tail = float(end @ pr.v0 / (pr.v0 @ pr.v0))
    return AsymptoticsResult(tuple(labels), pr.v0, pr.u0, c0, N_inf, rate, c0_tail,
                             pr.rho, pr.residual, mean_exit, n0_ok, solution)
