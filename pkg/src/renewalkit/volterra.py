"""Convolution Volterra equations of the second kind on a uniform grid.

Solves ``S(t) = F(t) + int_0^t Kern(t - s) S(s) ds`` with the trapezoid rule
applied to the product ``Kern(t_n - s) S(s)``:

    (I - dt/2 Kern_0) S_n = F_n + dt (Kern_n S_0 / 2 + sum_{m=1}^{n-1} Kern_{n-m} S_m)

The history sum is split recursively: the first half of an interval is
solved, its contribution to the second half is added with one FFT
convolution, then the second half is solved.  Short intervals are marched
directly by the backend kernel.  Total cost is O(n log^2 n) per matrix entry.
"""
import numpy as np
from scipy import fft as sfft

from . import backend as _backend

__all__ = ["solve_volterra", "trapezoid_convolution"]


def solve_volterra(kern, forcing, dt, block=None, impl=None):
    """Solve the matrix convolution equation.

    Parameters
    ----------
    kern : ndarray, shape (n, d, d)
    forcing : ndarray, shape (n, d)
    dt : float
    block : int, optional
        Interval length below which nodes are marched directly.
    impl : module, optional
        Backend module; defaults to the active one.

    Returns
    -------
    ndarray, shape (n, d)
    """
    impl = impl or _backend.impl
    kern = np.ascontiguousarray(kern, dtype=float)
    F = np.ascontiguousarray(forcing, dtype=float)
    n, d = F.shape
    if kern.shape != (n, d, d):
        raise ValueError(f"kernel shape {kern.shape} does not match forcing {F.shape}")
    block = block or impl.BLOCK
    S = np.zeros((n, d))
    W = np.zeros((n, d))
    H = np.zeros((n, d))
    minv = np.ascontiguousarray(np.linalg.inv(np.eye(d) - 0.5 * dt * kern[0]))
    cache = {}

    def kernel_fft(L, nfft):
        key = (L, nfft)
        if key not in cache:
            cache[key] = sfft.rfft(kern[:L], nfft, axis=0)
        return cache[key]

    def rec(lo, hi):
        if hi - lo <= block:
            impl.march_block(kern, F, H, S, W, minv, dt, lo, hi)
            return
        mid = (lo + hi) // 2
        rec(lo, mid)
        L = hi - lo
        # wrap-around of a length-nfft circular convolution only lands on
        # indices below mid - lo, which are discarded
        nfft = sfft.next_fast_len(L, real=True)
        Kf = kernel_fft(L, nfft)
        Wf = sfft.rfft(W[lo:mid], nfft, axis=0)
        conv = sfft.irfft(np.einsum("fij,fj->fi", Kf, Wf), nfft, axis=0)
        H[mid:hi] += dt * conv[mid - lo:L]
        rec(mid, hi)

    rec(0, n)
    return S


def trapezoid_convolution(kern, signal, dt):
    """Trapezoid approximation of ``int_0^t kern(t - s) signal(s) ds`` at every node.

    ``kern`` may have shape ``(n,)`` with ``signal`` ``(n,)``, or ``(n, p, q)``
    with ``signal`` ``(n, q)``.
    """
    kern = np.asarray(kern, dtype=float)
    signal = np.asarray(signal, dtype=float)
    n = signal.shape[0]
    nfft = sfft.next_fast_len(2 * n - 1, real=True)
    Kf = sfft.rfft(kern, nfft, axis=0)
    Sf = sfft.rfft(signal, nfft, axis=0)
    if kern.ndim == 1:
        full = sfft.irfft(Kf * Sf, nfft, axis=0)[:n]
        corr = 0.5 * (kern * signal[0] + kern[0] * signal)
    else:
        full = sfft.irfft(np.einsum("fij,fj->fi", Kf, Sf), nfft, axis=0)[:n]
        corr = 0.5 * (kern @ signal[0] + signal @ kern[0].T)
    out = dt * (full - corr)
    out[0] = 0.0
    return out
