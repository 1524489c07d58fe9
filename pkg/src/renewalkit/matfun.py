"""Matrix exponential by scaling and squaring with a degree-13 Pade approximant.

The coefficients and the theta thresholds are the standard ones for
double precision (Higham, 2005).  Lower degrees are used when the norm is
small enough.
"""
import numpy as np

from .errors import NumericalError

__all__ = ["expm", "expm_sequence", "expm_column_sequence"]

_B13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_PADE_LOW = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
}
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1,
          7: 9.504178996162932e-1, 9: 2.097847961257068e0,
          13: 5.371920351148152e0}


def _pade_low(A, m):
    b = _PADE_LOW[m]
    n = A.shape[0]
    ident = np.eye(n)
    A2 = A @ A
    powers = [ident, A2]
    for _ in range((m - 1) // 2 - 1):
        powers.append(powers[-1] @ A2)
    U = sum(b[2 * k + 1] * powers[k] for k in range(len(powers)))
    V = sum(b[2 * k] * powers[k] for k in range(len(powers)))
    return A @ U, V


def _pade13(A):
    b = _B13
    n = A.shape[0]
    ident = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    return U, V


def expm(M, t=1.0):
    """Return ``exp(t * M)``.

    Parameters
    ----------
    M : array_like, shape (n, n)
    t : float, optional

    Raises
    ------
    NumericalError
        If the entries are not finite or the result overflows.
    """
    A = np.asarray(M, dtype=float) * float(t)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise NumericalError("expm: matrix has non-finite entries")
    n = A.shape[0]
    if n == 0:
        return A.copy()
    if n == 1:
        with np.errstate(over="ignore"):
            out = np.exp(A)
        if not np.isfinite(out).all():
            raise NumericalError(f"expm overflow: exp({A[0, 0]:.3g})")
        return out
    norm = np.abs(A).sum(axis=0).max()
    if norm == 0.0:
        return np.eye(n)
    s = 0
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            U, V = _pade_low(A, m)
            break
    else:
        s = max(0, int(np.ceil(np.log2(norm / _THETA[13]))))
        U, V = _pade13(A / 2.0 ** s)
    with np.errstate(over="ignore", invalid="ignore"):
        R = np.linalg.solve(V - U, V + U)
        for _ in range(s):
            R = R @ R
    if not np.isfinite(R).all():
        raise NumericalError(f"expm overflow for ||tM||_1 = {norm:.3g}")
    return R


def expm_sequence(M, dt, n):
    """Stack ``exp(k dt M)`` for ``k = 0 .. n-1`` into an array (n, d, d).

    Blocks are filled by doubling: the powers ``k in [p, 2p)`` are obtained
    from ``exp(p dt M)`` (computed directly) times the first ``p`` powers, so
    each entry is the product of at most ``log2(n)`` exponentials.
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    out = np.empty((n, d, d))
    out[0] = np.eye(d)
    p = 1
    while p < n:
        q = min(p, n - p)
        anchor = expm(M, p * dt)
        np.matmul(anchor, out[:q], out=out[p:p + q])
        p += q
    return out


def expm_column_sequence(M, v, dt, n, chunk=4096):
    """Vectors ``exp(k dt M) v`` for ``k = 0 .. n-1``, shape (n, d).

    Memory stays at ``chunk * d * d`` regardless of ``n``.
    """
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float)
    d = M.shape[0]
    chunk = max(1, min(chunk, n))
    local = expm_sequence(M, dt, chunk)
    out = np.empty((n, d))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        base = expm(M, start * dt) @ v
        out[start:stop] = local[: stop - start] @ base
    return out
