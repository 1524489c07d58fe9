"""Pure numpy versions of the compiled kernels in ``_core.pyx``.

Signatures and results match the compiled module; it is selected when the
extension is unavailable or ``RENEWALKIT_PURE_PYTHON`` is set.
"""
import numpy as np

BACKEND = "python"
BLOCK = 32


def march_block(kern, F, H, S, W, minv, dt, lo, hi):
    """Direct product-trapezoid marching on nodes ``lo .. hi-1``.

    ``H`` holds the history already accumulated from nodes before ``lo``;
    lags inside the block are added here.  Fills ``S`` and the trapezoid
    weighted copy ``W`` (half weight at node 0).
    """
    for n in range(lo, hi):
        if n == 0:
            S[0] = F[0]
            W[0] = 0.5 * F[0]
            continue
        h = H[n].copy()
        if n > lo:
            h += dt * np.einsum("kij,kj->i", kern[n - lo:0:-1], W[lo:n])
        S[n] = minv @ (F[n] + h)
        W[n] = S[n]


def spe_run(mass, surv, route, n_steps, store_every, snaps):
    """Advance cohort masses along characteristics for ``n_steps`` steps.

    Parameters
    ----------
    mass : ndarray (k, J)
        Cell masses by compartment and age cell; updated in place.
    surv : ndarray (k, J)
        Per-step survival factor of each age cell.
    route : ndarray (k, k, J)
        ``route[a, b, j]``: fraction of the mass of cell ``j`` of ``a`` that
        moves into ``b`` during one step.
    snaps : ndarray (s, k, J)
        Receives a copy of ``mass`` every ``store_every`` steps (from step 0).

    Returns
    -------
    content, born, left : ndarray (n_steps + 1, k)
        Total mass, mass born into age cell 0 at each step, and mass that
        left during the step ending at each node.
    """
    k, J = mass.shape
    content = np.zeros((n_steps + 1, k))
    born = np.zeros((n_steps + 1, k))
    left = np.zeros((n_steps + 1, k))
    content[0] = mass.sum(axis=1)
    born[0] = mass[:, 0]
    if store_every > 0:
        snaps[0] = mass
    for n in range(1, n_steps + 1):
        flows = np.einsum("aj,abj->ab", mass, route)
        last = mass[:, -1] * surv[:, -1]
        mass[:, 1:] = mass[:, :-1] * surv[:, :-1]
        mass[:, -1] += last
        births = flows.sum(axis=0)
        mass[:, 0] = births
        content[n] = mass.sum(axis=1)
        born[n] = births
        left[n] = flows.sum(axis=1)
        if store_every > 0 and n % store_every == 0:
            snaps[n // store_every] = mass
    return content, born, left
