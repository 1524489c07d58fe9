# cython: language_level=3
"""Compiled inner loops: Volterra block marching and cohort transport.

Same interface as :mod:`renewalkit._fallback`.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"
BLOCK = 128


def march_block(double[:, :, ::1] kern, double[:, ::1] F, double[:, ::1] H,
                double[:, ::1] S, double[:, ::1] W, double[:, ::1] minv,
                double dt, Py_ssize_t lo, Py_ssize_t hi):
    cdef Py_ssize_t d = F.shape[1]
    cdef Py_ssize_t n, m, i, j, lag
    cdef double acc
    cdef double[::1] rhs = np.empty(d)
    cdef double[::1] h = np.empty(d)
    for n in range(lo, hi):
        if n == 0:
            for i in range(d):
                S[0, i] = F[0, i]
                W[0, i] = 0.5 * F[0, i]
            continue
        for i in range(d):
            h[i] = 0.0
        for m in range(lo, n):
            lag = n - m
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += kern[lag, i, j] * W[m, j]
                h[i] += acc
        for i in range(d):
            rhs[i] = F[n, i] + H[n, i] + dt * h[i]
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += minv[i, j] * rhs[j]
            S[n, i] = acc
            W[n, i] = acc


def spe_run(double[:, ::1] mass, double[:, ::1] surv, double[:, :, ::1] route,
            Py_ssize_t n_steps, Py_ssize_t store_every, double[:, :, ::1] snaps):
    cdef Py_ssize_t k = mass.shape[0]
    cdef Py_ssize_t J = mass.shape[1]
    cdef Py_ssize_t n, a, b, j
    cdef double last, tot, f
    content_arr = np.zeros((n_steps + 1, k))
    born_arr = np.zeros((n_steps + 1, k))
    left_arr = np.zeros((n_steps + 1, k))
    cdef double[:, ::1] content = content_arr
    cdef double[:, ::1] born = born_arr
    cdef double[:, ::1] left = left_arr
    cdef double[:, ::1] flows = np.zeros((k, k))
    for a in range(k):
        tot = 0.0
        for j in range(J):
            tot += mass[a, j]
        content[0, a] = tot
        born[0, a] = mass[a, 0]
    if store_every > 0:
        snaps[0, :, :] = mass
    for n in range(1, n_steps + 1):
        for a in range(k):
            for b in range(k):
                f = 0.0
                if b != a:  # no self-routing
                    for j in range(J):
                        f += mass[a, j] * route[a, b, j]
                flows[a, b] = f
        for a in range(k):
            # shift by one age cell and sum in the same pass
            last = mass[a, J - 1] * surv[a, J - 1]
            tot = 0.0
            for j in range(J - 1, 0, -1):
                mass[a, j] = mass[a, j - 1] * surv[a, j - 1]
                tot += mass[a, j]
            if J > 1:
                mass[a, J - 1] += last
                tot += last
            else:
                mass[a, 0] = last
                tot = 0.0
            content[n, a] = tot
        for b in range(k):
            f = 0.0
            for a in range(k):
                f += flows[a, b]
            mass[b, 0] = f
            born[n, b] = f
            content[n, b] += f
        for a in range(k):
            f = 0.0
            for b in range(k):
                f += flows[a, b]
            left[n, a] = f
        if store_every > 0 and n % store_every == 0:
            snaps[n // store_every, :, :] = mass
    return content_arr, born_arr, left_arr
