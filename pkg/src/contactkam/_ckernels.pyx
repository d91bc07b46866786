# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Each routine mirrors its counterpart in ``_pykernels`` operation by
operation so both backends return bit-identical floats.  Parallel loops only
distribute independent per-node (or per-source) work, so results do not
depend on the thread count.
"""

import numpy as np

cimport cython
from cython.parallel cimport prange
from libc.math cimport INFINITY, fabs

ctypedef long long i64


cdef inline double _solve_node(double r, double lam, double kappa, double eps,
                               double dt, double tol) noexcept nogil:
    cdef double lo, hi, mid, uu, gval, F
    if eps == 0.0:
        return r
    if kappa == 0.0:
        return r / (1.0 + (dt * eps) * lam)
    if r < 0.0:
        lo = r
        hi = 0.0
    else:
        lo = 0.0
        hi = r
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        uu = eps * mid
        gval = -(lam * uu) - kappa * (uu * uu * uu) / (1.0 + uu * uu)
        F = mid - dt * gval - r
        if F > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


cdef void _sweep(const double[::1] u, double[::1] out, const i64[::1] in_ptr,
                 const i64[::1] in_src, const double[::1] in_cost, const double[::1] lam,
                 double kappa, double eps, double dt, double c, double tol,
                 int threads) noexcept nogil:
    cdef Py_ssize_t N = u.shape[0]
    cdef Py_ssize_t j, e
    cdef double best, cand
    for j in prange(N, nogil=True, schedule="static", num_threads=threads):
        best = INFINITY
        for e in range(in_ptr[j], in_ptr[j + 1]):
            cand = u[in_src[e]] + in_cost[e]
            if cand < best:
                best = cand
        out[j] = _solve_node(best + c * dt, lam[j], kappa, eps, dt, tol)


def contact_sweep(double[::1] u, i64[::1] in_ptr, i64[::1] in_src, double[::1] in_cost,
                  double[::1] lam, double kappa, double eps, double dt, double c,
                  double tol=1e-13, int threads=1):
    out = np.empty(u.shape[0])
    cdef double[::1] out_v = out
    with nogil:
        _sweep(u, out_v, in_ptr, in_src, in_cost, lam, kappa, eps, dt, c, tol, threads)
    return out


def contact_iterate(double[::1] u0, i64[::1] in_ptr, i64[::1] in_src, double[::1] in_cost,
                    double[::1] lam, double kappa, double eps, double dt, double c,
                    double tol_fix, long max_iter, double tol=1e-13, int threads=1):
    """Jacobi fixed-point iteration; returns (u, iterations, changes)."""
    cdef Py_ssize_t N = u0.shape[0]
    a = np.array(u0, dtype=np.float64, copy=True)
    b = np.empty(N)
    changes = np.empty(max_iter if max_iter > 0 else 1)
    cdef double[::1] cur = a
    cdef double[::1] nxt = b
    cdef double[::1] tmp
    cdef double[::1] ch = changes
    cdef long it = 0
    cdef Py_ssize_t j
    cdef double change, d
    with nogil:
        while it < max_iter:
            _sweep(cur, nxt, in_ptr, in_src, in_cost, lam, kappa, eps, dt, c, tol, threads)
            change = 0.0
            for j in range(N):
                d = fabs(nxt[j] - cur[j])
                if d > change or d != d:
                    change = d
            ch[it] = change
            it += 1
            tmp = cur
            cur = nxt
            nxt = tmp
            if change <= tol_fix or change != change:
                break
    return np.asarray(cur).copy(), it, changes[:it].copy()


def minplus_step(double[::1] vec, i64[::1] in_ptr, i64[::1] in_src, double[::1] in_cost,
                 int threads=1):
    cdef Py_ssize_t N = in_ptr.shape[0] - 1
    out = np.empty(N)
    cdef double[::1] o = out
    cdef Py_ssize_t j, e
    cdef double best, cand
    with nogil:
        for j in prange(N, schedule="static", num_threads=threads):
            best = INFINITY
            for e in range(in_ptr[j], in_ptr[j + 1]):
                cand = vec[in_src[e]] + in_cost[e]
                if cand < best:
                    best = cand
            o[j] = best
    return out


def karp_table(i64 num_nodes, i64[::1] in_ptr, i64[::1] in_src, double[::1] in_cost,
               i64 source, int threads=1):
    """D[k, v]: min cost of a k-edge walk source -> v; pred[k, v]: last edge."""
    cdef Py_ssize_t N = num_nodes
    D = np.full((N + 1, N), np.inf)
    P = np.full((N + 1, N), -1, dtype=np.int64)
    cdef double[:, ::1] Dv = D
    cdef i64[:, ::1] Pv = P
    cdef Py_ssize_t k, j, e
    cdef double best, cand, prev
    cdef i64 bp
    Dv[0, source] = 0.0
    with nogil:
        for k in range(1, N + 1):
            for j in prange(N, schedule="static", num_threads=threads):
                best = INFINITY
                bp = -1
                for e in range(in_ptr[j], in_ptr[j + 1]):
                    prev = Dv[k - 1, in_src[e]]
                    if prev < INFINITY:
                        cand = prev + in_cost[e]
                        if cand < best:
                            best = cand
                            bp = e
                Dv[k, j] = best
                Pv[k, j] = bp
    return D, P


def bellman_ford_rows(i64[::1] sources, i64 num_nodes, i64[::1] in_ptr, i64[::1] in_src,
                      double[::1] in_cost, long max_rounds, int threads=1):
    """Jacobi Bellman-Ford from each source; returns (D, rounds, converged)."""
    cdef Py_ssize_t S = sources.shape[0]
    cdef Py_ssize_t N = num_nodes
    D = np.full((S, N), np.inf)
    work = np.empty((S, N))
    rounds = np.zeros(S, dtype=np.int64)
    conv = np.zeros(S, dtype=np.int8)
    cdef double[:, ::1] Dv = D
    cdef double[:, ::1] Wv = work
    cdef i64[::1] Rv = rounds
    cdef signed char[::1] Cv = conv
    cdef Py_ssize_t s, j, e
    cdef long r
    cdef double best, cand
    cdef int changed
    with nogil:
        for s in prange(S, schedule="dynamic", num_threads=threads):
            Dv[s, sources[s]] = 0.0
            r = 0
            while r < max_rounds:
                changed = 0
                for j in range(N):
                    best = Dv[s, j]
                    for e in range(in_ptr[j], in_ptr[j + 1]):
                        cand = Dv[s, in_src[e]] + in_cost[e]
                        if cand < best:
                            best = cand
                    Wv[s, j] = best
                for j in range(N):
                    if Wv[s, j] != Dv[s, j]:
                        changed = 1
                    Dv[s, j] = Wv[s, j]
                r = r + 1
                if changed == 0:
                    Cv[s] = 1
                    break
            Rv[s] = r
    return D, rounds, conv.astype(bool)
