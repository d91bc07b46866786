"""Pure numpy versions of the compiled kernels.

Arithmetic is written to match ``_ckernels`` expression for expression
(same association order, strict ``<`` for the first minimizing edge), so the
two backends agree bit for bit.  ``threads`` is accepted and ignored.
"""

from __future__ import annotations

import numpy as np


def _segment_min(cand: np.ndarray, in_ptr: np.ndarray, axis: int = -1) -> np.ndarray:
    counts = np.diff(in_ptr)
    nz = counts > 0
    shape = list(cand.shape)
    shape[axis] = len(counts)
    out = np.full(shape, np.inf)
    if nz.any():
        red = np.minimum.reduceat(cand, in_ptr[:-1][nz], axis=axis)
        if axis in (-1, cand.ndim - 1):
            out[..., nz] = red
        else:
            out[nz] = red
    return out


def _solve_nodes(r, lam, kappa, eps, dt, tol):
    if eps == 0.0:
        return r.copy()
    if kappa == 0.0:
        return r / (1.0 + (dt * eps) * lam)
    lo = np.where(r < 0.0, r, 0.0)
    hi = np.where(r < 0.0, 0.0, r)
    active = (hi - lo) > tol
    while active.any():
        idx = np.nonzero(active)[0]
        l, h = lo[idx], hi[idx]
        mid = 0.5 * (l + h)
        stuck = (mid <= l) | (mid >= h)
        uu = eps * mid
        gval = -(lam[idx] * uu) - kappa * (uu * uu * uu) / (1.0 + uu * uu)
        F = mid - dt * gval - r[idx]
        go_hi = (F > 0.0) & ~stuck
        go_lo = ~(F > 0.0) & ~stuck
        hi[idx[go_hi]] = mid[go_hi]
        lo[idx[go_lo]] = mid[go_lo]
        active[idx[stuck]] = False
        active[idx] &= (hi[idx] - lo[idx]) > tol
    return 0.5 * (lo + hi)


def contact_sweep(u, in_ptr, in_src, in_cost, lam, kappa, eps, dt, c, tol=1e-13, threads=1):
    best = _segment_min(u[in_src] + in_cost, in_ptr)
    return _solve_nodes(best + c * dt, lam, kappa, eps, dt, tol)


def contact_iterate(u0, in_ptr, in_src, in_cost, lam, kappa, eps, dt, c, tol_fix, max_iter,
                    tol=1e-13, threads=1):
    cur = np.array(u0, dtype=float, copy=True)
    changes = []
    it = 0
    while it < max_iter:
        nxt = contact_sweep(cur, in_ptr, in_src, in_cost, lam, kappa, eps, dt, c, tol)
        diff = np.abs(nxt - cur)
        change = float(np.nan) if np.isnan(diff).any() else float(diff.max(initial=0.0))
        changes.append(change)
        it += 1
        cur = nxt
        if change <= tol_fix or change != change:
            break
    return cur, it, np.array(changes)


def minplus_step(vec, in_ptr, in_src, in_cost, threads=1):
    return _segment_min(vec[in_src] + in_cost, in_ptr)


def karp_table(num_nodes, in_ptr, in_src, in_cost, source, threads=1):
    N = int(num_nodes)
    E = len(in_src)
    D = np.full((N + 1, N), np.inf)
    P = np.full((N + 1, N), -1, dtype=np.int64)
    D[0, source] = 0.0
    dst = np.repeat(np.arange(N), np.diff(in_ptr))
    eidx = np.arange(E)
    for k in range(1, N + 1):
        cand = D[k - 1, in_src] + in_cost
        best = _segment_min(cand, in_ptr)
        D[k] = best
        hit = np.isfinite(cand) & (cand == best[dst])
        first = _segment_min(np.where(hit, eidx, E).astype(float), in_ptr)
        P[k] = np.where(first < E, first, -1).astype(np.int64)
    return D, P


def bellman_ford_rows(sources, num_nodes, in_ptr, in_src, in_cost, max_rounds, threads=1,
                      block=64):
    N = int(num_nodes)
    S = len(sources)
    D = np.full((S, N), np.inf)
    rounds = np.zeros(S, dtype=np.int64)
    conv = np.zeros(S, dtype=bool)
    for b0 in range(0, S, block):
        rows = slice(b0, min(S, b0 + block))
        Db = D[rows]
        Db[np.arange(Db.shape[0]), sources[rows]] = 0.0
        live = np.ones(Db.shape[0], dtype=bool)
        r = 0
        while r < max_rounds and live.any():
            idx = np.nonzero(live)[0]
            cur = Db[idx]
            new = np.minimum(cur, _segment_min(cur[:, in_src] + in_cost, in_ptr, axis=1))
            r += 1
            same = (new == cur).all(axis=1)
            Db[idx] = new
            done = idx[same]
            rounds[b0 + done] = r
            conv[b0 + done] = True
            live[done] = False
        rounds[b0 + np.nonzero(live)[0]] = r
        D[rows] = Db
    return D, rounds, conv
