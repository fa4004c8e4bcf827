"""Compiled coordinate-descent kernel for the weighted lasso.

Objective: ``||y - H b||^2 + 2 * sum_j thr_j |b_j|``, i.e. ``thr = lambda * w / 2``.
Coordinates with ``thr_j == 0`` are unpenalized.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _residual(H, y, beta, r):
    n, K = H.shape
    for i in range(n):
        r[i] = y[i]
    for j in range(K):
        bj = beta[j]
        if bj != 0.0:
            for i in range(n):
                r[i] -= H[i, j] * bj


@njit(cache=True)
def _objective(r, beta, thr):
    s = 0.0
    for i in range(r.shape[0]):
        s += r[i] * r[i]
    for j in range(beta.shape[0]):
        s += 2.0 * thr[j] * abs(beta[j])
    return s


@njit(cache=True)
def _update(H, r, beta, thr, col_sq, j):
    cs = col_sq[j]
    if cs == 0.0:
        old = beta[j]
        beta[j] = 0.0
        return abs(old)
    n = H.shape[0]
    old = beta[j]
    z = 0.0
    for i in range(n):
        z += H[i, j] * r[i]
    z += cs * old
    t = thr[j]
    if z > t:
        new = (z - t) / cs
    elif z < -t:
        new = (z + t) / cs
    else:
        new = 0.0
    delta = new - old
    if delta != 0.0:
        for i in range(n):
            r[i] -= H[i, j] * delta
        beta[j] = new
    return abs(delta)


@njit(cache=True)
def cd_solve(H, y, thr, beta, col_sq, tol, max_iter):
    """Cyclic coordinate descent with active-set cycling.

    Alternates one pass over every coordinate with passes restricted to the
    nonzero coordinates until those settle, then re-checks the full set.
    ``beta`` is updated in place.  Returns ``(n_sweeps, converged, objective)``
    where ``objective[k]`` is the objective after sweep ``k``.
    """
    n, K = H.shape
    r = np.empty(n)
    objective = np.empty(max_iter)
    sweeps = 0
    converged = False
    active = np.empty(K, dtype=np.int64)
    while sweeps < max_iter:
        _residual(H, y, beta, r)
        dmax = 0.0
        for j in range(K):
            d = _update(H, r, beta, thr, col_sq, j)
            if d > dmax:
                dmax = d
        objective[sweeps] = _objective(r, beta, thr)
        sweeps += 1
        if dmax <= tol:
            converged = True
            break
        na = 0
        for j in range(K):
            if beta[j] != 0.0:
                active[na] = j
                na += 1
        while sweeps < max_iter:
            dmax = 0.0
            for k in range(na):
                d = _update(H, r, beta, thr, col_sq, active[k])
                if d > dmax:
                    dmax = d
            objective[sweeps] = _objective(r, beta, thr)
            sweeps += 1
            if dmax <= tol:
                break
    return sweeps, converged, objective[:sweeps]
