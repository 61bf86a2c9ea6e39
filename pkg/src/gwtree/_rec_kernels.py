"""Kernels for the quadratic map and its derivative extensions.

State layout (length 10), linear space::

    0 u        1 v
    2 du/du0   3 dv/du0   4 du/dv0   5 dv/dv0     (derivatives in the start point)
    6 du/db    7 dv/db                            (first b-derivatives)
    8 d2u/db2  9 d2v/db2                          (second b-derivatives)

The log-space kernel carries ``log u, log v`` in slots 0-1 and every
derivative divided by its own coordinate (``du/u``, ``dv/v``, ``d2u/u`` ...).
"""
import math

import numpy as np

from ._jit import njit

NSTATE = 10


@njit
def lin_step(p, b, s, out):
    K = p.shape[0] - 1
    u = s[0]
    v = s[1]
    P = 0.0    # sum_{k>=2} p_k v^k
    D = 0.0    # sum_{k>=2} k p_k v^(k-1)
    D2 = 0.0   # sum_{k>=2} k(k-1) p_k v^(k-2)
    vk = 1.0
    for k in range(2, K + 1):
        D2 += k * (k - 1) * p[k] * vk
        D += k * p[k] * vk * v
        P += p[k] * vk * v * v
        vk *= v
    base = p[0] + p[1] * u
    out[0] = base + P
    out[1] = base + b * P
    out[2] = p[1] * s[2] + D * s[3]
    out[3] = p[1] * s[2] + b * D * s[3]
    out[4] = p[1] * s[4] + D * s[5]
    out[5] = p[1] * s[4] + b * D * s[5]
    out[6] = p[1] * s[6] + D * s[7]
    out[7] = p[1] * s[6] + P + b * D * s[7]
    q = D2 * s[7] * s[7]
    out[8] = p[1] * s[8] + D * s[9] + q
    out[9] = p[1] * s[8] + 2.0 * D * s[7] + b * (D * s[9] + q)


@njit
def log_step(lp, b, s, out):
    K = lp.shape[0] - 1
    lb = math.log(b)
    Lu = s[0]
    Lv = s[1]
    t1 = lp[1] + Lu
    # log-sum-exp over {log p0, log p1 + Lu, log p_k + k Lv}
    mu = max(lp[0], t1)
    mv = mu
    for k in range(2, K + 1):
        tk = lp[k] + k * Lv
        mu = max(mu, tk)
        mv = max(mv, lb + tk)
    su = math.exp(lp[0] - mu) + math.exp(t1 - mu)
    sv = math.exp(lp[0] - mv) + math.exp(t1 - mv)
    for k in range(2, K + 1):
        tk = lp[k] + k * Lv
        su += math.exp(tk - mu)
        sv += math.exp(lb + tk - mv)
    Lu1 = mu + math.log(su)
    Lv1 = mv + math.log(sv)
    wu1 = math.exp(t1 - Lu1)
    wv1 = math.exp(t1 - Lv1)
    Su1 = 0.0
    Su2 = 0.0
    Sv0 = 0.0
    Sv1 = 0.0
    Sv2 = 0.0
    for k in range(2, K + 1):
        tk = lp[k] + k * Lv
        wu = math.exp(tk - Lu1)
        wv = math.exp(lb + tk - Lv1)
        Su1 += k * wu
        Su2 += k * (k - 1) * wu
        Sv0 += wv
        Sv1 += k * wv
        Sv2 += k * (k - 1) * wv
    out[0] = Lu1
    out[1] = Lv1
    out[2] = wu1 * s[2] + Su1 * s[3]
    out[3] = wv1 * s[2] + Sv1 * s[3]
    out[4] = wu1 * s[4] + Su1 * s[5]
    out[5] = wv1 * s[4] + Sv1 * s[5]
    out[6] = wu1 * s[6] + Su1 * s[7]
    out[7] = wv1 * s[6] + Sv1 * s[7] + Sv0 / b
    cb2 = s[7] * s[7]
    out[8] = wu1 * s[8] + Su1 * s[9] + Su2 * cb2
    out[9] = wv1 * s[8] + (2.0 / b) * Sv1 * s[7] + Sv1 * s[9] + Sv2 * cb2


@njit
def _run(logspace, coef, b, state, n_max, every, mask, rec):
    """Iterate ``n_max`` steps, recording every ``every``-th state into ``rec``.

    ``rec`` rows are ``(step, state...)``.  Iteration stops before the first
    step producing a non-finite value in a masked slot; returns
    ``(last finite step, rows written)`` and leaves ``state`` at that step.
    """
    nxt = np.empty(NSTATE)
    r = 0
    rec[r, 0] = 0.0
    rec[r, 1:] = state
    r += 1
    for k in range(1, n_max + 1):
        if logspace:
            log_step(coef, b, state, nxt)
        else:
            lin_step(coef, b, state, nxt)
        for j in range(NSTATE):
            if mask[j] and not np.isfinite(nxt[j]):
                if rec[r - 1, 0] != k - 1:
                    rec[r, 0] = k - 1
                    rec[r, 1:] = state
                    r += 1
                return k - 1, r
        state[:] = nxt
        if k % every == 0 or k == n_max:
            rec[r, 0] = k
            rec[r, 1:] = state
            r += 1
    return n_max, r


@njit
def classify_orbit(p, b, u, v, n_max, tol, vmax):
    """Iterate ``(u, v)`` until convergence or divergence.

    Returns ``(code, steps)`` with code 1 when successive states differ by
    less than ``tol`` (sup norm), -1 when ``v`` exceeds ``vmax``, 0 if neither
    happens within ``n_max`` steps.
    """
    s = np.zeros(NSTATE)
    out = np.zeros(NSTATE)
    s[0] = u
    s[1] = v
    for k in range(1, n_max + 1):
        lin_step(p, b, s, out)
        if out[1] > vmax or not np.isfinite(out[1]):
            return -1, k
        if abs(out[0] - s[0]) < tol and abs(out[1] - s[1]) < tol:
            return 1, k
        s[0] = out[0]
        s[1] = out[1]
    return 0, n_max


@njit
def approach(p, b, u, v, tu, tv, tol, n_max):
    """Iterate from ``(u, v)`` until within ``tol`` (sup norm) of ``(tu, tv)``.

    Returns ``(steps, u, v)``; ``steps == n_max`` with a larger distance means
    the target was not reached.
    """
    s = np.zeros(NSTATE)
    out = np.zeros(NSTATE)
    s[0] = u
    s[1] = v
    for k in range(1, n_max + 1):
        lin_step(p, b, s, out)
        s[0] = out[0]
        s[1] = out[1]
        if abs(s[0] - tu) < tol and abs(s[1] - tv) < tol:
            return k, s[0], s[1]
    return n_max, s[0], s[1]
