"""Metropolis kernels on spin arrays.

Randomness comes from a caller-supplied buffer of uniforms consumed from
``pos``; a kernel returns as soon as the buffer might not cover one more
step, so the trajectory depends only on the uniform stream.

``bphi`` is ``beta * phi`` indexed by ``[X + 1, Y + 1]``.  Descendants of
site ``c`` at relative depth ``t`` occupy the contiguous range starting at
``c*K**t + (K**t - 1)/(K - 1)``.
"""
import math

import numpy as np

from ._jit import njit


@njit
def draw_index(cdf, u):
    k = 0
    last = cdf.shape[0] - 1
    while k < last and u >= cdf[k]:
        k += 1
    return k


@njit
def draw_subtree(spins, c, gen_c, n, K, cdf, buf, pos):
    """Fresh BGW offspring on ``c`` and its descendants up to generation ``n``."""
    if gen_c > n:
        return pos
    lo = c
    width = 1
    for t in range(n - gen_c + 1):
        for s in range(lo, lo + width):
            if t == 0 or spins[(s - 1) // K] >= (s - 1) % K + 1:
                spins[s] = draw_index(cdf, buf[pos])
                pos += 1
            else:
                spins[s] = -1
        lo = lo * K + 1
        width *= K
    return pos


@njit
def copy_subtree(src, dst, c, gen_c, n, K, clear):
    """Copy the subtree of ``c`` from ``src`` into ``dst``; optionally blank ``src``."""
    if gen_c > n:
        return
    lo = c
    width = 1
    j = 0
    for t in range(n - gen_c + 1):
        for s in range(lo, lo + width):
            dst[j] = src[s]
            if clear:
                src[s] = -1
            j += 1
        lo = lo * K + 1
        width *= K


@njit
def restore_subtree(spins, saved, c, gen_c, n, K):
    if gen_c > n:
        return
    lo = c
    width = 1
    j = 0
    for t in range(n - gen_c + 1):
        for s in range(lo, lo + width):
            spins[s] = saved[j]
            j += 1
        lo = lo * K + 1
        width *= K


@njit
def subtree_energy(spins, c, gen_c, n, K, bphi):
    """Energy of the links strictly inside the subtree of ``c``."""
    e = 0.0
    if gen_c >= n:
        return e
    lo = c * K + 1
    width = K
    for t in range(1, n - gen_c + 1):
        for s in range(lo, lo + width):
            e += bphi[spins[(s - 1) // K] + 1, spins[s] + 1]
        lo = lo * K + 1
        width *= K
    return e


@njit
def site_energy(spins, s, g, n, K, x, bphi):
    """Energy of the link to the parent of ``s`` and of the links to its children."""
    X = spins[s]
    pv = x if s == 0 else spins[(s - 1) // K]
    e = bphi[pv + 1, X + 1]
    if g < n:
        for r in range(1, K + 1):
            e += bphi[X + 1, spins[K * s + r] + 1]
    return e


@njit
def total_energy(spins, K, x, bphi):
    e = bphi[x + 1, spins[0] + 1]
    for s in range(1, spins.shape[0]):
        e += bphi[spins[(s - 1) // K] + 1, spins[s] + 1]
    return e


@njit
def local_steps(spins, gen, n, K, x, p, cdf, lam_cdf, bphi, scale,
                buf, pos, t0, steps, thin, rec, counters, scratch):
    """Advance the single-site chain.

    Returns ``(steps done, pos, rows recorded)``.  ``counters`` accumulates
    ``[proposals reaching the Metropolis test, accepted]``.
    """
    S = spins.shape[0]
    need = n + 4 + S
    done = 0
    r = 0
    while done < steps and pos + need <= buf.shape[0]:
        m = draw_index(lam_cdf, buf[pos])
        pos += 1
        site = 0
        ok = True
        for l in range(m):
            d = draw_index(cdf, buf[pos])
            pos += 1
            if d == 0:
                ok = False
                break
            site = K * site + d
        if ok and spins[site] >= 0:
            X = spins[site]
            sigma = 1 if buf[pos] < 0.5 else -1
            pos += 1
            Xn = X + sigma
            if Xn >= 0 and Xn <= K:
                u = buf[pos]
                pos += 1
                if u < p[Xn] / scale:
                    counters[0] += 1
                    g = gen[site]
                    if g < n:
                        c = K * site + (Xn if sigma == 1 else X)
                        before = site_energy(spins, site, g, n, K, x, bphi) \
                            + subtree_energy(spins, c, g + 1, n, K, bphi)
                        if sigma == 1:
                            spins[site] = Xn
                            pos = draw_subtree(spins, c, g + 1, n, K, cdf, buf, pos)
                        else:
                            copy_subtree(spins, scratch, c, g + 1, n, K, True)
                            spins[site] = Xn
                        after = site_energy(spins, site, g, n, K, x, bphi) \
                            + subtree_energy(spins, c, g + 1, n, K, bphi)
                    else:
                        c = -1
                        before = site_energy(spins, site, g, n, K, x, bphi)
                        spins[site] = Xn
                        after = site_energy(spins, site, g, n, K, x, bphi)
                    dH = after - before
                    accept = True
                    if dH > 0:
                        accept = buf[pos] < math.exp(-dH)
                        pos += 1
                    if accept:
                        counters[1] += 1
                    else:
                        spins[site] = X
                        if c >= 0:
                            if sigma == 1:
                                copy_subtree(spins, scratch, c, g + 1, n, K, True)
                            else:
                                restore_subtree(spins, scratch, c, g + 1, n, K)
        done += 1
        if (t0 + done) % thin == 0 and r < rec.shape[0]:
            rec[r, :] = spins
            r += 1
    return done, pos, r


@njit
def global_steps(spins, n, K, x, cdf, bphi, buf, pos, t0, steps, thin, rec, counters, scratch):
    """Advance the independence chain proposing whole BGW trees."""
    S = spins.shape[0]
    done = 0
    r = 0
    while done < steps and pos + S + 1 <= buf.shape[0]:
        pos = draw_subtree(scratch, 0, 0, n, K, cdf, buf, pos)
        dH = total_energy(scratch, K, x, bphi) - total_energy(spins, K, x, bphi)
        counters[0] += 1
        accept = True
        if dH > 0:
            accept = buf[pos] < math.exp(-dH)
            pos += 1
        if accept:
            counters[1] += 1
            spins[:] = scratch
        done += 1
        if (t0 + done) % thin == 0 and r < rec.shape[0]:
            rec[r, :] = spins
            r += 1
    return done, pos, r
