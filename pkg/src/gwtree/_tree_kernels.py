"""Enumeration kernels over spin arrays of the maximal tree.

Valid configurations are visited in lexicographic order of the breadth-first
spin sequence (with -1 < 0 < ... < K).  The successor of a configuration
increments the last present site that is below K and resets every later site
to its smallest admissible value (0 if its slot is open, -1 otherwise).
"""
import numpy as np

from ._jit import njit


@njit
def first_config(spins, parent, rank):
    spins[0] = 0
    for t in range(1, spins.shape[0]):
        spins[t] = -1


@njit
def next_config(spins, parent, rank, K):
    S = spins.shape[0]
    s = S - 1
    while s >= 0:
        if spins[s] >= 0 and spins[s] < K:
            break
        s -= 1
    if s < 0:
        return False
    spins[s] += 1
    for t in range(s + 1, S):
        if spins[parent[t]] >= rank[t]:
            spins[t] = 0
        else:
            spins[t] = -1
    return True


@njit
def fill_configs(state, parent, rank, K, out):
    """Copy configurations into ``out`` starting at ``state``.

    Returns ``(count, more)``; on return ``state`` holds the next
    configuration to emit when ``more`` is true.
    """
    m = 0
    more = True
    while m < out.shape[0]:
        out[m, :] = state
        m += 1
        if not next_config(state, parent, rank, K):
            more = False
            break
    return m, more


@njit
def stream_partition(parent, rank, gen, K, n, p, b, x, u, v):
    """Sum ``P_GW * b**N22 * u**L * v**Q`` over all trees without storing them.

    Neumaier-compensated accumulation; returns ``(sum, count)``.
    """
    S = parent.shape[0]
    spins = np.empty(S, dtype=np.int64)
    first_config(spins, parent, rank)
    total = 0.0
    comp = 0.0
    count = 0
    while True:
        w = 1.0
        for s in range(S):
            X = spins[s]
            if X < 0:
                continue
            w *= p[X]
            pv = x if s == 0 else spins[parent[s]]
            if X >= 2 and pv >= 2:
                w *= b
            if gen[s] == n:
                if X == 1:
                    w *= u
                elif X >= 2:
                    w *= v ** X
        t = total + w
        if abs(total) >= abs(w):
            comp += (total - t) + w
        else:
            comp += (w - t) + total
        total = t
        count += 1
        if not next_config(spins, parent, rank, K):
            break
    return total + comp, count
