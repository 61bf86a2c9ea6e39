"""Brute-force enumeration of all trees of small depth.

Everything here is computed by summing over explicit configurations; it is the
reference the recursion and the Markov chains are checked against.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import _tree_kernels as tk
from .model import (
    TWO_CLASS, ModelParams, ParameterError, SpinConfig, Tree, fkg_condition_check,
    griffiths_condition_check, lattice_size, site_tables, spin_to_tree, tree_to_spin,
)

MATERIALIZE_DEPTH = 3
STREAM_DEPTH = 4


class EnumerationBoundError(ValueError):
    def __init__(self, n, K, count, bound):
        super().__init__(
            f"depth n={n} (K={K}) has {count:.4g} trees; bound is n <= {bound}")
        self.count = count


def tree_count(n, K):
    """``C_0 = K + 1``, ``C_n = sum_k C_{n-1}**k``."""
    c = K + 1
    for _ in range(n):
        c = sum(c ** k for k in range(K + 1))
    return c


def _check_bound(n, K, bound):
    if n > bound:
        raise EnumerationBoundError(n, K, float(tree_count(n, K)) if n <= 8 else math.inf, bound)


def iter_spin_chunks(n, K, chunk=1 << 16, bound=STREAM_DEPTH):
    """Yield blocks of spin configurations (int8 arrays) covering every tree once."""
    _check_bound(n, K, bound)
    parent, rank, _ = site_tables(n, K)
    state = np.empty(lattice_size(n, K), dtype=np.int8)
    tk.first_config(state, parent, rank)
    more = True
    while more:
        out = np.empty((chunk, state.size), dtype=np.int8)
        m, more = tk.fill_configs(state, parent, rank, K, out)
        yield out[:m]


@lru_cache(maxsize=16)
def enumerate_spins(n, K):
    """All depth-``n`` trees as a read-only ``(C_n, |Lambda_n|)`` int8 array."""
    _check_bound(n, K, MATERIALIZE_DEPTH)
    out = np.concatenate(list(iter_spin_chunks(n, K)))
    out.flags.writeable = False
    return out


def enumerate_trees(n, K, bound=MATERIALIZE_DEPTH):
    """Stream every tree of depth ``n`` exactly once."""
    for block in iter_spin_chunks(n, K, chunk=4096, bound=bound):
        for row in block:
            yield spin_to_tree(SpinConfig(n, K, row))


# --- vectorized observables on spin rows -----------------------------------

def parent_values(spins, x, n, K):
    parent, _, _ = site_tables(n, K)
    pv = spins[:, np.maximum(parent, 0)].astype(np.int64)
    pv[:, 0] = x
    return pv


def generation_slice(m, K):
    lo = (K ** m - 1) // (K - 1)
    return slice(lo, lo + K ** m)


def external_counts(spins, n, K):
    """``(L, Q)``: external slots whose parent has one, resp. at least two, offspring."""
    last = spins[:, generation_slice(n, K)].astype(np.int64)
    L = (last == 1).sum(axis=1)
    Q = np.where(last >= 2, last, 0).sum(axis=1)
    return L, Q


def favoured_link_counts(spins, x, n, K):
    pv = parent_values(spins, x, n, K)
    return ((spins >= 2) & (pv >= 2)).sum(axis=1)


def generation_offspring(spins, m, K):
    g = spins[:, generation_slice(m, K)].astype(np.int64)
    return np.where(g >= 0, g, 0).sum(axis=1)


def energies(spins, interaction, x, n, K):
    pv = parent_values(spins, x, n, K)
    return interaction.table[pv + 1, spins.astype(np.int64) + 1].sum(axis=1)


def gw_weights(spins, dist):
    p_ext = np.append(dist.probs, 1.0)  # index -1 -> p_{-1} = 1
    return np.prod(p_ext[spins.astype(np.int64)], axis=1)


# --- exact Gibbs measure ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObservableFn:
    """Observable evaluated on rows of spins, tagged with its monotonicity class.

    ``kind`` is one of ``"cone"``, ``"monotone"``, ``"general"``; the caller is
    responsible for the declaration.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    kind: str = "general"
    name: str = ""

    def __call__(self, spins):
        return np.asarray(self.fn(spins), dtype=float)

    @classmethod
    def on_trees(cls, f, n, K, kind="general", name=""):
        """Wrap a function of :class:`Tree` (evaluated row by row)."""
        def g(spins):
            return np.array([f(spin_to_tree(SpinConfig(n, K, row))) for row in spins])
        return cls(g, kind, name)

    @classmethod
    def constant(cls, c=1.0):
        return cls(lambda s: np.full(s.shape[0], float(c)), "cone", f"const({c})")


@dataclass(frozen=True, eq=False)
class ExactMeasure:
    params: ModelParams
    spins: np.ndarray
    weights: np.ndarray
    partition: float

    @property
    def probs(self):
        return self.weights / self.partition

    def entries(self):
        p = self.probs
        for row, pr in zip(self.spins, p):
            yield spin_to_tree(SpinConfig(self.params.n, self.params.K, row)), float(pr)

    def expect(self, values):
        values = np.asarray(values, dtype=float)
        return math.fsum(self.weights * values) / self.partition

    def cov(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        ea, eb = self.expect(a), self.expect(b)
        return self.expect((a - ea) * (b - eb))

    def index_of(self, spins_row):
        key = np.asarray(spins_row, dtype=np.int8).tobytes()
        return _row_index(self.params.n, self.params.K)[key]


@lru_cache(maxsize=16)
def _row_index(n, K):
    return {row.tobytes(): i for i, row in enumerate(enumerate_spins(n, K))}


def exact_measure(params: ModelParams) -> ExactMeasure:
    n, K = params.n, params.K
    spins = enumerate_spins(n, K)
    w = gw_weights(spins, params.dist)
    if params.interaction.kind == TWO_CLASS:
        w = w * params.b ** favoured_link_counts(spins, params.x, n, K)
    elif params.beta != 0:
        w = w * np.exp(-params.beta * energies(spins, params.interaction, params.x, n, K))
    return ExactMeasure(params, spins, w, math.fsum(w))


def _require_two_class(params, u, v):
    if params.interaction.kind != TWO_CLASS and (u != 1 or v != 1):
        raise ParameterError("(u, v) grading requires the two-class interaction")


def partition_function(params: ModelParams, u=1.0, v=1.0) -> float:
    """``sum P_GW e^{-beta H} u^L v^Q`` over all trees of depth ``params.n``."""
    _require_two_class(params, u, v)
    m = exact_measure(params)
    if u == 1 and v == 1:
        return m.partition
    L, Q = external_counts(m.spins, params.n, params.K)
    return math.fsum(m.weights * float(u) ** L * float(v) ** Q)


def stream_partition_function(params: ModelParams, u=1.0, v=1.0) -> float:
    """Same as :func:`partition_function` without materializing trees (n <= 4)."""
    if params.interaction.kind != TWO_CLASS:
        raise ParameterError("streaming sum implemented for the two-class interaction")
    n, K = params.n, params.K
    _check_bound(n, K, STREAM_DEPTH)
    parent, rank, gen = site_tables(n, K)
    total, _ = tk.stream_partition(parent, rank, gen, K, n, params.dist.probs,
                                   params.b, params.x, float(u), float(v))
    return total


def _values(params, m, f):
    if isinstance(f, ObservableFn) or callable(f):
        return np.asarray(f(m.spins), dtype=float)
    return np.asarray(f, dtype=float)


def expectation(params: ModelParams, f) -> float:
    m = exact_measure(params)
    return m.expect(_values(params, m, f))


def covariance(params: ModelParams, f, g) -> float:
    m = exact_measure(params)
    return m.cov(_values(params, m, f), _values(params, m, g))


def exact_observables(params: ModelParams) -> dict:
    """Partition function and the external-node and favoured-link moments."""
    m = exact_measure(params)
    n, K = params.n, params.K
    L, Q = external_counts(m.spins, n, K)
    N22 = favoured_link_counts(m.spins, params.x, n, K)
    mean22 = m.expect(N22)
    return {
        "Xi": m.partition,
        "meanL": m.expect(L),
        "meanQ": m.expect(Q),
        "meanN": m.expect(L + Q),
        "meanN22": mean22,
        "varN22": m.expect((N22 - mean22) ** 2),
    }


def generation_offspring_mean(params: ModelParams, m: int) -> float:
    if not 0 <= m <= params.n:
        raise ParameterError(f"generation {m} outside 0..{params.n}")
    meas = exact_measure(params)
    return meas.expect(generation_offspring(meas.spins, m, params.K))


# --- soft-constraint measure on all spin configurations --------------------

def mu_lambda_tv(n, K, x, dist, lam, max_states=1_000_000) -> float:
    """Total variation between the soft measure at ``lam`` and the BGW measure."""
    if dist.K != K:
        raise ParameterError("distribution K mismatch")
    S = lattice_size(n, K)
    count = (K + 2) ** S
    if count > max_states:
        raise ValueError(f"{count} spin configurations exceed max_states={max_states}")
    parent, rank, _ = site_tables(n, K)
    chi = np.array(list(itertools.product(range(-1, K + 1), repeat=S)), dtype=np.int64)
    pv = chi[:, np.maximum(parent, 0)]
    pv[:, 0] = x
    ok = np.where(pv >= rank, chi >= 0, chi < 0)
    satisfied = ok.sum(axis=1)
    with np.errstate(divide="ignore"):
        logp = np.log(np.append(dist.probs, 1.0))[chi].sum(axis=1)
    logw = logp + lam * satisfied
    mu_lam = np.exp(logw - logsumexp(logw))
    valid = satisfied == S
    mu_gw = np.where(valid, np.exp(logp), 0.0)
    return 0.5 * math.fsum(np.abs(mu_lam - mu_gw))


# --- correlation inequality suites -----------------------------------------

def random_cone_observable(rng, S, K, max_terms=3, max_factors=3):
    """Random multinomial, nonnegative coefficients, in nondecreasing f(X_i) with f(-1)=0."""
    terms = []
    for _ in range(rng.integers(1, max_terms + 1)):
        coef = rng.exponential()
        factors = []
        for _ in range(rng.integers(1, max_factors + 1)):
            f = np.zeros(K + 2)
            f[1:] = np.cumsum(rng.exponential(size=K + 1) * (rng.random(K + 1) < 0.7))
            factors.append((int(rng.integers(S)), f))
        terms.append((coef, factors))

    def F(spins):
        idx = spins.astype(np.int64) + 1
        out = np.zeros(spins.shape[0])
        for coef, factors in terms:
            prod = np.full(spins.shape[0], coef)
            for site, f in factors:
                prod *= f[idx[:, site]]
            out += prod
        return out
    return ObservableFn(F, "cone", "random_cone")


def random_monotone_observable(rng, S, K):
    """``F = sum_i w_i 1(X_i >= t_i)`` with random thresholds and weights ``w >= 0``."""
    t = rng.integers(0, K + 1, size=S)
    w = rng.exponential(size=S) * (rng.random(S) < 0.5)

    def F(spins):
        return ((spins >= t) * w).sum(axis=1)
    return ObservableFn(F, "monotone", "random_monotone")


def inequality_suite(params: ModelParams, trials=500, seed=0, kind="griffiths") -> dict:
    """Exact covariances of random same-class observable pairs.

    ``kind="griffiths"`` pairs cone observables and requires ``-H`` in the cone;
    ``kind="fkg"`` pairs monotone observables and requires the lattice
    condition on ``phi``.
    """
    if kind == "griffiths":
        ok, why = griffiths_condition_check(params.interaction, params.x)
        make = random_cone_observable
    elif kind == "fkg":
        ok, why = fkg_condition_check(params.interaction)
        make = random_monotone_observable
    else:
        raise ParameterError(f"unknown suite {kind!r}")
    if not ok:
        raise ParameterError(f"{kind} hypothesis fails: {why}")
    m = exact_measure(params)
    rng = np.random.default_rng(seed)
    S = m.spins.shape[1]
    covs = np.empty(trials)
    for k in range(trials):
        F = make(rng, S, params.K)
        G = make(rng, S, params.K)
        covs[k] = m.cov(F(m.spins), G(m.spins))
    min_cov = float(covs.min()) if trials else math.inf
    return {
        "kind": kind,
        "min_covariance": min_cov,
        "trials": trials,
        "seed": seed,
        "pass": bool(min_cov >= -1e-12),
    }


__all__ = [
    "EnumerationBoundError", "ExactMeasure", "ObservableFn", "covariance", "enumerate_spins",
    "enumerate_trees", "exact_measure", "exact_observables", "expectation",
    "generation_offspring_mean", "inequality_suite", "iter_spin_chunks", "mu_lambda_tv",
    "partition_function", "stream_partition_function", "tree_count", "tree_to_spin",
]
