"""Markov chains leaving the interacting tree measure invariant.

Two chains are provided:

* ``global``: propose a fresh BGW tree of depth ``n`` and accept with
  ``exp(-beta (H' - H)_+)``;
* ``local``: pick a generation ``m ~ lam``, then ranks ``i_1..i_m`` where rank
  ``l`` has probability ``p_l`` (with probability ``p_0`` the step is void),
  flip a fair coin and move ``X_i`` by one with probability ``p_{X_i +- 1}``
  (growing attaches a fresh BGW subtree at the new rightmost child, shrinking
  deletes the rightmost child's subtree), then accept with
  ``exp(-beta (H' - H)_+)``.

All randomness is drawn from ``numpy.random.Generator(PCG64(seed))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _chain_kernels as ck
from . import oracle
from .model import (
    ModelParams, ParameterError, SpinConfig, Tree, lattice_size, site_tables, spin_to_tree,
    tree_to_spin,
)

GENERATOR = "numpy.random.PCG64"
_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class ChainConfig:
    params: ModelParams
    kind: str = "local"
    lam: Optional[Sequence[float]] = None
    steps: int = 10_000
    seed: int = 0
    thin: int = 1
    burn_in: int = 0
    accelerated: bool = False

    def __post_init__(self):
        if self.kind not in ("local", "global"):
            raise ParameterError(f"unknown chain kind {self.kind!r}")
        if self.steps < 0 or self.thin < 1 or self.burn_in < 0:
            raise ParameterError("steps, burn_in must be >= 0 and thin >= 1")
        object.__setattr__(self, "lam", generation_weights(self.params.n, self.lam))

    def describe(self):
        return {
            "kind": self.kind, "p": self.params.dist.probs.tolist(), "b": self.params.b,
            "beta": self.params.beta, "x": self.params.x, "n": self.params.n,
            "lam": list(self.lam), "steps": self.steps, "thin": self.thin,
            "burn_in": self.burn_in, "accelerated": self.accelerated,
            "seed": self.seed, "generator": GENERATOR,
        }


def generation_weights(n, lam=None):
    """Validate ``lam`` over generations ``0..n`` (uniform by default)."""
    if lam is None:
        return tuple([1.0 / (n + 1)] * (n + 1))
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (n + 1,):
        raise ParameterError(f"lam needs {n + 1} entries")
    if np.any(lam < 0) or abs(math.fsum(lam) - 1) > 1e-12:
        raise ParameterError("lam must be a probability vector")
    if lam[0] <= 0:
        raise ParameterError("lam[0] must be positive")
    return tuple(lam.tolist())


class _Engine:
    """Kernel arguments for one parameter set."""

    def __init__(self, params, lam=None, accelerated=False):
        self.params = params
        n, K = params.n, params.K
        self.n, self.K, self.x = n, K, params.x
        self.S = lattice_size(n, K)
        _, _, self.gen = site_tables(n, K)
        p = params.dist.probs
        self.p = p
        self.cdf = np.cumsum(p)
        self.cdf[-1] = 1.0
        lam = generation_weights(n, lam)
        self.lam_cdf = np.cumsum(lam)
        self.lam_cdf[-1] = 1.0
        self.bphi = params.beta * params.interaction.table
        self.scale = float(p.max()) if accelerated else 1.0
        self.need = n + 4 + self.S

    def initial(self, stream):
        spins = np.full(self.S, -1, dtype=np.int8)
        buf = stream.take(self.S)
        ck.draw_subtree(spins, 0, 0, self.n, self.K, self.cdf, buf, 0)
        return spins


class _UniformStream:
    """Sequential uniforms from one generator, served in blocks."""

    def __init__(self, seed):
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.buf = np.empty(0)
        self.pos = 0

    def take(self, k):
        self.ensure(k)
        out = self.buf[self.pos:self.pos + k]
        self.pos += k
        return out

    def ensure(self, k):
        if self.buf.size - self.pos < k:
            self.buf = np.concatenate([self.buf[self.pos:], self.rng.random(max(_CHUNK, k))])
            self.pos = 0


def _advance(engine, kind, spins, stream, steps, thin=1, record=False, t0=0, counters=None):
    """Run ``steps`` steps in place; returns the recorded rows (or None)."""
    rec = np.empty((steps // thin + 1 if record else 0, engine.S), dtype=np.int8)
    if counters is None:
        counters = np.zeros(2, dtype=np.int64)
    scratch = np.empty(engine.S, dtype=np.int8)
    done = rows = 0
    need = engine.need if kind == "local" else engine.S + 1
    while done < steps:
        stream.ensure(need)
        chunk_rec = rec[rows:]
        if kind == "local":
            d, pos, r = ck.local_steps(
                spins, engine.gen, engine.n, engine.K, engine.x, engine.p, engine.cdf,
                engine.lam_cdf, engine.bphi, engine.scale, stream.buf, stream.pos,
                t0 + done, steps - done, thin, chunk_rec, counters, scratch)
        else:
            d, pos, r = ck.global_steps(
                spins, engine.n, engine.K, engine.x, engine.cdf, engine.bphi,
                stream.buf, stream.pos, t0 + done, steps - done, thin, chunk_rec,
                counters, scratch)
        stream.pos = pos
        done += d
        rows += r
    return rec[:rows] if record else None


def _one_step(tree, params, rng, kind, lam=None, accelerated=False):
    if tree.n != params.n:
        raise ParameterError(f"tree depth {tree.n} != params depth {params.n}")
    engine = _Engine(params, lam, accelerated)
    spins = np.array(tree_to_spin(tree, params.K).spins)
    need = engine.need if kind == "local" else engine.S + 1
    stream = _UniformStream(0)
    stream.buf = rng.random(need)
    _advance(engine, kind, spins, stream, 1)
    return spin_to_tree(SpinConfig(params.n, params.K, spins))


def global_step(tree: Tree, params: ModelParams, rng) -> Tree:
    """One step of the independence chain."""
    return _one_step(tree, params, rng, "global")


def local_step(tree: Tree, params: ModelParams, lam=None, rng=None, accelerated=False) -> Tree:
    """One step of the single-site chain."""
    return _one_step(tree, params, rng, "local", lam, accelerated)


@dataclass
class ChainSample:
    config: ChainConfig
    states: np.ndarray          # thinned spin rows after burn-in
    proposals: int
    accepted: int

    @property
    def acceptance(self):
        return self.accepted / self.proposals if self.proposals else 0.0


def sample_chain(config: ChainConfig, start: Optional[Tree] = None) -> ChainSample:
    """Run a chain, keeping every ``thin``-th state after ``burn_in`` steps."""
    params = config.params
    engine = _Engine(params, config.lam, config.accelerated)
    stream = _UniformStream(config.seed)
    if start is None:
        spins = engine.initial(stream)
    else:
        spins = np.array(tree_to_spin(start, params.K).spins)
    counters = np.zeros(2, dtype=np.int64)
    if config.burn_in:
        _advance(engine, config.kind, spins, stream, config.burn_in)
    states = _advance(engine, config.kind, spins, stream, config.steps, config.thin,
                      record=True, counters=counters)
    return ChainSample(config, states, int(counters[0]), int(counters[1]))


# --- statistics --------------------------------------------------------------

def effective_sample_size(x) -> float:
    """Autocorrelation ESS with Geyer's initial monotone sequence truncation."""
    x = np.asarray(x, dtype=float)
    N = x.size
    if N == 0:
        return 0.0
    y = x - x.mean()
    var = float(np.dot(y, y)) / N
    if N < 4 or var <= 0:
        return float(N)
    f = np.fft.rfft(y, n=2 * N)
    acf = np.fft.irfft(f * np.conj(f))[:N] / (N * var)
    m = (N - 1) // 2
    pairs = acf[0:2 * m:2] + acf[1:2 * m:2]
    neg = np.flatnonzero(pairs <= 0)
    pairs = pairs[:neg[0]] if neg.size else pairs
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    return float(min(N, N / max(tau, 1e-12)))


@dataclass
class ObservableStats:
    mean: float
    variance: float
    ess: float
    stderr: float


@dataclass
class ChainStats:
    config: dict
    steps: int
    acceptance: float
    observables: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "estimates": {k: s.mean for k, s in self.observables.items()},
            "stderr": {k: s.stderr for k, s in self.observables.items()},
            "ess": {k: s.ess for k, s in self.observables.items()},
            "acceptance": self.acceptance,
            "seed": self.config["seed"],
            "generator": self.config["generator"],
            "config": self.config,
        }


def builtin_observables(params: ModelParams):
    """Standard observables on spin rows: external nodes, favoured links, energy."""
    n, K, x = params.n, params.K, params.x

    def L(s):
        return oracle.external_counts(s, n, K)[0]

    def Q(s):
        return oracle.external_counts(s, n, K)[1]

    return {
        "L": L,
        "Q": Q,
        "N": lambda s: L(s) + Q(s),
        "N22": lambda s: oracle.favoured_link_counts(s, x, n, K),
        "H": lambda s: oracle.energies(s, params.interaction, x, n, K),
        "X0": lambda s: s[:, 0].astype(float),
    }


def summarize(values) -> ObservableStats:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return ObservableStats(math.nan, math.nan, 0.0, math.nan)
    ess = effective_sample_size(v)
    var = float(v.var())
    return ObservableStats(float(v.mean()), var, ess, math.sqrt(var / ess) if ess > 0 else math.nan)


def run_chain(config: ChainConfig, observables=("L", "Q", "N", "N22")) -> ChainStats:
    """Run a chain and summarize the requested observables.

    ``observables`` holds builtin names or ``(name, fn)`` pairs with ``fn``
    evaluated on arrays of spin rows.
    """
    sample = sample_chain(config)
    table = builtin_observables(config.params)
    stats = ChainStats(config.describe(), config.steps, sample.acceptance)
    for obs in observables:
        name, fn = (obs, table[obs]) if isinstance(obs, str) else obs
        stats.observables[name] = summarize(fn(sample.states) if len(sample.states) else [])
    return stats


def empirical_law(states, params: ModelParams) -> np.ndarray:
    """Visit frequencies over the enumerated depth-``n`` trees (oracle order)."""
    meas = oracle.exact_measure(params)
    rows, counts = np.unique(np.asarray(states, dtype=np.int8), axis=0, return_counts=True)
    law = np.zeros(meas.spins.shape[0])
    for row, c in zip(rows, counts):
        law[meas.index_of(row)] += c
    return law / max(law.sum(), 1)


def tv_distance(a, b) -> float:
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


# --- exact transition matrices -------------------------------------------------

MATRIX_DEPTH = 2


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    states: np.ndarray   # spin rows in oracle enumeration order
    P: np.ndarray


def _subtree_sites(c, d, K):
    """Global site indices of the depth-``d`` subtree rooted at ``c``, in BFS order."""
    out = []
    first = c
    for t in range(d + 1):
        out.extend(range(first, first + K ** t))
        first = first * K + 1
    return np.array(out, dtype=np.int64)


def _label_weight(s, K, p):
    w = 1.0
    while s > 0:
        w *= p[(s - 1) % K + 1]
        s = (s - 1) // K
    return w


def transition_matrix(params: ModelParams, lam=None, kind="local", accelerated=False):
    """Exact one-step transition probabilities over all depth-``n`` trees."""
    n, K = params.n, params.K
    if n > MATRIX_DEPTH:
        raise ParameterError(f"transition matrix limited to n <= {MATRIX_DEPTH}")
    states = oracle.enumerate_spins(n, K)
    M = states.shape[0]
    H = oracle.energies(states, params.interaction, params.x, n, K)
    beta = params.beta
    p = params.dist.probs
    P = np.zeros((M, M))
    if kind == "global":
        q = oracle.gw_weights(states, params.dist)
        for i in range(M):
            P[i] = q * np.minimum(1.0, np.exp(-beta * (H - H[i])))
            P[i, i] = 0.0
            P[i, i] = 1.0 - math.fsum(P[i])
        return TransitionMatrix(states, P)
    if kind != "local":
        raise ParameterError(f"unknown chain kind {kind!r}")
    lam = generation_weights(n, lam)
    scale = float(p.max()) if accelerated else 1.0
    _, _, gen = site_tables(n, K)
    index = {row.tobytes(): i for i, row in enumerate(states)}
    subtrees = {d: (oracle.enumerate_spins(d, K), oracle.gw_weights(oracle.enumerate_spins(d, K), params.dist))
                for d in range(n)}
    for i, row in enumerate(states):
        for s in np.flatnonzero(row >= 0):
            g = gen[s]
            reach = lam[g] * _label_weight(s, K, p)
            X = int(row[s])
            for sigma in (1, -1):
                Xn = X + sigma
                if not 0 <= Xn <= K:
                    continue
                base = reach * 0.5 * p[Xn] / scale
                moves = []
                if g == n:
                    new = row.copy()
                    new[s] = Xn
                    moves.append((new, 1.0))
                elif sigma == 1:
                    c = K * s + Xn
                    sites = _subtree_sites(c, n - g - 1, K)
                    subs, w = subtrees[n - g - 1]
                    for sub, ws in zip(subs, w):
                        new = row.copy()
                        new[s] = Xn
                        new[sites] = sub
                        moves.append((new, ws))
                else:
                    new = row.copy()
                    new[s] = Xn
                    new[_subtree_sites(K * s + X, n - g - 1, K)] = -1
                    moves.append((new, 1.0))
                for new, ws in moves:
                    j = index[new.tobytes()]
                    dH = beta * (H[j] - H[i])
                    P[i, j] += base * ws * min(1.0, math.exp(-dH))
        P[i, i] += 1.0 - math.fsum(P[i])
    return TransitionMatrix(states, P)


def is_irreducible(P) -> bool:
    """Every state reaches every other along positive entries."""
    A = (np.asarray(P) > 0)
    M = A.shape[0]
    for start in (0,):
        for mat in (A, A.T):
            seen = np.zeros(M, dtype=bool)
            seen[start] = True
            frontier = [start]
            while frontier:
                nxt = np.flatnonzero(mat[frontier].any(axis=0) & ~seen)
                seen[nxt] = True
                frontier = list(nxt)
            if not seen.all():
                return False
    return True


__all__ = [
    "ChainConfig", "ChainSample", "ChainStats", "TransitionMatrix", "effective_sample_size",
    "empirical_law", "global_step", "is_irreducible", "local_step", "run_chain",
    "sample_chain", "transition_matrix", "tv_distance",
]
