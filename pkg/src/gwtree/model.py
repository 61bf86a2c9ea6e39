"""Core types: offspring laws, pair interactions, trees and spin configurations.

Sites of the maximal K-ary tree of depth n are stored in breadth-first (heap)
order: the root is site 0 and the children of site ``s`` are ``K*s + r`` for
ranks ``r = 1..K``.  A spin array holds the offspring count of every present
node and ``-1`` on absent sites.

Depth convention: a tree of depth ``n`` carries offspring variables on every
present node of generations ``0..n``; the children of generation-``n`` nodes
are external slots without offspring variables.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

PROB_TOL = 1e-12

TWO_CLASS = "two_class"
GENERAL = "general"


class ParameterError(ValueError):
    """Invalid model parameters."""


class InvalidConfiguration(ValueError):
    """A spin configuration outside the support of the BGW measure."""

    def __init__(self, message, site=None, label=None):
        super().__init__(message)
        self.site = site
        self.label = label


def _readonly(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class OffspringDist:
    """Offspring law ``(p_0, ..., p_K)`` with bounded support, ``K >= 2``."""

    probs: np.ndarray
    mean: float = field(init=False)

    def __post_init__(self):
        p = _readonly(self.probs)
        if p.ndim != 1 or p.size < 3:
            raise ParameterError("need at least (p0, p1, p2)")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ParameterError(f"probabilities must be finite and >= 0: {p.tolist()}")
        total = math.fsum(p)
        if abs(total - 1.0) > PROB_TOL:
            raise ParameterError(f"probabilities sum to {total!r}, not 1")
        if p[-1] <= 0:
            raise ParameterError("last entry must be positive (K is the support maximum)")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "mean", math.fsum(k * pk for k, pk in enumerate(p)))

    @classmethod
    def normalized(cls, weights):
        """Build a law from nonnegative weights, renormalizing explicitly."""
        w = np.asarray(weights, dtype=float)
        w = np.trim_zeros(w, "b")
        return cls(w / math.fsum(w))

    @property
    def K(self) -> int:
        return self.probs.size - 1

    def __repr__(self):
        return f"OffspringDist({self.probs.tolist()})"


@dataclass(frozen=True, eq=False)
class Interaction:
    """Pair energy table ``phi(X, Y)`` for ``X, Y`` in ``{-1, ..., K}``.

    ``table[X + 1, Y + 1]`` holds ``phi(X, Y)``; row and column 0 (the absent
    value -1) must vanish.
    """

    table: np.ndarray
    beta: float = 0.0
    kind: str = GENERAL

    def __post_init__(self):
        t = _readonly(self.table)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] < 4:
            raise ParameterError("interaction table must be square with K >= 2")
        if np.any(t[0, :] != 0) or np.any(t[:, 0] != 0):
            raise ParameterError("phi(X, -1) and phi(-1, X) must be 0")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ParameterError(f"beta must be finite and >= 0, got {self.beta}")
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def two_class(cls, K, beta=None, b=None):
        """``phi(X, Y) = -1`` if both ``X, Y >= 2``; coupling ``b = exp(beta)``."""
        if beta is not None and b is not None:
            raise ParameterError("give beta or b, not both")
        if b is not None:
            if b < 1:
                raise ParameterError(f"b must be >= 1, got {b}")
            beta = math.log(b)
        t = np.zeros((K + 2, K + 2))
        t[3:, 3:] = -1.0
        return cls(t, 0.0 if beta is None else beta, TWO_CLASS)

    @classmethod
    def product(cls, f, g, beta=0.0):
        """``phi(X, Y) = -f(X) g(Y)`` from values of f, g on ``{0, ..., K}``."""
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        if f.shape != g.shape:
            raise ParameterError("f and g must have the same length")
        t = np.zeros((f.size + 1, f.size + 1))
        t[1:, 1:] = -np.outer(f, g)
        return cls(t, beta, GENERAL)

    @property
    def K(self) -> int:
        return self.table.shape[0] - 2

    @property
    def b(self) -> float:
        return math.exp(self.beta)

    def phi(self, X, Y):
        return self.table[X + 1, Y + 1]

    def with_beta(self, beta):
        return Interaction(self.table, beta, self.kind)


@dataclass(frozen=True, eq=False)
class ModelParams:
    dist: OffspringDist
    interaction: Interaction
    x: int = 1
    n: int = 0

    def __post_init__(self):
        K = self.dist.K
        if self.interaction.K != K:
            raise ParameterError(
                f"interaction is for K={self.interaction.K}, distribution has K={K}")
        if not 1 <= self.x <= K:
            raise ParameterError(f"boundary x must be in 1..{K}, got {self.x}")
        if self.n < 0:
            raise ParameterError(f"depth must be >= 0, got {self.n}")

    @property
    def K(self):
        return self.dist.K

    @property
    def beta(self):
        return self.interaction.beta

    @property
    def b(self):
        return self.interaction.b

    def replace(self, **changes):
        kw = dict(dist=self.dist, interaction=self.interaction, x=self.x, n=self.n)
        kw.update(changes)
        return ModelParams(**kw)


def two_class_params(p, b=1.0, x=1, n=0):
    """Shorthand for the two-class model with coupling ``b``."""
    dist = p if isinstance(p, OffspringDist) else OffspringDist(p)
    return ModelParams(dist, Interaction.two_class(dist.K, b=b), x=x, n=n)


# --- maximal tree geometry -------------------------------------------------

def lattice_size(n, K):
    """Number of sites of the maximal tree: ``(K**(n+1) - 1) / (K - 1)``."""
    return (K ** (n + 1) - 1) // (K - 1)


def generation_offset(m, K):
    return (K ** m - 1) // (K - 1)


@lru_cache(maxsize=64)
def site_tables(n, K):
    """Return read-only ``(parent, rank, generation)`` arrays for the maximal tree."""
    S = lattice_size(n, K)
    s = np.arange(S)
    parent = np.where(s > 0, (s - 1) // K, -1)
    rank = np.where(s > 0, (s - 1) % K + 1, 1)
    gen = np.zeros(S, dtype=np.int64)
    for m in range(n + 1):
        gen[generation_offset(m, K):generation_offset(m + 1, K)] = m
    for a in (parent, rank, gen):
        a.flags.writeable = False
    return parent.astype(np.int64), rank.astype(np.int64), gen


def label_to_site(label, K):
    s = 0
    for d in label:
        if not 1 <= d <= K:
            raise ParameterError(f"label digit {d} outside 1..{K}")
        s = K * s + d
    return s


def site_to_label(s, K):
    digits = []
    while s > 0:
        digits.append((s - 1) % K + 1)
        s = (s - 1) // K
    return tuple(reversed(digits))


# --- trees -----------------------------------------------------------------

Label = tuple


@dataclass(frozen=True, eq=False)
class Tree:
    """Planar rooted tree of depth ``n`` in Neveu labels.

    ``offspring`` maps each present label (tuple of ranks, root ``()``) with
    generation at most ``n`` to its offspring count.
    """

    n: int
    offspring: Mapping[Label, int]

    def __post_init__(self):
        off = {tuple(k): int(v) for k, v in dict(self.offspring).items()}
        if () not in off:
            raise ParameterError("root missing")
        for lab, X in off.items():
            if len(lab) > self.n:
                raise ParameterError(f"label {lab} deeper than n={self.n}")
            if X < 0:
                raise ParameterError(f"negative offspring at {lab}")
            if lab:
                par = lab[:-1]
                if par not in off or not 1 <= lab[-1] <= off[par]:
                    raise ParameterError(f"label {lab} has no matching parent slot")
            if len(lab) < self.n:
                for r in range(1, X + 1):
                    if lab + (r,) not in off:
                        raise ParameterError(f"child {lab + (r,)} missing")
        object.__setattr__(self, "offspring", MappingProxyType(off))

    def __eq__(self, other):
        return isinstance(other, Tree) and self.n == other.n and dict(self.offspring) == dict(other.offspring)

    def __hash__(self):
        return hash((self.n, frozenset(self.offspring.items())))

    def __len__(self):
        return len(self.offspring)

    @property
    def max_offspring(self):
        return max(self.offspring.values())

    def nodes(self):
        """Labels in breadth-first (Neveu) order."""
        return sorted(self.offspring, key=lambda lab: (len(lab), lab))

    def external_nodes(self):
        """Number of generation-(n+1) slots."""
        return sum(X for lab, X in self.offspring.items() if len(lab) == self.n)

    def to_json(self, x=None):
        sep = "" if self.max_offspring <= 9 else "."
        obj = {"n": self.n}
        if x is not None:
            obj["x"] = int(x)
        obj["offspring"] = {sep.join(map(str, lab)): X for lab, X in
                            ((lab, self.offspring[lab]) for lab in self.nodes())}
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text):
        """Parse ``{"n", "x"?, "offspring"}``; returns ``(tree, x)``."""
        obj = json.loads(text) if isinstance(text, str) else text
        off = {}
        for key, X in obj["offspring"].items():
            if "." in key:
                lab = tuple(int(d) for d in key.split("."))
            else:
                lab = tuple(int(d) for d in key)
            off[lab] = int(X)
        return cls(int(obj["n"]), off), obj.get("x")


@dataclass(frozen=True, eq=False)
class SpinConfig:
    """Spins on the maximal tree of depth ``n``; values in ``{-1, ..., K}``."""

    n: int
    K: int
    spins: np.ndarray

    def __post_init__(self):
        s = np.array(self.spins, dtype=np.int8)
        if s.shape != (lattice_size(self.n, self.K),):
            raise ParameterError(f"expected {lattice_size(self.n, self.K)} spins, got {s.shape}")
        if np.any(s < -1) or np.any(s > self.K):
            raise ParameterError("spin values must lie in -1..K")
        s.flags.writeable = False
        object.__setattr__(self, "spins", s)

    def __eq__(self, other):
        return (isinstance(other, SpinConfig) and (self.n, self.K) == (other.n, other.K)
                and np.array_equal(self.spins, other.spins))

    def __hash__(self):
        return hash((self.n, self.K, self.spins.tobytes()))


def _check_K(tree, K):
    if tree.max_offspring > K:
        raise ParameterError(f"tree uses {tree.max_offspring} offspring but K={K}")


def gw_probability(tree: Tree, dist: OffspringDist) -> float:
    """Product of ``p[X_i]`` over the nodes of the tree."""
    _check_K(tree, dist.K)
    return math.prod(dist.probs[X] for X in tree.offspring.values())


def _parent_value(tree, lab, x):
    return x if not lab else tree.offspring[lab[:-1]]


def hamiltonian(tree: Tree, params: ModelParams) -> float:
    if tree.n != params.n:
        raise ParameterError(f"tree depth {tree.n} != params depth {params.n}")
    _check_K(tree, params.K)
    phi = params.interaction.table
    return math.fsum(phi[_parent_value(tree, lab, params.x) + 1, X + 1]
                     for lab, X in tree.offspring.items())


def favoured_links(tree: Tree, x: int) -> int:
    """Number of links with both endpoints having at least two offspring."""
    return sum(1 for lab, X in tree.offspring.items()
               if X >= 2 and _parent_value(tree, lab, x) >= 2)


def gibbs_weight(tree: Tree, params: ModelParams) -> float:
    """Unnormalized weight ``P_GW(tree) * exp(-beta H)``."""
    w = gw_probability(tree, params.dist)
    if params.interaction.kind == TWO_CLASS:
        if tree.n != params.n:
            raise ParameterError(f"tree depth {tree.n} != params depth {params.n}")
        return w * params.b ** favoured_links(tree, params.x)
    return w * math.exp(-params.beta * hamiltonian(tree, params))


def tree_to_spin(tree: Tree, K: int) -> SpinConfig:
    _check_K(tree, K)
    spins = np.full(lattice_size(tree.n, K), -1, dtype=np.int8)
    for lab, X in tree.offspring.items():
        spins[label_to_site(lab, K)] = X
    return SpinConfig(tree.n, K, spins)


def _local_ok(spins, parent, rank, x):
    pv = np.where(parent >= 0, spins[np.maximum(parent, 0)], x)
    present = spins >= 0
    return np.where(pv >= rank, present, ~present)


def spin_to_tree(spin: SpinConfig) -> Tree:
    parent, rank, _ = site_tables(spin.n, spin.K)
    ok = _local_ok(spin.spins.astype(np.int64), parent, rank, 1)
    if not ok.all():
        s = int(np.flatnonzero(~ok)[0])
        lab = site_to_label(s, spin.K)
        raise InvalidConfiguration(
            f"site {s} (label {''.join(map(str, lab)) or 'root'}) violates the tree constraint",
            site=s, label=lab)
    off = {site_to_label(int(s), spin.K): int(spin.spins[s])
           for s in np.flatnonzero(spin.spins >= 0)}
    return Tree(spin.n, off)


def gw_spin_hamiltonian(spin: SpinConfig, x: int) -> int:
    """Minus the number of sites whose local tree constraint holds."""
    if x < 1:
        raise ParameterError("boundary x must be >= 1")
    parent, rank, _ = site_tables(spin.n, spin.K)
    return -int(_local_ok(spin.spins.astype(np.int64), parent, rank, x).sum())


def fkg_condition_check(interaction: Interaction):
    """Check the lattice condition on ``phi``.

    Returns ``(True, None)`` or ``(False, (X, Y, X2, Y2))`` for the first
    quadruple with ``phi(X,Y) + phi(X2,Y2) < phi(min, min) + phi(max, max)``.
    """
    t = interaction.table
    vals = range(-1, interaction.K + 1)
    for X, Y, X2, Y2 in itertools.product(vals, repeat=4):
        lhs = t[X + 1, Y + 1] + t[X2 + 1, Y2 + 1]
        rhs = t[min(X, X2) + 1, min(Y, Y2) + 1] + t[max(X, X2) + 1, max(Y, Y2) + 1]
        if lhs < rhs - 1e-14:
            return False, (X, Y, X2, Y2)
    return True, None


def griffiths_condition_check(interaction: Interaction, x: int = 1):
    """Check that ``-H`` lies in the positive cone of nondecreasing spin functions.

    ``-phi`` vanishes on the absent value, so it belongs to the cone iff all
    mixed differences ``Delta_X Delta_Y (-phi)`` are nonnegative.
    """
    h = -np.asarray(interaction.table)
    mixed = h[1:, 1:] - h[:-1, 1:] - h[1:, :-1] + h[:-1, :-1]
    bad = np.argwhere(mixed < -1e-14)
    if bad.size:
        X, Y = bad[0]
        return False, f"negative mixed difference of -phi at (X, Y) = ({X}, {Y})"
    return True, None
