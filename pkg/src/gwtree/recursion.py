"""Partition functions and moments by iterating the two-dimensional map.

For the two-class interaction with coupling ``b``, the generating functions of
depth-``n`` trees graded by external slots satisfy
``(Xi^1_n, Xi^2_n)(u, v) = F^(n+1)(u, v)`` with

    F(u, v) = (p0 + p1 u + sum_k p_k v^k,  p0 + p1 u + b sum_k p_k v^k),

so ``u_{n+1}`` and ``v_{n+1}`` (iterates from ``(1, 1)``) are the partition
functions for boundary ``x = 1`` and ``x >= 2``.  Derivatives of the iterates
with respect to the start point and to ``b`` give the mean external-node
counts and the moments of the number of favoured links.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from . import _rec_kernels as rk
from .model import TWO_CLASS, ModelParams, OffspringDist, ParameterError

BLOCKS = ("leaves", "energy", "variance")
_BLOCK_SLOTS = {"leaves": (2, 3, 4, 5), "energy": (6, 7), "variance": (8, 9)}
STATE_NAMES = ("u", "v", "du_du", "dv_du", "du_dv", "dv_dv",
               "du_db", "dv_db", "d2u_db2", "d2v_db2")


class RecursionOverflow(ArithmeticError):
    """Linear-space iteration left the double range; use the log-space variant."""

    def __init__(self, last_step, trajectory):
        super().__init__(
            f"non-finite value after step {last_step}; rerun with log_iterate")
        self.last_step = last_step
        self.trajectory = trajectory


def _coef(dist):
    return dist.probs if isinstance(dist, OffspringDist) else OffspringDist(dist).probs


def f_map(state, dist, b):
    """One application of the map to ``(u, v)``."""
    u, v = state
    p = _coef(dist)
    if b < 1:
        warnings.warn("b < 1 (antiferromagnetic coupling) is outside the studied range")
    k = np.arange(2, p.size)
    P = float(np.sum(p[2:] * float(v) ** k))
    base = p[0] + p[1] * u
    return base + P, base + b * P


def df_map(state, dist, b):
    """Jacobian of :func:`f_map` at ``(u, v)``."""
    _, v = state
    p = _coef(dist)
    k = np.arange(2, p.size)
    D = float(np.sum(k * p[2:] * float(v) ** (k - 1)))
    return np.array([[p[1], D], [p[1], b * D]])


def partition_uv(dist, b, n, u=1.0, v=1.0, route="external"):
    """``(Xi^1_n(u, v), Xi^2_n(u, v))`` by either recursion.

    ``route="external"`` iterates the map ``n`` times from ``(u, v)`` and
    then applies the depth-0 generating function; ``route="root"`` starts from
    the depth-0 functions and grows the tree at the root.
    """
    p = _coef(dist)
    K = p.size - 1
    if route == "external":
        for _ in range(n):
            u, v = f_map((u, v), p, b)
        return f_map((u, v), p, b)
    if route == "root":
        x1, x2 = f_map((u, v), p, b)
        for _ in range(n):
            big = sum(p[k] * x2 ** k for k in range(2, K + 1))
            x1, x2 = p[0] + p[1] * x1 + big, p[0] + p[1] * x1 + b * big
        return x1, x2
    raise ValueError(f"unknown route {route!r}")


@dataclass(frozen=True)
class RecState:
    n: int
    u: float
    v: float
    d_uv: Optional[tuple] = None   # (du/du0, dv/du0, du/dv0, dv/dv0)
    d_b: Optional[tuple] = None    # (du/db, dv/db)
    d_bb: Optional[tuple] = None   # (d2u/db2, d2v/db2)


@dataclass(frozen=True)
class LogRecState:
    """Log coordinates; derivative blocks are divided by ``u`` or ``v``."""

    n: int
    Lu: float
    Lv: float
    d_uv: Optional[tuple] = None
    d_b: Optional[tuple] = None
    d_bb: Optional[tuple] = None


@dataclass(frozen=True)
class Observables:
    n: int
    x: int
    meanL: float
    meanQ: float
    meanN: float
    meanN22: float
    varN22: float
    psi: float
    mean_energy: float
    energy_degenerate: bool


def _normalize_blocks(blocks):
    blocks = tuple(blocks)
    for blk in blocks:
        if blk not in BLOCKS:
            raise ParameterError(f"unknown block {blk!r}; choose from {BLOCKS}")
    if "variance" in blocks and "energy" not in blocks:
        blocks += ("energy",)
    return tuple(b for b in BLOCKS if b in blocks)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded iterates: ``steps[i]`` and the state row ``data[i]``."""

    dist: OffspringDist
    b: float
    blocks: tuple
    logspace: bool
    steps: np.ndarray
    data: np.ndarray

    def __len__(self):
        return self.steps.size

    def __iter__(self) -> Iterator:
        for i in range(self.steps.size):
            yield self.state(i)

    def state(self, i):
        row = self.data[i]
        kw = {}
        if "leaves" in self.blocks:
            kw["d_uv"] = tuple(row[2:6])
        if "energy" in self.blocks:
            kw["d_b"] = tuple(row[6:8])
        if "variance" in self.blocks:
            kw["d_bb"] = tuple(row[8:10])
        cls = LogRecState if self.logspace else RecState
        return cls(int(self.steps[i]), row[0], row[1], **kw)

    @property
    def final(self):
        return self.state(self.steps.size - 1)

    def log_uv(self):
        if self.logspace:
            return self.data[:, 0], self.data[:, 1]
        with np.errstate(divide="ignore"):
            return np.log(self.data[:, 0]), np.log(self.data[:, 1])

    def column(self, name):
        """Raw (linear-space) column by name, e.g. ``"u"`` or ``"dv_db"``."""
        j = STATE_NAMES.index(name)
        if not self.logspace:
            return self.data[:, j]
        Lu, Lv = self.data[:, 0], self.data[:, 1]
        with np.errstate(over="ignore"):
            if j < 2:
                return np.exp(Lu if j == 0 else Lv)
            return self.data[:, j] * np.exp(Lu if j % 2 == 0 else Lv)

    def observables(self, x):
        """Per-depth observables for the rows with ``step >= 1``.

        Row with step ``n + 1`` describes trees of depth ``n``.  Returns a dict
        of arrays keyed like :class:`Observables`, plus ``"n"``.
        """
        sel = self.steps >= 1
        d = self.data[sel]
        n = self.steps[sel].astype(np.int64) - 1
        K = self.dist.K
        row = 0 if x == 1 else 1
        if self.logspace:
            rel = d
        else:
            rel = d.copy()
            rel[:, 2::2] /= d[:, [0]]
            rel[:, 3::2] /= d[:, [1]]
        Lz = self.data[sel, row] if self.logspace else np.log(d[:, row])
        out = {"n": n}
        nan = np.full(n.size, np.nan)
        if "leaves" in self.blocks:
            out["meanL"] = rel[:, 2 + row]
            out["meanQ"] = rel[:, 4 + row]
            out["meanN"] = out["meanL"] + out["meanQ"]
        else:
            out["meanL"] = out["meanQ"] = out["meanN"] = nan
        if "energy" in self.blocks:
            out["meanN22"] = self.b * rel[:, 6 + row]
            out["mean_energy"] = -out["meanN22"]
        else:
            out["meanN22"] = out["mean_energy"] = nan
        if "variance" in self.blocks:
            m = out["meanN22"]
            out["varN22"] = self.b ** 2 * rel[:, 8 + row] + m - m * m
        else:
            out["varN22"] = nan
        log_sites = (n + 1) * math.log(K) - math.log(K - 1) + np.log1p(-float(K) ** (-(n + 1.0)))
        out["psi"] = 0.0 - Lz * np.exp(-log_sites)
        return out


def _check_params(params):
    if params.interaction.kind != TWO_CLASS:
        raise ParameterError("the recursion requires the two-class interaction")


def _start(logspace):
    s = np.zeros(rk.NSTATE)
    if not logspace:
        s[:2] = 1.0
    s[2] = 1.0  # du/du0
    s[5] = 1.0  # dv/dv0
    return s


def run(dist, b, n_max, blocks=(), every=1, logspace=False, start=None):
    """Iterate from ``(1, 1)`` (or ``start``) and record every ``every`` steps.

    Raises :class:`RecursionOverflow` when a tracked quantity leaves the double
    range; the exception carries the trajectory up to the last finite step.
    """
    if n_max < 0:
        raise ParameterError("n_max must be >= 0")
    if every < 1:
        raise ParameterError("every must be >= 1")
    dist = dist if isinstance(dist, OffspringDist) else OffspringDist(dist)
    if b <= 0:
        raise ParameterError("b must be positive")
    if b < 1:
        warnings.warn("b < 1 (antiferromagnetic coupling) is outside the studied range")
    blocks = _normalize_blocks(blocks)
    mask = np.zeros(rk.NSTATE, dtype=np.bool_)
    mask[:2] = True
    for blk in blocks:
        mask[list(_BLOCK_SLOTS[blk])] = True
    state = _start(logspace)
    if start is not None:
        u0, v0 = start
        state[0], state[1] = (math.log(u0), math.log(v0)) if logspace else (u0, v0)
        if logspace:
            state[2] /= u0
            state[5] /= v0
    if logspace:
        with np.errstate(divide="ignore"):
            coef = np.log(dist.probs)
    else:
        coef = dist.probs
    rec = np.empty((n_max // every + 2, rk.NSTATE + 1))
    with np.errstate(over="ignore", invalid="ignore"):
        last, r = rk._run(logspace, coef, float(b), state, int(n_max), int(every), mask, rec)
    rec = rec[:r]
    traj = Trajectory(dist, float(b), blocks, logspace, rec[:, 0].astype(np.int64), rec[:, 1:])
    if last < n_max:
        raise RecursionOverflow(last, traj)
    return traj


def iterate(params: ModelParams, n_max, blocks=(), every=1) -> Trajectory:
    """Linear-space iterates ``0..n_max`` for the two-class model."""
    _check_params(params)
    return run(params.dist, params.b, n_max, blocks, every)


def log_iterate(params: ModelParams, n_max, blocks=(), every=1) -> Trajectory:
    """Same recursion carried in ``(log u, log v)`` with relative derivatives."""
    _check_params(params)
    return run(params.dist, params.b, n_max, blocks, every, logspace=True)


def advance(dist, b, n, blocks=(), logspace=False):
    """State after ``n`` steps without keeping the path."""
    return run(dist, b, n, blocks, every=max(n, 1), logspace=logspace).final


def observables(params: ModelParams, n=None, logspace=False) -> Observables:
    """Moments at depth ``n`` (default ``params.n``) and boundary ``params.x``."""
    _check_params(params)
    n = params.n if n is None else n
    traj = run(params.dist, params.b, n + 1, BLOCKS, every=n + 1, logspace=logspace)
    o = traj.observables(min(params.x, 2))
    i = -1
    degenerate = params.beta == 0
    return Observables(
        n=n, x=params.x,
        meanL=float(o["meanL"][i]), meanQ=float(o["meanQ"][i]), meanN=float(o["meanN"][i]),
        meanN22=float(o["meanN22"][i]), varN22=float(o["varN22"][i]), psi=float(o["psi"][i]),
        mean_energy=float(o["mean_energy"][i]), energy_degenerate=degenerate,
    )


def partition(params: ModelParams, n=None):
    """``Xi^x_n(1, 1)``."""
    n = params.n if n is None else n
    s = advance(params.dist, params.b, n + 1)
    return s.u if params.x == 1 else s.v


__all__ = [
    "BLOCKS", "LogRecState", "Observables", "RecState", "RecursionOverflow", "Trajectory",
    "advance", "df_map", "f_map", "iterate", "log_iterate", "observables", "partition",
    "partition_uv", "run",
]
