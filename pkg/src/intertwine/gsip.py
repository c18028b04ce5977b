"""Generalized symmetric inclusion process on E = [0, 1).

A particle at ``x_i`` jumps to a fresh location drawn from ``c(x_i, y)
alpha(dy)`` or onto another particle ``x_j`` at rate ``c(x_i, x_j)``.  The
intensity ``alpha`` is a finite combination of atoms and a piecewise-constant
density; the conductance is constant or piecewise constant on a partition of
``[0, 1)`` into intervals.  Both choices keep every rate and every relocation
law in closed form, so simulation needs no rejection step.

Random streams are Philox generators keyed by ``(seed, stream)``: scalar
trajectory ``r`` uses stream ``r`` and the batch simulators use stream ``b``
for block ``b`` of a fixed size, so results do not depend on thread count.
"""

from __future__ import annotations

import os
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .discrete_systems import SiteSystem
from .pointconfig import CountingMeasure, Interval

__all__ = [
    "AlphaMeasure",
    "ConductanceFn",
    "GsipTrajectoryConfig",
    "EventLimitExceeded",
    "Rates",
    "q_rates",
    "gsip_simulate",
    "labelled_gsip_simulate",
    "simulate_positions",
    "run_batches",
    "sample_pascal",
    "sample_pascal_batch",
    "reduce_to_discrete",
    "cell_counts",
    "stream",
    "MAX_EVENTS",
    "BLOCK_SIZE",
]

MAX_EVENTS = 10_000_000
BLOCK_SIZE = 4096
MAX_PASCAL_P = 0.95
THREADS_ENV = "INTERTWINE_THREADS"


def stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for substream ``index`` of ``seed``."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# --- intensity measure ---------------------------------------------------------


class AlphaMeasure:
    """Finite measure on [0, 1): atoms plus a density constant on a uniform grid.

    Parameters
    ----------
    levels : sequence of float
        Density on the cells ``[k/G, (k+1)/G)``, ``G = len(levels)``.
    atoms : sequence of (coord, mass)
    """

    def __init__(self, levels: Sequence[float] = (0.0,), atoms: Sequence = ()):
        levels = [float(v) for v in levels]
        if len(levels) < 1:
            raise ValueError("the density grid needs at least one cell")
        if any(v < 0 or not math.isfinite(v) for v in levels):
            raise ValueError("density levels must be finite and nonnegative")
        merged: dict[float, float] = {}
        for coord, mass in atoms:
            coord, mass = float(coord), float(mass)
            if not 0.0 <= coord < 1.0:
                raise ValueError("atoms must lie in [0, 1)")
            if not mass > 0:
                raise ValueError("atom masses must be positive")
            merged[coord] = merged.get(coord, 0.0) + mass
        self.levels = tuple(levels)
        self.atoms = tuple(sorted(merged.items()))
        self.total = sum(levels) / len(levels) + sum(m for _, m in self.atoms)
        if not self.total > 0:
            raise ValueError("alpha must be a non-zero measure")

    @property
    def grid(self) -> int:
        return len(self.levels)

    def mass(self, cell) -> float:
        """alpha(B) for an ``Interval`` (empty intervals have mass 0)."""
        lo, hi = max(cell.lo, 0.0), min(cell.hi, 1.0)
        if hi <= lo:
            return 0.0
        G = self.grid
        out = 0.0
        for k, v in enumerate(self.levels):
            a, b = max(lo, k / G), min(hi, (k + 1) / G)
            if b > a:
                out += v * (b - a)
        out += sum(m for x, m in self.atoms if lo <= x < hi)
        return out

    def atom_mass(self, x: float) -> float:
        for a, m in self.atoms:
            if a == x:
                return m
        return 0.0

    def pieces(self, edges: Sequence[float]):
        """Components of alpha split along ``edges``: (cell, lo, hi, is_atom, mass)."""
        G = self.grid
        out = []
        for j in range(len(edges) - 1):
            lo, hi = edges[j], edges[j + 1]
            for k, v in enumerate(self.levels):
                a, b = max(lo, k / G), min(hi, (k + 1) / G)
                if b > a and v > 0:
                    out.append((j, a, b, False, v * (b - a)))
            for x, m in self.atoms:
                if lo <= x < hi:
                    out.append((j, x, x, True, m))
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``size`` independent draws from alpha / alpha(E)."""
        comps = self.pieces([0.0, 1.0])
        w = np.array([c[4] for c in comps])
        k = rng.choice(len(comps), size=size, p=w / w.sum())
        lo = np.array([c[1] for c in comps])[k]
        hi = np.array([c[2] for c in comps])[k]
        u = rng.random(size)
        return np.where(hi > lo, np.minimum(lo + u * (hi - lo), np.nextafter(hi, lo)), lo)

    def to_dict(self) -> dict:
        return {"cells": list(self.levels), "atoms": [list(a) for a in self.atoms]}

    @classmethod
    def from_dict(cls, d: dict) -> "AlphaMeasure":
        return cls(d.get("cells", (0.0,)), d.get("atoms", ()))

    def __repr__(self):
        return f"AlphaMeasure(levels={self.levels}, atoms={self.atoms})"


# --- conductance ----------------------------------------------------------------


class ConductanceFn:
    """Symmetric bounded c(x, y), constant on the blocks of an interval partition.

    Use :meth:`constant` or :meth:`piecewise`.  ``c(x, x) = 0`` is enforced at
    evaluation.
    """

    def __init__(self, edges: Sequence[float], d, kind: str):
        edges = [float(e) for e in edges]
        d = np.asarray(d, dtype=float)
        k = len(edges) - 1
        if k < 1 or edges[0] != 0.0 or edges[-1] != 1.0 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("edges must increase from 0 to 1")
        if d.shape != (k, k):
            raise ValueError(f"d must be {k}x{k}")
        if not np.array_equal(d, d.T):
            raise ValueError("d must be symmetric")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("d must be finite and nonnegative")
        self.edges = tuple(edges)
        self.d = d
        self.kind = kind

    @classmethod
    def constant(cls, kappa: float) -> "ConductanceFn":
        return cls([0.0, 1.0], [[float(kappa)]], "constant")

    @classmethod
    def piecewise(cls, edges: Sequence[float], d) -> "ConductanceFn":
        return cls(edges, d, "piecewise")

    @property
    def bound(self) -> float:
        return float(self.d.max())

    @property
    def cells(self) -> list[Interval]:
        return [Interval(a, b) for a, b in zip(self.edges, self.edges[1:])]

    def cell_index(self, x):
        idx = np.searchsorted(self.edges, x, side="right") - 1
        return np.clip(idx, 0, len(self.edges) - 2)

    def __call__(self, x: float, y: float) -> float:
        if x == y:
            return 0.0
        return float(self.d[self.cell_index(x), self.cell_index(y)])

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "kappa": float(self.d[0, 0])}
        return {"kind": "piecewise", "edges": list(self.edges), "d": self.d.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ConductanceFn":
        kind = d.get("kind")
        if kind == "constant":
            return cls.constant(d["kappa"])
        if kind == "piecewise":
            edges = d.get("edges")
            if edges is None:
                k = len(d["d"])
                edges = [i / k for i in range(k + 1)]
            return cls.piecewise(edges, d["d"])
        raise ValueError(f"unknown conductance kind {kind!r}")


@dataclass(frozen=True)
class GsipTrajectoryConfig:
    t_end: float
    seed: int = 0
    max_events: int = MAX_EVENTS

    def __post_init__(self):
        if not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        if self.max_events < 1:
            raise ValueError("max_events must be positive")


class EventLimitExceeded(RuntimeError):
    """Raised when a trajectory needs more than ``max_events`` jumps."""

    def __init__(self, time: float, events: int):
        super().__init__(f"event limit {events} reached at time {time:.6g}")
        self.time = time
        self.events = events


# --- rates ----------------------------------------------------------------------


@dataclass
class Rates:
    q0: np.ndarray
    q: np.ndarray
    z_i: np.ndarray

    @property
    def z(self) -> float:
        return float(self.z_i.sum())


class _Kernel:
    """Precomputed relocation components of c(x, .) alpha(.)."""

    def __init__(self, c: ConductanceFn, alpha: AlphaMeasure):
        comps = alpha.pieces(c.edges)
        self.c = c
        self.cell = np.array([p[0] for p in comps], dtype=np.intp)
        self.lo = np.array([p[1] for p in comps])
        self.hi = np.array([p[2] for p in comps])
        self.is_atom = np.array([p[3] for p in comps], dtype=bool)
        self.mass = np.array([p[4] for p in comps])

    def fresh_weights(self, x: np.ndarray) -> np.ndarray:
        """Weights of each component for particles at ``x``; shape x.shape + (C,)."""
        ci = self.c.cell_index(np.nan_to_num(x))
        W = self.c.d[ci][..., self.cell] * self.mass
        own = self.is_atom & (self.lo == x[..., None])
        return np.where(own, 0.0, W)

    def place(self, k: np.ndarray, u: np.ndarray) -> np.ndarray:
        lo, hi = self.lo[k], self.hi[k]
        y = lo + u * (hi - lo)
        return np.where(self.is_atom[k], lo, np.minimum(y, np.nextafter(hi, lo)))


def q_rates(eta: CountingMeasure, c: ConductanceFn, alpha: AlphaMeasure) -> Rates:
    """Per-particle rates: fresh relocation q_i0, pile-up q_ij and z_i."""
    x = np.asarray(eta.points, dtype=float)
    if x.size == 0:
        return Rates(np.zeros(0), np.zeros((0, 0)), np.zeros(0))
    K = _Kernel(c, alpha)
    q0 = K.fresh_weights(x).sum(axis=-1)
    ci = c.cell_index(x)
    q = c.d[ci[:, None], ci[None, :]] * (x[:, None] != x[None, :])
    return Rates(q0, q, q0 + q.sum(axis=1))


# --- scalar simulation -----------------------------------------------------------


def _simulate_one(x, c, alpha, cfg: GsipTrajectoryConfig, rng, log: list | None):
    x = np.array(x, dtype=float)
    n = x.size
    K = _Kernel(c, alpha)
    t = 0.0
    events = 0
    while n:
        W = K.fresh_weights(x)
        q0 = W.sum(axis=1)
        ci = c.cell_index(x)
        q = c.d[ci[:, None], ci[None, :]] * (x[:, None] != x[None, :])
        z_i = q0 + q.sum(axis=1)
        z = z_i.sum()
        if z <= 0:
            break
        t += rng.exponential(1.0 / z)
        if t > cfg.t_end:
            break
        events += 1
        if events > cfg.max_events:
            raise EventLimitExceeded(t, cfg.max_events)
        i = int(np.searchsorted(np.cumsum(z_i), rng.random() * z, side="right"))
        i = min(i, n - 1)
        w = np.concatenate([q[i], W[i]])
        j = int(np.searchsorted(np.cumsum(w), rng.random() * z_i[i], side="right"))
        j = min(j, w.size - 1)
        if j < n:
            y, kind = x[j], "pile"
        else:
            y, kind = float(K.place(np.array([j - n]), np.array([rng.random()]))[0]), "fresh"
        if log is not None:
            log.append({"time": t, "event": kind, "particle": i, "origin": float(x[i]),
                        "destination": float(y)})
        x[i] = y
        assert x.size == n
    return x


def gsip_simulate(eta0: CountingMeasure, c: ConductanceFn, alpha: AlphaMeasure,
                  cfg: GsipTrajectoryConfig, trajectory: int = 0,
                  log: list | None = None) -> CountingMeasure:
    """State at ``cfg.t_end`` of the jump-hold chain started from ``eta0``.

    Events are appended to ``log`` when given, as dicts with keys ``time``,
    ``event`` ("fresh" or "pile"), ``particle``, ``origin`` and ``destination``.
    """
    rng = stream(cfg.seed, trajectory)
    x = _simulate_one(eta0.points, c, alpha, cfg, rng, log)
    return CountingMeasure(x.tolist(), space="coord")


def labelled_gsip_simulate(x: Sequence[float], c: ConductanceFn, alpha: AlphaMeasure,
                           cfg: GsipTrajectoryConfig, trajectory: int = 0,
                           log: list | None = None) -> list[float]:
    """Same dynamics keeping track of which particle is which."""
    if len(x) < 1:
        raise ValueError("at least one particle is required")
    rng = stream(cfg.seed, trajectory)
    return _simulate_one(x, c, alpha, cfg, rng, log).tolist()


# --- batch simulation --------------------------------------------------------------


def simulate_positions(x0: np.ndarray, c: ConductanceFn, alpha: AlphaMeasure, t_end: float,
                       rng: np.random.Generator, max_events: int = MAX_EVENTS) -> np.ndarray:
    """Run many independent labelled trajectories at once.

    ``x0`` has shape (B, N); NaN marks an empty slot so configurations with
    different particle numbers share one array.  Slot order is preserved, so
    slot ``i`` of the output is the position of particle ``i``.
    """
    X = np.array(x0, dtype=float, copy=True)
    if X.ndim != 2:
        raise ValueError("x0 must have shape (B, N)")
    B, N = X.shape
    if N == 0 or t_end <= 0:
        return X
    K = _Kernel(c, alpha)
    active = ~np.isnan(X)
    time = np.zeros(B)
    events = np.zeros(B, dtype=np.int64)
    alive = np.flatnonzero(active.any(axis=1))
    while alive.size:
        x = X[alive]
        act = active[alive]
        W = K.fresh_weights(x) * act[..., None]
        ci = c.cell_index(np.nan_to_num(x))
        q = c.d[ci[:, :, None], ci[:, None, :]] * (x[:, :, None] != x[:, None, :])
        q *= act[:, :, None] & act[:, None, :]
        z_i = W.sum(axis=2) + q.sum(axis=2)
        z = z_i.sum(axis=1)
        stuck = z <= 0
        dt = rng.exponential(size=alive.size) / np.where(stuck, 1.0, z)
        new_t = time[alive] + dt
        go = (~stuck) & (new_t <= t_end)
        time[alive] = new_t
        events[alive] += go
        if np.any(events > max_events):
            r = int(np.argmax(events))
            raise EventLimitExceeded(float(time[r]), max_events)
        rows = alive[go]
        if rows.size:
            sel = np.flatnonzero(go)
            zi = z_i[sel]
            u1 = rng.random(sel.size) * z[sel]
            i = (np.cumsum(zi, axis=1) <= u1[:, None]).sum(axis=1)
            i = np.minimum(i, N - 1)
            # guard against landing on an empty slot through rounding
            i = np.where(zi[np.arange(sel.size), i] > 0, i, np.argmax(zi, axis=1))
            w = np.concatenate([q[sel, i], W[sel, i]], axis=1)
            tot = w.sum(axis=1)
            u2 = rng.random(sel.size) * tot
            j = (np.cumsum(w, axis=1) <= u2[:, None]).sum(axis=1)
            j = np.minimum(j, w.shape[1] - 1)
            j = np.where(w[np.arange(sel.size), j] > 0, j, np.argmax(w, axis=1))
            u3 = rng.random(sel.size)
            pile = j < N
            dest = np.empty(sel.size)
            dest[pile] = x[sel[pile], j[pile]]
            fresh = ~pile
            dest[fresh] = K.place(j[fresh] - N, u3[fresh])
            X[rows, i] = dest
        alive = rows
    return X


def _threads() -> int:
    v = os.environ.get(THREADS_ENV)
    if not v:
        return 1
    try:
        return max(1, int(v))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {v!r}") from None


def run_batches(job: Callable[[np.random.Generator, int], np.ndarray], samples: int, seed: int,
                block: int = BLOCK_SIZE, threads: int | None = None, first: int = 0) -> np.ndarray:
    """Evaluate ``job(rng, size)`` over fixed-size blocks and stack the results.

    Block ``b`` always uses substream ``first + b`` of ``seed`` and results are
    merged in block order, so the output is independent of the thread count.
    """
    if samples < 0:
        raise ValueError("samples must be nonnegative")
    sizes = [min(block, samples - s) for s in range(0, samples, block)]
    threads = _threads() if threads is None else threads

    def one(b):
        return np.asarray(job(stream(seed, first + b), sizes[b]))

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    else:
        parts = [one(b) for b in range(len(sizes))]
    if not parts:
        return np.zeros((0,))
    if parts[0].ndim == 2:
        width = max(p.shape[1] for p in parts)
        if any(p.shape[1] != width for p in parts):
            parts = [np.pad(p.astype(float), ((0, 0), (0, width - p.shape[1])), constant_values=np.nan)
                     for p in parts]
    return np.concatenate(parts, axis=0)


# --- Pascal process ----------------------------------------------------------------


def _logseries_cdf(p: float, tail: float = 1e-16) -> np.ndarray:
    norm = -math.log1p(-p)
    cdf, acc, k, term = [], 0.0, 1, p
    while True:
        acc += term / (k * norm)
        cdf.append(acc)
        if 1.0 - acc < tail or k > 100_000:
            break
        k += 1
        term *= p
    cdf = np.array(cdf)
    cdf[-1] = 1.0
    return cdf


def _check_p(p: float):
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if p > MAX_PASCAL_P:
        raise ValueError(f"p above {MAX_PASCAL_P} makes the logarithmic tail too heavy")


def _pascal_rows(alpha: AlphaMeasure, p: float, rng: np.random.Generator, size: int) -> np.ndarray:
    _check_p(p)
    cdf = _logseries_cdf(p)
    K = rng.poisson(alpha.total * -math.log1p(-p), size=size)
    marks = int(K.sum())
    locs = alpha.sample(rng, marks)
    mult = np.searchsorted(cdf, rng.random(marks), side="right") + 1
    owner = np.repeat(np.arange(size), K)
    counts = np.bincount(owner, weights=mult, minlength=size).astype(int)
    width = int(counts.max(initial=0))
    out = np.full((size, width), np.nan)
    pts = np.repeat(locs, mult)
    row = np.repeat(owner, mult)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    col = np.arange(pts.size) - np.repeat(start, counts)
    out[row, col] = pts
    out.sort(axis=1)
    return out


def sample_pascal(alpha: AlphaMeasure, p: float, seed: int, index: int = 0) -> CountingMeasure:
    """One draw of the Pascal point process with intensity ``alpha`` and parameter ``p``.

    Built as a compound Poisson process: ``K ~ Poisson(alpha(E) (-log(1-p)))``
    marks at alpha-distributed locations, each carrying a logarithmic
    multiplicity ``P(n) = p^n / (n (-log(1-p)))``.
    """
    row = _pascal_rows(alpha, p, stream(seed, index), 1)[0]
    return CountingMeasure(row[~np.isnan(row)].tolist(), space="coord")


def sample_pascal_batch(alpha: AlphaMeasure, p: float, samples: int, seed: int) -> np.ndarray:
    """``samples`` Pascal draws as a NaN-padded (samples, N) array of sorted points."""
    _check_p(p)
    return run_batches(lambda rng, n: _pascal_rows(alpha, p, rng, n), samples, seed)


def cell_counts(X: np.ndarray, cells: Sequence[Interval]) -> np.ndarray:
    """Number of points of each row of ``X`` in each cell; shape (B, len(cells))."""
    X = np.asarray(X, dtype=float)
    out = np.zeros((X.shape[0], len(cells)), dtype=np.int64)
    for k, cell in enumerate(cells):
        out[:, k] = ((X >= cell.lo) & (X < cell.hi)).sum(axis=1)
    return out


def reduce_to_discrete(cells: Sequence[Interval], c: ConductanceFn, alpha: AlphaMeasure) -> SiteSystem:
    """Discrete inclusion process followed by the counts of the cells of ``c``.

    Off-diagonal conductances are the block values ``d_ij`` and site weights
    are ``alpha(A_i)``.  Jumps inside a block do not move counts, so the
    diagonal of ``d`` drops out.
    """
    cells = list(cells)
    if [(a.lo, a.hi) for a in cells] != list(zip(c.edges, c.edges[1:])):
        raise ValueError("c is not constant on the blocks of this partition")
    d = c.d.copy()
    np.fill_diagonal(d, 0.0)
    return SiteSystem(d.tolist(), [alpha.mass(a) for a in cells], 1)
