"""Finite counting measures and the combinatorics of factorial measures.

A configuration ``eta = delta_{x_1} + ... + delta_{x_N}`` is stored as the
sorted tuple of its points, either site indices (discrete space) or
coordinates in ``[0, 1)``.  Integrals against the factorial measure
``eta^(n)`` sum over injective ordered tuples of *particle indices*, so
multiplicities are handled without special cases.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

__all__ = [
    "Interval",
    "CountingMeasure",
    "SetPartition",
    "Indicator",
    "ProductFunction",
    "TensorIndicator",
    "GenericFunction",
    "factorial_integral",
    "product_integral",
    "k_transform",
    "lowering",
    "set_partitions",
    "bell_number",
    "collapse",
    "mobius_coefficient",
    "monomial_via_factorials",
    "factorial_via_monomials",
    "lambda_n_integral",
    "lambda_sequential",
    "lambda_sequential_check",
]

SITE = "site"
COORD = "coord"


@dataclass(frozen=True, order=True)
class Interval:
    """Half-open interval ``[lo, hi)``; empty when ``hi <= lo``."""

    lo: float
    hi: float

    def __contains__(self, x) -> bool:
        return self.lo <= x < self.hi

    def __and__(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    @property
    def empty(self) -> bool:
        return self.hi <= self.lo

    def isdisjoint(self, other: "Interval") -> bool:
        return (self & other).empty


def _disjoint(a, b) -> bool:
    return a.isdisjoint(b)


class CountingMeasure:
    """Finite point configuration with canonical (sorted) storage.

    Parameters
    ----------
    points : iterable
        Site indices (``int``) or coordinates in ``[0, 1)``. Repetitions
        are allowed.
    space : {"site", "coord"}, optional
        Inferred from the point types when omitted.
    m : int, optional
        Number of sites, used for range checks in the discrete space.
    """

    __slots__ = ("points", "space", "m")

    def __init__(self, points: Iterable = (), space: str | None = None, m: int | None = None):
        pts = tuple(sorted(points))
        if space is None:
            space = SITE if all(isinstance(p, int) for p in pts) else COORD
        if space == SITE:
            pts = tuple(int(p) for p in pts)
            if any(p < 0 for p in pts) or (m is not None and any(p >= m for p in pts)):
                raise ValueError("site index out of range")
        elif space == COORD:
            pts = tuple(float(p) for p in pts)
            if any(not 0.0 <= p < 1.0 for p in pts):
                raise ValueError("coordinates must lie in [0, 1)")
        else:
            raise ValueError(f"unknown space {space!r}")
        self.points = pts
        self.space = space
        self.m = m

    @classmethod
    def from_occupation(cls, occ: Sequence[int]) -> "CountingMeasure":
        pts = [x for x, k in enumerate(occ) for _ in range(int(k))]
        return cls(pts, space=SITE, m=len(occ))

    def occupation(self, m: int | None = None) -> tuple[int, ...]:
        m = self.m if m is None else m
        if m is None:
            raise ValueError("number of sites unknown")
        occ = [0] * m
        for p in self.points:
            occ[p] += 1
        return tuple(occ)

    @property
    def total(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def count(self, cell) -> int:
        """eta(B) for a cell B (a set of sites or an ``Interval``)."""
        return sum(1 for p in self.points if p in cell)

    def add(self, x) -> "CountingMeasure":
        return CountingMeasure(self.points + (x,), self.space, self.m)

    def remove(self, x) -> "CountingMeasure":
        pts = list(self.points)
        pts.remove(x)
        return CountingMeasure(pts, self.space, self.m)

    def without_index(self, i: int) -> "CountingMeasure":
        return CountingMeasure(self.points[:i] + self.points[i + 1:], self.space, self.m)

    def sub(self, indices: Iterable[int]) -> "CountingMeasure":
        return CountingMeasure([self.points[i] for i in indices], self.space, self.m)

    def __eq__(self, other) -> bool:
        return isinstance(other, CountingMeasure) and self.points == other.points

    def __hash__(self) -> int:
        return hash(self.points)

    def __repr__(self) -> str:
        return f"CountingMeasure({list(self.points)!r})"

    def to_json(self) -> str:
        return json.dumps(list(self.points))

    @classmethod
    def from_json(cls, text: str, m: int | None = None) -> "CountingMeasure":
        data = json.loads(text)
        if not isinstance(data, list):
            raise ValueError("expected a JSON array of points")
        space = SITE if all(isinstance(p, int) for p in data) else COORD
        return cls(data, space=space, m=m)


# --- functions on E^n -------------------------------------------------------


@dataclass(frozen=True)
class Indicator:
    """x -> 1{x in cell}."""

    cell: object

    def __call__(self, x) -> float:
        return 1.0 if x in self.cell else 0.0


class ProductFunction:
    """f(x_1, ..., x_n) = prod_k g_k(x_k) with a declared bound."""

    def __init__(self, factors: Sequence[Callable], bound: float | None = None):
        self.factors = tuple(factors)
        if bound is None:
            if not all(isinstance(g, Indicator) for g in self.factors):
                raise ValueError("non-indicator factors need an explicit bound")
            bound = 1.0
        self.bound = float(bound)

    @property
    def arity(self) -> int:
        return len(self.factors)

    @property
    def is_indicator(self) -> bool:
        return all(isinstance(g, Indicator) for g in self.factors)

    def __call__(self, *xs) -> float:
        out = 1.0
        for g, x in zip(self.factors, xs):
            out *= g(x)
            if out == 0.0:
                break
        return out


class TensorIndicator(ProductFunction):
    """1_{B_1}^{(x) d_1} (x) ... (x) 1_{B_N}^{(x) d_N} for pairwise disjoint cells."""

    def __init__(self, cells: Sequence, degrees: Sequence[int]):
        if len(cells) != len(degrees):
            raise ValueError("cells and degrees differ in length")
        if any(d < 0 for d in degrees):
            raise ValueError("degrees must be nonnegative")
        for a, b in itertools.combinations(cells, 2):
            if not _disjoint(a, b):
                raise ValueError("cells must be pairwise disjoint")
        self.cells = tuple(cells)
        self.degrees = tuple(int(d) for d in degrees)
        factors = [Indicator(c) for c, d in zip(cells, degrees) for _ in range(d)]
        super().__init__(factors)


class GenericFunction:
    """Arbitrary bounded function of ``arity`` points."""

    def __init__(self, arity: int, fn: Callable, bound: float):
        if bound is None or not math.isfinite(bound):
            raise ValueError("a finite bound is required")
        self.arity = int(arity)
        self.fn = fn
        self.bound = float(bound)

    def __call__(self, *xs) -> float:
        return self.fn(*xs)


def _check_arity(f, n: int):
    if n == 0:
        if isinstance(f, (int, float)):
            return
        if getattr(f, "arity", None) == 0:
            return
        raise ValueError("degree 0 expects a scalar")
    if getattr(f, "arity", None) != n:
        raise ValueError(f"arity mismatch: function has arity {getattr(f, 'arity', None)}, expected {n}")
    if not math.isfinite(getattr(f, "bound", math.inf)):
        raise ValueError("function must declare a finite bound")


def _scalar(f) -> float:
    return float(f) if isinstance(f, (int, float)) else float(f())


def _checked(f, xs) -> float:
    v = f(*xs)
    if abs(v) > f.bound * (1 + 1e-12):
        raise ValueError(f"function value {v} exceeds declared bound {f.bound}")
    return v


def factorial_integral(eta: CountingMeasure, n: int, f, method: str = "auto") -> float:
    """Integral of ``f`` against the n-th factorial measure of ``eta``.

    With ``method="auto"`` a :class:`TensorIndicator` uses the closed form
    ``prod_i (eta(B_i))_{d_i}``; everything else enumerates injective tuples.
    """
    _check_arity(f, n)
    if n == 0:
        return _scalar(f)
    N = eta.total
    if n > N:
        return 0.0
    if method == "auto" and isinstance(f, TensorIndicator):
        out = 1
        for cell, d in zip(f.cells, f.degrees):
            out *= math.perm(eta.count(cell), d) if d else 1
        return float(out)
    pts = eta.points
    return float(sum(_checked(f, [pts[i] for i in idx])
                     for idx in itertools.permutations(range(N), n)))


def product_integral(eta: CountingMeasure, n: int, f, method: str = "auto") -> float:
    """Integral of ``f`` against ``eta^{(x) n}`` (all ordered tuples)."""
    _check_arity(f, n)
    if n == 0:
        return _scalar(f)
    if method == "auto" and isinstance(f, TensorIndicator):
        out = 1
        for cell, d in zip(f.cells, f.degrees):
            out *= eta.count(cell) ** d
        return float(out)
    pts = eta.points
    return float(sum(_checked(f, [pts[i] for i in idx])
                     for idx in itertools.product(range(eta.total), repeat=n)))


def k_transform(eta: CountingMeasure, F: Callable[[CountingMeasure], float],
                depth: int | None = None) -> float:
    """Lenard K-transform: sum_n (1/n!) int F(delta_x1 + ... + delta_xn) d eta^(n).

    The n! orderings of an injective tuple give the same configuration, so the
    n-th term is the sum of F over n-element sub-configurations.
    """
    N = eta.total if depth is None else min(depth, eta.total)
    out = 0.0
    for n in range(N + 1):
        for idx in itertools.combinations(range(eta.total), n):
            out += F(eta.sub(idx))
    return out


def lowering(eta: CountingMeasure, F: Callable[[CountingMeasure], float]) -> float:
    """(A F)(eta) = sum over particles x of F(eta - delta_x)."""
    return float(sum(F(eta.without_index(i)) for i in range(eta.total)))


# --- set partitions --------------------------------------------------------


@dataclass(frozen=True)
class SetPartition:
    """Partition of ``{0, ..., n-1}``; blocks sorted by least element."""

    blocks: tuple[tuple[int, ...], ...]
    n: int = field(default=-1)

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(b)) for b in self.blocks), key=lambda b: b[0]))
        flat = sorted(i for b in blocks for i in b)
        n = len(flat) if self.n < 0 else self.n
        if any(len(b) == 0 for b in blocks) or flat != list(range(n)):
            raise ValueError("blocks must be disjoint, nonempty and cover {0..n-1}")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "n", n)

    def __len__(self) -> int:
        return len(self.blocks)

    def block_of(self) -> tuple[int, ...]:
        """Block index of every element."""
        lab = [0] * self.n
        for j, b in enumerate(self.blocks):
            for i in b:
                lab[i] = j
        return tuple(lab)


MAX_PARTITION_N = 10


@lru_cache(maxsize=None)
def _partitions(n: int) -> tuple[SetPartition, ...]:
    out = []

    def rec(i, labels, nblocks):
        if i == n:
            blocks = [[] for _ in range(nblocks)]
            for k, lab in enumerate(labels):
                blocks[lab].append(k)
            out.append(SetPartition(tuple(tuple(b) for b in blocks), n))
            return
        for lab in range(nblocks + 1):
            labels.append(lab)
            rec(i + 1, labels, max(nblocks, lab + 1))
            labels.pop()

    rec(0, [], 0)
    return tuple(out)


def set_partitions(n: int) -> list[SetPartition]:
    """All set partitions of ``{0..n-1}`` in restricted-growth-string order."""
    if not 1 <= n <= MAX_PARTITION_N:
        raise ValueError(f"n must lie in [1, {MAX_PARTITION_N}]")
    return list(_partitions(n))


def bell_number(n: int) -> int:
    """Bell numbers via the Bell triangle (independent of the enumeration)."""
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def collapse(f, sigma: SetPartition):
    """Identify the arguments of ``f`` lying in the same block of ``sigma``.

    The result takes ``len(sigma)`` arguments, one per block, blocks ordered
    by least element.
    """
    if getattr(f, "arity", None) != sigma.n:
        raise ValueError("arity mismatch between function and partition")
    lab = sigma.block_of()
    if isinstance(f, ProductFunction):
        if f.is_indicator:
            cells = []
            for b in sigma.blocks:
                cell = f.factors[b[0]].cell
                for i in b[1:]:
                    cell = cell & f.factors[i].cell
                cells.append(Indicator(cell))
            return ProductFunction(cells)
        factors = []
        for b in sigma.blocks:
            gs = [f.factors[i] for i in b]
            factors.append(gs[0] if len(gs) == 1 else _BlockProduct(tuple(gs)))
        return ProductFunction(factors, bound=f.bound)
    return GenericFunction(len(sigma), lambda *ys: f(*(ys[j] for j in lab)), f.bound)


@dataclass(frozen=True)
class _BlockProduct:
    factors: tuple

    def __call__(self, x) -> float:
        out = 1.0
        for g in self.factors:
            out *= g(x)
        return out


def mobius_coefficient(sigma: SetPartition) -> int:
    """Moebius function mu(0, sigma) of the partition lattice."""
    out = 1
    for b in sigma.blocks:
        k = len(b)
        out *= (-1) ** (k - 1) * math.factorial(k - 1)
    return out


def monomial_via_factorials(eta: CountingMeasure, n: int, f) -> float:
    """eta^{(x) n}(f) = sum_sigma int f_sigma d eta^(|sigma|)."""
    if n == 0:
        return _scalar(f)
    return sum(factorial_integral(eta, len(s), collapse(f, s)) for s in set_partitions(n))


def factorial_via_monomials(eta: CountingMeasure, n: int, f, coefficients: str = "mobius") -> float:
    """Express int f d eta^(n) through product-measure integrals.

    ``coefficients="mobius"`` uses mu(0, sigma) = prod_A (-1)^{|A|-1} (|A|-1)!,
    which reproduces the factorial integral exactly.  ``"signs_only"`` keeps
    just (-1)^{n-|sigma|}; it agrees for n <= 2 only and is kept for
    comparison.
    """
    if n == 0:
        return _scalar(f)
    total = 0.0
    for s in set_partitions(n):
        if coefficients == "mobius":
            c = mobius_coefficient(s)
        elif coefficients == "signs_only":
            c = (-1) ** (n - len(s))
        else:
            raise ValueError(f"unknown coefficient family {coefficients!r}")
        total += c * product_integral(eta, len(s), collapse(f, s))
    return total


# --- the reference measure lambda_n ----------------------------------------


def _indicator_cells(f, n: int):
    if n == 0:
        return ()
    if not (isinstance(f, ProductFunction) and f.is_indicator):
        raise ValueError("lambda_n is only available for products of indicators")
    if f.arity != n:
        raise ValueError("arity mismatch")
    return tuple(g.cell for g in f.factors)


def lambda_n_integral(alpha, n: int, f) -> float:
    """int f d lambda_n via the partition sum with weights prod_A (|A|-1)!.

    ``alpha`` needs a ``mass(cell)`` method.
    """
    if n == 0:
        return _scalar(f)
    cells = _indicator_cells(f, n)
    total = 0.0
    for s in set_partitions(n):
        term = 1.0
        for b in s.blocks:
            cell = cells[b[0]]
            for i in b[1:]:
                cell = cell & cells[i]
            term *= math.factorial(len(b) - 1) * alpha.mass(cell)
            if term == 0.0:
                break
        total += term
    return total


def lambda_sequential(alpha, f) -> float:
    """lambda_n(f) built point by point through the kernel k_{n,n+1}.

    Each new point lands at a fresh alpha-distributed location or on top of
    one of the existing points.
    """
    if isinstance(f, (int, float)):
        return float(f)
    cells = _indicator_cells(f, f.arity)

    @lru_cache(maxsize=None)
    def lam(cs):
        if not cs:
            return 1.0
        head, new = cs[:-1], cs[-1]
        out = alpha.mass(new) * lam(head)
        for i in range(len(head)):
            out += lam(head[:i] + (head[i] & new,) + head[i + 1:])
        return out

    return lam(cells)


def lambda_sequential_check(alpha, n: int, f) -> float:
    """lambda_{n+1}(f) from lambda_n through one kernel step."""
    if getattr(f, "arity", None) != n + 1:
        raise ValueError("f must have arity n + 1")
    return lambda_sequential(alpha, f)
