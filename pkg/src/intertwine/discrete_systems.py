"""Exact engines for exclusion (sigma=-1), independent (sigma=0) and
inclusion (sigma=+1) particle systems on a finite set of sites.

A particle at ``x`` jumps to ``y`` at rate ``c[x, y] * (alpha[y] + sigma *
eta[y])``, so the configuration ``eta`` moves to ``eta - delta_x + delta_y``
at rate ``c[x, y] * (alpha[y] + sigma * eta[y]) * eta[x]``.

Generators act on functions: ``(Q f)(eta) = sum_eta' Q[eta, eta'] f(eta')``.
Distributions evolve with the transpose.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from numbers import Rational
from typing import Callable, Sequence

import numpy as np
from scipy import sparse, stats
from scipy.sparse.csgraph import connected_components

from . import orthopoly
from .orthopoly import Binomial, NegBinomial, Poisson, falling_factorial
from .pointconfig import CountingMeasure, GenericFunction, factorial_integral
from .report import VerificationReport, exact_report

__all__ = [
    "SiteSystem",
    "SectorEnumeration",
    "GeneratorMatrix",
    "ReversibleMeasureSpec",
    "DualityFunctions",
    "Polynomial",
    "SECTOR_GUARD",
    "enumerate_sector",
    "enumerate_labelled",
    "build_generator",
    "build_labelled_generator",
    "semigroup_apply",
    "lowering_matrix",
    "consistency_commutator",
    "reversible_measure",
    "detailed_balance_defect",
    "duality_functions",
    "check_duality",
    "gram_schmidt_In",
    "orthogonal_polynomial_basis",
    "check_intertwining",
    "random_system",
]

SECTOR_GUARD = 200_000
UNIFORMIZATION_TAIL = 1e-14


class SiteSystem:
    """Finite-set particle system.

    Parameters
    ----------
    c : (m, m) array_like
        Symmetric nonnegative conductances with zero diagonal; the graph they
        define must be connected.
    alpha : sequence
        Positive site weights, integers when ``sigma == -1``.
    sigma : {-1, 0, 1}
    """

    def __init__(self, c, alpha, sigma: int):
        c = [list(row) for row in c]
        m = len(c)
        if m < 1 or any(len(row) != m for row in c):
            raise ValueError("c must be a square matrix")
        if len(alpha) != m:
            raise ValueError("alpha must have one weight per site")
        if sigma not in (-1, 0, 1):
            raise ValueError("sigma must be -1, 0 or 1")
        for x in range(m):
            if c[x][x] != 0:
                raise ValueError("c must have zero diagonal")
            for y in range(m):
                if c[x][y] < 0:
                    raise ValueError("c must be nonnegative")
                if c[x][y] != c[y][x]:
                    raise ValueError("c must be symmetric")
        if any(not a > 0 for a in alpha):
            raise ValueError("alpha must be positive")
        if sigma == -1 and any(int(a) != a for a in alpha):
            raise ValueError("exclusion requires integer alpha")
        if m > 1:
            ncomp, _ = connected_components(sparse.csr_matrix(np.asarray(c, dtype=float) > 0), directed=False)
            if ncomp != 1:
                raise ValueError("conductance graph must be connected")
        self.m = m
        self.c = c
        self.alpha = [int(a) if sigma == -1 else a for a in alpha]
        self.sigma = sigma

    @property
    def c_array(self) -> np.ndarray:
        return np.asarray(self.c, dtype=float)

    @property
    def exact_capable(self) -> bool:
        return all(isinstance(v, Rational) for row in self.c for v in row) and all(
            isinstance(a, Rational) for a in self.alpha)

    def mass(self, cell) -> float:
        """alpha(B) for a set of sites; lets the weights act as a measure."""
        return float(sum(self.alpha[x] for x in cell))

    def to_dict(self) -> dict:
        return {"m": self.m, "c": [[float(v) for v in row] for row in self.c],
                "alpha": [float(a) for a in self.alpha], "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "SiteSystem":
        m = d.get("m")
        sys = cls(d["c"], d["alpha"], int(d["sigma"]))
        if m is not None and m != sys.m:
            raise ValueError(f"m={m} does not match the size of c ({sys.m})")
        return sys

    def __repr__(self):
        return f"SiteSystem(m={self.m}, sigma={self.sigma}, alpha={self.alpha})"


def random_system(rng: np.random.Generator, m: int, sigma: int, exact: bool = False,
                  max_alpha: int = 3) -> SiteSystem:
    """Random connected system: a spanning path plus random extra edges."""
    c = [[0] * m for _ in range(m)]
    order = rng.permutation(m)
    for a, b in zip(order[:-1], order[1:]):
        v = int(rng.integers(1, 5))
        c[a][b] = c[b][a] = v
    for x in range(m):
        for y in range(x + 1, m):
            if c[x][y] == 0 and rng.random() < 0.5:
                c[x][y] = c[y][x] = int(rng.integers(1, 5))
    if exact:
        c = [[Fraction(v, 2) for v in row] for row in c]
        if sigma == -1:
            alpha = [int(rng.integers(1, max_alpha + 1)) for _ in range(m)]
        else:
            alpha = [Fraction(int(rng.integers(1, 7)), 2) for _ in range(m)]
    else:
        c = [[float(v) * rng.uniform(0.5, 1.5) for v in row] for row in c]
        c = [[c[min(x, y)][max(x, y)] for y in range(m)] for x in range(m)]
        if sigma == -1:
            alpha = [int(rng.integers(1, max_alpha + 1)) for _ in range(m)]
        else:
            alpha = [float(rng.uniform(0.3, 3.0)) for _ in range(m)]
    return SiteSystem(c, alpha, sigma)


# --- state enumeration ------------------------------------------------------


@dataclass
class SectorEnumeration:
    """Occupation vectors with ``n`` particles in lexicographic order."""

    n: int
    configs: list[tuple[int, ...]]

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        return {cfg: i for i, cfg in enumerate(self.configs)}

    def __len__(self) -> int:
        return len(self.configs)


def _compositions(n: int, caps: Sequence[int | None]):
    if len(caps) == 1:
        if caps[0] is None or n <= caps[0]:
            yield (n,)
        return
    top = n if caps[0] is None else min(n, caps[0])
    for k in range(top, -1, -1):
        for rest in _compositions(n - k, caps[1:]):
            yield (k,) + rest


def _caps(sys: SiteSystem):
    return [int(a) if sys.sigma == -1 else None for a in sys.alpha]


def enumerate_sector(sys: SiteSystem, n: int, guard: int = SECTOR_GUARD) -> SectorEnumeration:
    caps = _caps(sys)
    if sys.sigma != -1:
        size = math.comb(n + sys.m - 1, sys.m - 1)
        if size > guard:
            raise ValueError(f"sector with {size} states exceeds the guard of {guard}")
    configs = sorted(_compositions(n, caps))
    if len(configs) > guard:
        raise ValueError(f"sector with {len(configs)} states exceeds the guard of {guard}")
    if not configs:
        raise ValueError(f"sector with {n} particles is empty")
    return SectorEnumeration(n, configs)


def enumerate_labelled(sys: SiteSystem, n: int, guard: int = SECTOR_GUARD) -> list[tuple[int, ...]]:
    """Labelled positions in E^n; for exclusion only tuples respecting capacities."""
    if sys.m**n > guard:
        raise ValueError(f"labelled space with {sys.m ** n} states exceeds the guard of {guard}")
    states = []
    for xs in itertools.product(range(sys.m), repeat=n):
        if sys.sigma == -1:
            occ = np.bincount(xs, minlength=sys.m) if n else np.zeros(sys.m, int)
            if any(occ[x] > sys.alpha[x] for x in range(sys.m)):
                continue
        states.append(xs)
    if not states:
        raise ValueError(f"labelled space with {n} particles is empty")
    return states


# --- generators --------------------------------------------------------------


@dataclass
class GeneratorMatrix:
    """Rate matrix over an enumerated state space.

    ``Q`` is a scipy CSR matrix in float mode and a dense object array of
    ``Fraction`` in exact mode.
    """

    states: list
    Q: object
    exact: bool = False
    sector: SectorEnumeration | None = None

    @property
    def size(self) -> int:
        return len(self.states)

    def dense(self) -> np.ndarray:
        if self.exact:
            return np.array(self.Q, dtype=float)
        return self.Q.toarray()

    @cached_property
    def index(self) -> dict:
        return {s: i for i, s in enumerate(self.states)}


def _assemble(states, transitions, exact: bool):
    idx = {s: i for i, s in enumerate(states)}
    size = len(states)
    if exact:
        Q = np.empty((size, size), dtype=object)
        Q[...] = Fraction(0)
        for s, s2, r in transitions:
            i, j = idx[s], idx[s2]
            Q[i, j] += Fraction(r)
            Q[i, i] -= Fraction(r)
        return Q
    rows, cols, vals = [], [], []
    out = np.zeros(size)
    for s, s2, r in transitions:
        i, j = idx[s], idx[s2]
        rows.append(i)
        cols.append(j)
        vals.append(float(r))
        out[i] += float(r)
    rows.extend(range(size))
    cols.extend(range(size))
    vals.extend(-out)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))


def build_generator(sys: SiteSystem, n: int, exact: bool = False) -> GeneratorMatrix:
    """Generator restricted to the sector with ``n`` particles."""
    if exact and not sys.exact_capable:
        raise ValueError("exact mode needs rational c and alpha")
    sector = enumerate_sector(sys, n)
    transitions = []
    for eta in sector.configs:
        for x in range(sys.m):
            if eta[x] == 0:
                continue
            for y in range(sys.m):
                cxy = sys.c[x][y]
                if x == y or cxy == 0:
                    continue
                rate = cxy * (sys.alpha[y] + sys.sigma * eta[y]) * eta[x]
                if rate < 0:
                    raise AssertionError("negative rate inside the state space")
                if rate == 0:
                    continue
                new = list(eta)
                new[x] -= 1
                new[y] += 1
                transitions.append((eta, tuple(new), rate))
    Q = _assemble(sector.configs, transitions, exact)
    return GeneratorMatrix(sector.configs, Q, exact, sector)


def build_labelled_generator(sys: SiteSystem, n: int, exact: bool = False) -> GeneratorMatrix:
    """Generator of ``n`` labelled particles on ``E^n``.

    Particle ``i`` at ``x_i`` jumps to ``y`` at rate
    ``c(x_i, y) * (alpha_y + sigma * #{j != i : x_j = y})``.
    """
    if exact and not sys.exact_capable:
        raise ValueError("exact mode needs rational c and alpha")
    states = enumerate_labelled(sys, n)
    transitions = []
    for xs in states:
        for i, x in enumerate(xs):
            for y in range(sys.m):
                cxy = sys.c[x][y]
                if y == x or cxy == 0:
                    continue
                others = sum(1 for j, xj in enumerate(xs) if j != i and xj == y)
                rate = cxy * (sys.alpha[y] + sys.sigma * others)
                if rate <= 0:
                    continue
                new = xs[:i] + (y,) + xs[i + 1:]
                transitions.append((xs, new, rate))
    Q = _assemble(states, transitions, exact)
    return GeneratorMatrix(states, Q, exact)


def semigroup_apply(Q, t: float, v, transpose: bool = False, tail: float = UNIFORMIZATION_TAIL):
    """exp(tQ) v by uniformization.

    With ``transpose=True`` computes ``exp(tQ)^T v``, i.e. evolves a
    distribution given as a column vector.  The time interval is cut into
    pieces with ``Lambda * dt <= 32`` so Poisson weights never underflow; in
    each piece the series is truncated once the remaining Poisson mass is
    below ``tail``.
    """
    if isinstance(Q, GeneratorMatrix):
        Q = Q.Q if not Q.exact else sparse.csr_matrix(np.array(Q.Q, dtype=float))
    Q = sparse.csr_matrix(Q)
    if t < 0:
        raise ValueError("t must be nonnegative")
    v = np.asarray(v, dtype=float)
    if v.shape[0] != Q.shape[0]:
        raise ValueError(f"dimension mismatch: vector has {v.shape[0]} rows, generator {Q.shape[0]}")
    if transpose:
        Q = Q.T.tocsr()
    lam = float(np.max(np.abs(Q.diagonal()), initial=0.0))
    if t == 0 or lam == 0:
        return v.copy()
    P = sparse.identity(Q.shape[0], format="csr") + Q / lam
    pieces = max(1, math.ceil(lam * t / 32.0))
    mu = lam * t / pieces
    kmax = int(stats.poisson.isf(tail, mu)) + 1
    weights = stats.poisson.pmf(np.arange(kmax + 1), mu)
    out = v
    for _ in range(pieces):
        term = out
        acc = weights[0] * term
        for k in range(1, kmax + 1):
            term = P @ term
            acc = acc + weights[k] * term
        out = acc
    return out


def lowering_matrix(sys: SiteSystem, n: int, exact: bool = False):
    """Matrix of (A f)(eta) = sum_x eta_x f(eta - delta_x), sector n-1 -> n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    top = enumerate_sector(sys, n)
    bottom = enumerate_sector(sys, n - 1)
    if exact:
        A = np.empty((len(top), len(bottom)), dtype=object)
        A[...] = Fraction(0)
    else:
        A = np.zeros((len(top), len(bottom)))
    for i, eta in enumerate(top.configs):
        for x in range(sys.m):
            if eta[x]:
                low = list(eta)
                low[x] -= 1
                A[i, bottom.index[tuple(low)]] += eta[x]
    return A


def consistency_commutator(sys: SiteSystem, n: int, exact: bool = False):
    """max |L_n A - A L_{n-1}|; zero iff removal of a random particle commutes
    with the dynamics on these sectors.  Returns a ``Fraction`` in exact mode."""
    A = lowering_matrix(sys, n, exact)
    Qn = build_generator(sys, n, exact)
    Qm = build_generator(sys, n - 1, exact)
    if exact:
        D = Qn.Q.dot(A) - A.dot(Qm.Q)
        return max((abs(v) for v in D.ravel()), default=Fraction(0))
    D = Qn.Q @ A - Qm.Q.T.dot(A.T).T
    return float(np.max(np.abs(D), initial=0.0))


# --- reversible measures -------------------------------------------------------


@dataclass(frozen=True)
class ReversibleMeasureSpec:
    """Product measure with per-site marginals from the one-parameter family."""

    sys: SiteSystem
    theta: float
    marginals: tuple

    def mass(self, occ: Sequence[int]) -> float:
        return float(np.prod([d.pmf(k) for d, k in zip(self.marginals, occ)]))

    def weight(self, occ: Sequence[int]):
        """Unnormalized product weight prod_x w_x(k) (theta/(1+sigma theta))^k / k!.

        Rational when alpha and theta are; it differs from the measure by a
        constant, which is all detailed balance needs.
        """
        s = self.sys.sigma
        th = self.theta
        ratio = th / (1 + s * th)
        out = 1
        for a, k in zip(self.sys.alpha, occ):
            if s == -1:
                w = falling_factorial(a, k)
            elif s == 0:
                w = a**k
            else:
                w = orthopoly.rising_factorial(a, k)
            out *= w * ratio**k / math.factorial(k)
        return out

    def sector_distribution(self, n: int) -> np.ndarray:
        sector = enumerate_sector(self.sys, n)
        w = np.array([self.mass(cfg) for cfg in sector.configs])
        return w / w.sum()


def reversible_measure(sys: SiteSystem, theta) -> ReversibleMeasureSpec:
    s = sys.sigma
    if s == -1:
        if not 0 < theta <= 1:
            raise ValueError("theta must lie in (0, 1] for exclusion")
        marg = tuple(Binomial(int(a), theta) for a in sys.alpha)
    else:
        if not theta > 0:
            raise ValueError("theta must be positive")
        if s == 0:
            marg = tuple(Poisson(a * theta) for a in sys.alpha)
        else:
            marg = tuple(NegBinomial(a, theta / (1 + theta)) for a in sys.alpha)
    return ReversibleMeasureSpec(sys, theta, marg)


def detailed_balance_defect(sys: SiteSystem, theta, n: int, exact: bool = False):
    """max |w(eta) q(eta, eta') - w(eta') q(eta', eta)| over the sector."""
    rho = reversible_measure(sys, theta)
    G = build_generator(sys, n, exact)
    if exact:
        w = [Fraction(rho.weight(cfg)) for cfg in G.states]
        Q = G.Q
        size = G.size
        worst = Fraction(0)
        for i in range(size):
            for j in range(i + 1, size):
                worst = max(worst, abs(w[i] * Q[i, j] - w[j] * Q[j, i]))
        return worst
    w = np.array([rho.mass(cfg) for cfg in G.states])
    Q = G.Q.toarray()
    F = w[:, None] * Q
    return float(np.max(np.abs(F - F.T), initial=0.0))


# --- orthogonal polynomials by moment-matrix Gram-Schmidt ------------------



def _stirling2_table(kmax: int) -> list[list[int]]:
    S = [[0] * (kmax + 1) for _ in range(kmax + 1)]
    S[0][0] = 1
    for k in range(1, kmax + 1):
        for j in range(1, k + 1):
            S[k][j] = j * S[k - 1][j] + S[k - 1][j - 1]
    return S


def _raw_moments(dist, kmax: int) -> list[Fraction]:
    """E[X^k], k <= kmax, exactly from the factorial moments.

    Distribution parameters are converted with ``Fraction(float)``, which is
    the exact value of the double, so nothing is rounded.
    """
    exact = _exact_dist(dist)
    S = _stirling2_table(kmax)
    fm = [exact.factorial_moment(j) for j in range(kmax + 1)]
    return [sum(S[k][j] * fm[j] for j in range(k + 1)) for k in range(kmax + 1)]


def _exact_dist(dist):
    if isinstance(dist, Poisson):
        return Poisson(Fraction(dist.rate))
    if isinstance(dist, NegBinomial):
        return NegBinomial(Fraction(dist.a), Fraction(dist.p))
    if isinstance(dist, Binomial):
        return Binomial(int(dist.trials), Fraction(dist.theta))
    raise TypeError(f"unsupported marginal {dist!r}")


def _exponents_below(m: int, n: int):
    """All exponent vectors in N^m with total degree < n, graded-lex order."""
    out = []
    for deg in range(n):
        out.extend(sorted(_compositions(deg, [None] * m), reverse=True))
    return out


def _solve_exact(G: list[list[Fraction]], r: list[Fraction]) -> list[Fraction]:
    """Minimal-pivot Gaussian elimination; free variables set to zero.

    G is a Gram matrix, hence the system is consistent even when singular.
    """
    size = len(r)
    M = [row[:] + [r[i]] for i, row in enumerate(G)]
    pivots = []
    row = 0
    for col in range(size):
        piv = next((i for i in range(row, size) if M[i][col] != 0), None)
        if piv is None:
            continue
        M[row], M[piv] = M[piv], M[row]
        inv = 1 / M[row][col]
        M[row] = [v * inv for v in M[row]]
        for i in range(size):
            if i != row and M[i][col] != 0:
                f = M[i][col]
                M[i] = [a - f * b for a, b in zip(M[i], M[row])]
        pivots.append(col)
        row += 1
        if row == size:
            break
    for i in range(row, size):
        if M[i][size] != 0:
            raise ArithmeticError("inconsistent moment system")
    sol = [Fraction(0)] * size
    for i, col in enumerate(pivots):
        sol[col] = M[i][size]
    return sol


@dataclass
class Polynomial:
    """Multivariate polynomial {exponent tuple: coefficient}."""

    terms: dict
    condition_number: float = 1.0

    def __call__(self, occ: Sequence[int]):
        total = 0
        for e, c in self.terms.items():
            if c == 0:
                continue
            term = c
            for k, d in zip(occ, e):
                term *= k**d
            total += term
        return total

    def evaluate_many(self, occ: np.ndarray) -> np.ndarray:
        """Float evaluation on the rows of an integer array."""
        occ = np.asarray(occ, dtype=float)
        out = np.zeros(occ.shape[0])
        for e, c in self.terms.items():
            if c:
                out += float(c) * np.prod(occ ** np.asarray(e, dtype=float), axis=1)
        return out

    def coefficient(self, e) -> float:
        return self.terms.get(tuple(e), 0)


def gram_schmidt_In(marginals: Sequence, degrees: Sequence[int]) -> Polynomial:
    """Orthogonalize the monomial prod_x eta_x^{d_x} against lower degrees.

    Projects the monomial onto the orthogonal complement of all polynomials of
    total degree ``< sum(degrees)`` in L^2 of the product of ``marginals``.
    The Gram matrix of monomials is built from exact moments (each moment of
    the product factorizes over sites) and solved in rational arithmetic, so
    the result does not depend on the closed-form polynomial families.  The
    float condition number of the Gram matrix is attached for reporting.
    """
    degrees = tuple(int(d) for d in degrees)
    m = len(marginals)
    if len(degrees) != m:
        raise ValueError("one degree per marginal required")
    n = sum(degrees)
    if n == 0:
        return Polynomial({degrees: Fraction(1)})
    basis = _exponents_below(m, n)
    kmax = 2 * n
    moments = [_raw_moments(d, kmax) for d in marginals]

    def mom(e):
        out = Fraction(1)
        for x, k in enumerate(e):
            out *= moments[x][k]
        return out

    G = [[mom(tuple(a + b for a, b in zip(ea, eb))) for eb in basis] for ea in basis]
    r = [mom(tuple(a + d for a, d in zip(ea, degrees))) for ea in basis]
    coef = _solve_exact(G, r)
    terms = {degrees: Fraction(1)}
    for e, c in zip(basis, coef):
        if c != 0:
            terms[e] = terms.get(e, 0) - c
    with np.errstate(all="ignore"):
        Gf = np.array(G, dtype=float)
        cond = float(np.linalg.cond(Gf)) if Gf.size else 1.0
    return Polynomial(terms, cond)


def orthogonal_polynomial_basis(rho: ReversibleMeasureSpec):
    """Closed-form monic orthogonal polynomial of each site marginal.

    Charlier for Poisson, Meixner for negative binomial and Krawtchouk for
    binomial marginals.  Returns ``P(x, k, value)``.
    """
    marg = rho.marginals

    def P(x: int, k: int, value):
        d = marg[x]
        if isinstance(d, Poisson):
            return orthopoly.charlier(k, value, d.rate)
        if isinstance(d, NegBinomial):
            return orthopoly.meixner(k, value, d.a, d.p)
        if k > d.trials:
            return 0
        return orthopoly.krawtchouk(k, value, d.trials, d.theta)

    return P


# --- duality functions ---------------------------------------------------------


@dataclass
class DualityFunctions:
    """Cheap, classical and orthogonal self-duality functions D(xi, eta)."""

    rho: ReversibleMeasureSpec
    cheap: Callable
    classical: Callable
    orthogonal: Callable

    def by_name(self, name: str) -> Callable:
        return {"cheap": self.cheap, "classical": self.classical, "orthogonal": self.orthogonal}[name]


def duality_functions(sys: SiteSystem, theta) -> DualityFunctions:
    rho = reversible_measure(sys, theta)
    if sys.sigma == -1 and theta >= 1:
        raise ValueError("duality functions need theta < 1 for exclusion")
    marg = rho.marginals
    P = orthogonal_polynomial_basis(rho)

    def norm(x, k):
        return marg[x].pmf(k) * math.factorial(k)

    def cheap(xi, eta):
        if tuple(xi) != tuple(eta):
            return 0.0
        return 1.0 / rho.mass(xi)

    def classical(xi, eta):
        out = 1.0
        for x, (k, e) in enumerate(zip(xi, eta)):
            out *= float(falling_factorial(e, k)) / norm(x, k)
        return out

    def orthogonal(xi, eta):
        out = 1.0
        for x, (k, e) in enumerate(zip(xi, eta)):
            out *= float(P(x, k, e)) / norm(x, k)
        return out

    return DualityFunctions(rho, cheap, classical, orthogonal)


def check_duality(sys: SiteSystem, theta, D: Callable | str, t: float, xi, eta,
                  tolerance: float = 1e-10) -> VerificationReport:
    """Compare E_eta[D(xi, eta_t)] with E_xi[D(xi_t, eta)] using exact semigroups."""
    start = time.perf_counter()
    name = D if isinstance(D, str) else getattr(D, "__name__", "duality")
    if isinstance(D, str):
        D = duality_functions(sys, theta).by_name(D)
    xi, eta = tuple(xi), tuple(eta)
    Geta = build_generator(sys, sum(eta))
    Gxi = build_generator(sys, sum(xi))
    g = np.array([D(xi, e) for e in Geta.states])
    h = np.array([D(x, eta) for x in Gxi.states])
    lhs = float(semigroup_apply(Geta, t, g)[Geta.index[eta]])
    rhs = float(semigroup_apply(Gxi, t, h)[Gxi.index[xi]])
    rep = exact_report(
        f"duality[{name}]", lhs, rhs, tolerance,
        inputs={"sys": sys.to_dict(), "theta": theta, "t": t, "xi": xi, "eta": eta},
    )
    rep.wall_time = time.perf_counter() - start
    return rep


# --- intertwining -------------------------------------------------------------


def _function_table(f, states) -> np.ndarray:
    if isinstance(f, np.ndarray):
        return f.astype(float)
    return np.array([float(f(*xs)) for xs in states])


def _J(table: dict, n: int, occ) -> float:
    eta = CountingMeasure.from_occupation(occ)
    g = GenericFunction(n, lambda *xs: table[tuple(xs)], bound=max(map(abs, table.values()), default=0.0) + 1.0)
    return factorial_integral(eta, n, g)


def check_intertwining(sys: SiteSystem, n: int, t: float, f, mode: str = "classical",
                       total: int | None = None, theta=0.5,
                       tolerance: float = 1e-9) -> VerificationReport:
    """Check P_t K_n(f)(eta) = K_n(p_t^[n] f, eta) on every state of a sector.

    ``K_n`` is ``J_n`` (integral against the factorial measure) in classical
    mode and ``I_n`` (its orthogonalization in L^2 of the reversible measure
    with parameter ``theta``) in orthogonal mode.  ``f`` is a function of
    ``n`` sites; ``total`` is the particle number of the sector.
    """
    start = time.perf_counter()
    total = n if total is None else total
    lab = build_labelled_generator(sys, n)
    sector = build_generator(sys, total)
    f_tab = _function_table(f, lab.states)
    g_tab = semigroup_apply(lab, t, f_tab)
    if mode == "classical":
        ft = dict(zip(lab.states, f_tab))
        gt = dict(zip(lab.states, g_tab))
        before = np.array([_J(ft, n, occ) for occ in sector.states])
        rhs = np.array([_J(gt, n, occ) for occ in sector.states])
    elif mode == "orthogonal":
        rho = reversible_measure(sys, theta)
        cache: dict = {}

        def In_of_point(xs):
            xi = tuple(np.bincount(xs, minlength=sys.m)) if n else (0,) * sys.m
            if xi not in cache:
                poly = gram_schmidt_In(rho.marginals, xi)
                cache[xi] = np.array([float(poly(occ)) for occ in sector.states])
            return cache[xi]

        basis = np.array([In_of_point(xs) for xs in lab.states])  # (labelled, sector)
        before = f_tab @ basis
        rhs = g_tab @ basis
    else:
        raise ValueError(f"unknown mode {mode!r}")
    lhs = semigroup_apply(sector, t, before)
    rep = exact_report(
        f"intertwining[{mode}]", lhs, rhs, tolerance,
        inputs={"sys": sys.to_dict(), "n": n, "t": t, "total": total, "mode": mode,
                "theta": theta, "f": f_tab},
        details={"states": len(sector.states)},
    )
    rep.wall_time = time.perf_counter() - start
    return rep
