"""Univariate special functions and monic orthogonal polynomial families.

Charlier polynomials are orthogonal for the Poisson law, Meixner polynomials
for the negative binomial law and Krawtchouk polynomials for the binomial law.
All three are normalized to be monic.

Evaluation is exact (``fractions.Fraction``) when every argument is an ``int``
or a ``Fraction``; as soon as one float is involved the computation runs in
double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from numbers import Rational

from scipy import stats

__all__ = [
    "Family",
    "PolyParams",
    "Poisson",
    "NegBinomial",
    "Binomial",
    "falling_factorial",
    "rising_factorial",
    "charlier",
    "meixner",
    "krawtchouk",
    "krawtchouk_recurrence",
    "meixner_generating",
    "pmf",
    "evaluate",
    "orthogonality_constant",
    "TAIL_MASS",
]

TAIL_MASS = 1e-14


def _exact(*values) -> bool:
    return all(isinstance(v, Rational) for v in values)


def _lift(values):
    """Return values as Fractions if all are rational, else as floats."""
    if _exact(*values):
        return [Fraction(v) for v in values]
    return [float(v) for v in values]


def falling_factorial(a, k: int):
    """a (a-1) ... (a-k+1), with the empty product equal to 1."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    out = 1
    for j in range(k):
        out *= a - j
    return out


def rising_factorial(a, k: int):
    """a (a+1) ... (a+k-1), with the empty product equal to 1."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    out = 1
    for j in range(k):
        out *= a + j
    return out


class Family(str, Enum):
    CHARLIER = "charlier"
    MEIXNER = "meixner"
    KRAWTCHOUK = "krawtchouk"


@dataclass(frozen=True)
class PolyParams:
    """Parameters of one polynomial family.

    ``alpha`` is the Charlier rate, the Meixner shape or the number of
    Krawtchouk trials; ``p`` is the Meixner/Krawtchouk success parameter.
    """

    family: Family
    alpha: float
    p: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.family is not Family.CHARLIER:
            if self.p is None or not 0 < self.p < 1:
                raise ValueError("p must lie in (0, 1)")
        if self.family is Family.KRAWTCHOUK and int(self.alpha) != self.alpha:
            raise ValueError("Krawtchouk trials must be a positive integer")


def charlier(n: int, x, alpha):
    """Monic Charlier polynomial C_n(x; alpha)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    x, alpha = _lift((x, alpha))
    return sum(
        math.comb(n, k) * (-alpha) ** (n - k) * falling_factorial(x, k)
        for k in range(n + 1)
    )


def meixner(n: int, x, a, p):
    """Monic Meixner polynomial M_n(x; a; p)."""
    if not a > 0:
        raise ValueError("a must be positive")
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    x, a, p = _lift((x, a, p))
    r = 1 - 1 / p
    return sum(
        math.comb(n, k)
        * r ** (k - n)
        * rising_factorial(a + k, n - k)
        * falling_factorial(x, k)
        for k in range(n + 1)
    )


@lru_cache(maxsize=256)
def krawtchouk_recurrence(trials: int, theta):
    """Three-term recurrence coefficients of the monic Krawtchouk family.

    Obtained by discrete Gram-Schmidt (Stieltjes procedure) on the support
    ``{0, ..., trials}`` weighted by ``Binomial(trials, theta)``. Returns
    ``(b, c)`` with ``P_{k+1}(x) = (x - b[k]) P_k(x) - c[k] P_{k-1}(x)``.
    """
    if int(trials) != trials or trials < 1:
        raise ValueError("trials must be a positive integer")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    trials = int(trials)
    (theta,) = _lift((theta,))
    xs = list(range(trials + 1))
    w = [math.comb(trials, x) * theta**x * (1 - theta) ** (trials - x) for x in xs]
    prev = [0] * len(xs)
    cur = [1] * len(xs)
    norm_prev = None
    b, c = [], []
    for k in range(trials):
        norm = sum(wi * pi * pi for wi, pi in zip(w, cur))
        bk = sum(wi * xi * pi * pi for wi, xi, pi in zip(w, xs, cur)) / norm
        ck = 0 if norm_prev is None else norm / norm_prev
        b.append(bk)
        c.append(ck)
        nxt = [(xi - bk) * pi - ck * qi for xi, pi, qi in zip(xs, cur, prev)]
        prev, cur, norm_prev = cur, nxt, norm
    return tuple(b), tuple(c)


def krawtchouk(n: int, x, trials: int, theta):
    """Monic Krawtchouk polynomial of degree ``n <= trials``."""
    if n > trials:
        raise ValueError(f"degree {n} exceeds number of trials {trials}")
    if n < 0:
        raise ValueError("degree must be nonnegative")
    b, c = krawtchouk_recurrence(int(trials), theta)
    if _exact(x, theta):
        x = Fraction(x)
    else:
        x = float(x)
    prev, cur = 0, 1
    for k in range(n):
        prev, cur = cur, (x - b[k]) * cur - c[k] * prev
    return cur


def meixner_generating(t, x, a, p):
    """Closed-form generating function sum_n t^n/n! M_n(x; a; p)."""
    num = 1 - p + t
    den = 1 - p + t * p
    if den <= 0 or num <= 0:
        raise ValueError("generating function bases must be positive")
    return (num / den) ** x * ((1 - p) / den) ** a


# --- distributions --------------------------------------------------------


@dataclass(frozen=True)
class Poisson:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("Poisson rate must be positive")

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        lam = float(self.rate)
        return math.exp(-lam + k * math.log(lam) - math.lgamma(k + 1))

    def factorial_moment(self, j: int):
        return self.rate**j

    def mean(self):
        return self.rate

    def variance(self):
        return self.rate

    def sf(self, k: int) -> float:
        return float(stats.poisson.sf(k, float(self.rate)))

    def support_bound(self, tail: float = TAIL_MASS) -> int:
        return _tail_cutoff(self, tail)


@dataclass(frozen=True)
class NegBinomial:
    """Law with pmf (a)^(k) p^k / k! (1-p)^a."""

    a: float
    p: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("shape a must be positive")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        a, p = float(self.a), float(self.p)
        logv = (
            math.lgamma(a + k) - math.lgamma(a) - math.lgamma(k + 1)
            + k * math.log(p) + a * math.log1p(-p)
        )
        return math.exp(logv)

    def factorial_moment(self, j: int):
        return rising_factorial(self.a, j) * (self.p / (1 - self.p)) ** j

    def mean(self):
        return self.a * self.p / (1 - self.p)

    def variance(self):
        return self.a * self.p / (1 - self.p) ** 2

    def sf(self, k: int) -> float:
        return float(stats.nbinom.sf(k, float(self.a), 1 - float(self.p)))

    def support_bound(self, tail: float = TAIL_MASS) -> int:
        return _tail_cutoff(self, tail)


@dataclass(frozen=True)
class Binomial:
    trials: int
    theta: float

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")

    def pmf(self, k: int) -> float:
        m = int(self.trials)
        if k < 0 or k > m:
            return 0.0
        th = float(self.theta)
        return math.comb(m, k) * th**k * (1 - th) ** (m - k)

    def factorial_moment(self, j: int):
        return falling_factorial(int(self.trials), j) * self.theta**j

    def mean(self):
        return self.trials * self.theta

    def variance(self):
        return self.trials * self.theta * (1 - self.theta)

    def sf(self, k: int) -> float:
        return float(stats.binom.sf(k, int(self.trials), float(self.theta)))

    def support_bound(self, tail: float = TAIL_MASS) -> int:
        return int(self.trials)


def _tail_cutoff(dist, tail: float) -> int:
    """Smallest L with P(X > L) < tail."""
    lo = max(int(float(dist.mean())), 0)
    while dist.sf(lo) >= tail:
        lo = 2 * lo + 1
    hi, lo = lo, 0
    while lo < hi:
        mid = (lo + hi) // 2
        if dist.sf(mid) < tail:
            hi = mid
        else:
            lo = mid + 1
    return lo


def pmf(dist, k: int) -> float:
    """Probability mass of ``dist`` at ``k``."""
    return dist.pmf(k)


def evaluate(params: PolyParams, n: int, x):
    """Evaluate the degree-``n`` member of the family in ``params`` at ``x``."""
    if params.family is Family.CHARLIER:
        return charlier(n, x, params.alpha)
    if params.family is Family.MEIXNER:
        return meixner(n, x, params.alpha, params.p)
    return krawtchouk(n, x, int(params.alpha), params.p)


def orthogonality_constant(params: PolyParams, n: int):
    """Squared norm of the degree-``n`` monic polynomial under its weight."""
    if params.family is Family.CHARLIER:
        return params.alpha**n * math.factorial(n)
    if params.family is Family.MEIXNER:
        a, p = params.alpha, params.p
        return p**n * math.factorial(n) * rising_factorial(a, n) / (1 - p) ** (2 * n)
    m, th = int(params.alpha), params.p
    if n > m:
        return 0
    # monic Krawtchouk: n! (m)_n (theta (1-theta))^n
    return math.factorial(n) * falling_factorial(m, n) * (th * (1 - th)) ** n
