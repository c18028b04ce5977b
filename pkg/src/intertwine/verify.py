"""Checks that tie the simulators and exact engines to the identities they
should satisfy.

Every function returns a :class:`~intertwine.report.VerificationReport`.
Deterministic comparisons use an absolute tolerance; Monte Carlo comparisons
carry a standard error and pass at ``|z| <= 3``.  When a check bundles several
comparisons, ``z_score`` is the one of largest magnitude and ``details`` lists
all of them.
"""

from __future__ import annotations

import itertools
import math
import time
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from . import orthopoly
from .discrete_systems import (
    SiteSystem,
    build_generator,
    check_intertwining,
    detailed_balance_defect,
    gram_schmidt_In,
    semigroup_apply,
)
from .gsip import (
    AlphaMeasure,
    ConductanceFn,
    cell_counts,
    reduce_to_discrete,
    run_batches,
    sample_pascal_batch,
    simulate_positions,
)
from .orthopoly import NegBinomial, Poisson
from .pointconfig import (
    CountingMeasure,
    Indicator,
    Interval,
    ProductFunction,
    TensorIndicator,
    factorial_integral,
    lambda_n_integral,
)
from .report import SE_FLOOR, Z_LIMIT, VerificationReport, digest, exact_report, mc_report

__all__ = [
    "z_score",
    "frequency_z",
    "chi_square_z",
    "correlation_z",
    "mc_classical_intertwining_gsip",
    "exact_intertwining_discrete",
    "meixner_product_check",
    "lambda_orthogonality_check",
    "charlier_product_check",
    "factorization_check",
    "pascal_sampler_check",
    "stationarity_check_gsip",
    "reduced_detailed_balance",
    "reduction_check",
    "orthogonality_check",
    "convolution_check",
    "partition_identity_check",
    "consistency_check",
]

POINTWISE_TOL = 1e-8
# second stream family, kept apart from the first by a large offset
RHS_STREAMS = 1 << 32


# --- statistics ---------------------------------------------------------------


def z_score(estimate: float, target: float, se: float) -> float:
    return (estimate - target) / max(se, SE_FLOOR)


def frequency_z(hits: np.ndarray, p: float) -> float:
    """z of an empirical frequency against a known probability, exact-p variance."""
    n = hits.size
    se = math.sqrt(max(p * (1 - p), 0.0) / n)
    return z_score(float(hits.mean()), p, se)


def chi_square_z(observed: np.ndarray, probs: np.ndarray, min_expected: float = 5.0):
    """Pearson chi-square with a binned tail, mapped to a one-sided normal z.

    Categories are merged from the right until every expected count is at
    least ``min_expected``; the last bin absorbs the remaining mass.
    Returns ``(statistic, dof, z)``.
    """
    observed = np.asarray(observed, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = observed.sum()
    obs, exp = [], []
    o_acc = e_acc = 0.0
    for o, p in zip(observed, probs):
        o_acc += o
        e_acc += p * n
        if e_acc >= min_expected:
            obs.append(o_acc)
            exp.append(e_acc)
            o_acc = e_acc = 0.0
    tail_o = o_acc + (n - observed.sum())
    tail_e = e_acc + n * max(1.0 - probs.sum(), 0.0)
    if exp and tail_e < min_expected:
        obs[-1] += tail_o
        exp[-1] += tail_e
    elif tail_e > 0 or tail_o > 0:
        obs.append(tail_o)
        exp.append(tail_e)
    if len(exp) < 2:
        raise ValueError("too few samples to form two chi-square bins")
    obs, exp = np.array(obs), np.array(exp)
    stat = float(((obs - exp) ** 2 / exp).sum())
    dof = len(exp) - 1
    pval = float(stats.chi2.sf(stat, dof))
    z = float(stats.norm.isf(pval)) if pval > 0 else math.inf
    return stat, dof, z


def correlation_z(a: np.ndarray, b: np.ndarray) -> float:
    """sqrt(n) times the sample correlation; approximately N(0, 1) under independence."""
    if a.std() == 0 or b.std() == 0:
        return 0.0
    r = float(np.corrcoef(a, b)[0, 1])
    return r * math.sqrt(a.size)


def _bundle(check: str, parts: list[tuple[str, float]], seed, inputs, lhs=None, rhs=None,
            se=None) -> VerificationReport:
    """MC report whose z is the largest-magnitude z among ``parts``."""
    name, worst = max(parts, key=lambda p: abs(p[1]))
    lhs = worst if lhs is None else lhs
    rhs = 0.0 if rhs is None else rhs
    diff = float(np.max(np.abs(np.asarray(lhs, dtype=float) - np.asarray(rhs, dtype=float)), initial=0.0))
    return VerificationReport(
        check=check, lhs=lhs, rhs=rhs, abs_diff=diff,
        passed=bool(math.isfinite(worst) and abs(worst) <= Z_LIMIT), mode="mc",
        std_error=max(float(se if se is not None else 1.0), SE_FLOOR), z_score=float(worst),
        seed=seed, inputs_digest=digest(inputs),
        details={"components": {k: v for k, v in parts}, "worst": name},
    )


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        rep = fn(*args, **kwargs)
        rep.wall_time = time.perf_counter() - start
        return rep

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    wrapper.__wrapped__ = fn
    return wrapper


def _as_rows(points: Sequence[float], samples: int) -> np.ndarray:
    return np.tile(np.asarray(points, dtype=float), (samples, 1))


def _tensor_values(X: np.ndarray, f: TensorIndicator) -> np.ndarray:
    """f evaluated on each row of labelled positions X (shape (B, n))."""
    cells = [c for c, d in zip(f.cells, f.degrees) for _ in range(d)]
    out = np.ones(X.shape[0])
    for k, cell in enumerate(cells):
        out *= (X[:, k] >= cell.lo) & (X[:, k] < cell.hi)
    return out


def _factorial_values(X: np.ndarray, f: TensorIndicator) -> np.ndarray:
    """int f d eta^(n) for each row, via falling factorials of cell counts."""
    counts = cell_counts(X, f.cells)
    out = np.ones(X.shape[0])
    for k, d in enumerate(f.degrees):
        for j in range(d):
            out *= counts[:, k] - j
    return out


# --- intertwining ---------------------------------------------------------------


@_timed
def mc_classical_intertwining_gsip(eta0: CountingMeasure, f: TensorIndicator, c: ConductanceFn,
                                   alpha: AlphaMeasure, t: float, samples: int,
                                   seed: int = 0) -> VerificationReport:
    """Monte Carlo test of E_eta[J_n(f, eta_t)] = J_n(p_t^[n] f, eta) for the gSIP.

    The left side averages ``J_n(f, eta_t)`` over unlabelled trajectories from
    ``eta0``.  The right side sums ``E[f(X_t)]`` over injective ``n``-tuples of
    ``eta0``'s particles, with ``X`` the labelled ``n``-particle process; it is
    estimated by drawing a uniform injective tuple per sample and scaling by
    the number of tuples, from an independent set of streams.
    """
    n = f.arity
    N = eta0.total
    inputs = {"eta0": eta0.points, "cells": [(b.lo, b.hi) for b in f.cells],
              "degrees": f.degrees, "c": c.to_dict(), "alpha": alpha.to_dict(), "t": t,
              "samples": samples}
    if n > N:
        return exact_report("mc_intertwining_gsip", 0.0, 0.0, 0.0, inputs=inputs,
                            details={"degenerate": "n exceeds particle number"})
    if n > 3 or N > 12:
        raise ValueError("supported sizes are n <= 3 and at most 12 particles")
    tuples = list(itertools.permutations(range(N), n))
    pts = np.asarray(eta0.points)
    if t == 0:
        lhs = factorial_integral(eta0, n, f)
        rhs = float(sum(f(*pts[list(tp)]) for tp in tuples))
        return exact_report("mc_intertwining_gsip", lhs, rhs, 1e-12, inputs=inputs)
    x0 = _as_rows(pts, min(samples, 4096))

    def lhs_job(rng, size):
        return _factorial_values(simulate_positions(x0[:size], c, alpha, t, rng), f)[:, None]

    def rhs_job(rng, size):
        pick = rng.integers(len(tuples), size=size)
        start = pts[np.array(tuples)[pick]]
        return _tensor_values(simulate_positions(start, c, alpha, t, rng), f)[:, None]

    L = run_batches(lhs_job, samples, seed)[:, 0]
    R = len(tuples) * run_batches(rhs_job, samples, seed, first=RHS_STREAMS)[:, 0]
    se = math.sqrt(L.var(ddof=1) / L.size + R.var(ddof=1) / R.size)
    return mc_report("mc_intertwining_gsip", float(L.mean()), float(R.mean()), se, seed,
                     inputs=inputs, details={"n": n, "tuples": len(tuples)})


def exact_intertwining_discrete(sys: SiteSystem, n: int, t: float, f, mode: str = "classical",
                                total: int | None = None, theta=0.5,
                                tolerance: float = 1e-9) -> VerificationReport:
    """Max deviation of the intertwining relation over every state of a sector."""
    return check_intertwining(sys, n, t, f, mode=mode, total=total, theta=theta, tolerance=tolerance)


# --- orthogonal polynomials of cell counts -----------------------------------------


def _exact_poly_value(poly, counts) -> Fraction:
    return Fraction(poly(tuple(int(k) for k in counts)))


def _moment_inner(marginals, p1, p2) -> Fraction:
    """E[p1 p2] under the product of ``marginals``, exactly."""
    from .discrete_systems import _raw_moments

    deg = max(sum(e) for e in p1.terms) + max(sum(e) for e in p2.terms)
    moments = [_raw_moments(d, deg) for d in marginals]
    out = Fraction(0)
    for e1, a in p1.terms.items():
        for e2, b in p2.terms.items():
            term = Fraction(a) * Fraction(b)
            for x, (i, j) in enumerate(zip(e1, e2)):
                term *= moments[x][i + j]
            out += term
    return out


def _lower_degrees(degrees: Sequence[int]) -> list[tuple[int, ...]]:
    """Degree vectors one below ``degrees`` in one coordinate, plus all zeros."""
    out = {tuple(0 for _ in degrees)}
    for k, d in enumerate(degrees):
        if d:
            out.add(tuple(v - (i == k) for i, v in enumerate(degrees)))
    out.discard(tuple(degrees))
    return sorted(out)


def _pascal_counts(alpha: AlphaMeasure, p: float, cells, samples: int, seed: int) -> np.ndarray:
    return cell_counts(sample_pascal_batch(alpha, p, samples, seed), cells)


def _poisson_rows(lam: AlphaMeasure, rng: np.random.Generator, size: int) -> np.ndarray:
    K = rng.poisson(lam.total, size=size)
    locs = lam.sample(rng, int(K.sum()))
    width = int(K.max(initial=0))
    out = np.full((size, width), np.nan)
    start = np.concatenate([[0], np.cumsum(K)[:-1]])
    col = np.arange(locs.size) - np.repeat(start, K)
    out[np.repeat(np.arange(size), K), col] = locs
    return out


def _poisson_counts(lam: AlphaMeasure, cells, samples: int, seed: int) -> np.ndarray:
    return cell_counts(run_batches(lambda rng, n: _poisson_rows(lam, rng, n), samples, seed), cells)


def _poly_product(p1, p2):
    from .discrete_systems import Polynomial

    terms: dict = {}
    for e1, a in p1.terms.items():
        for e2, b in p2.terms.items():
            e = tuple(i + j for i, j in zip(e1, e2))
            terms[e] = terms.get(e, 0) + Fraction(a) * Fraction(b)
    return Polynomial(terms)


def _screen_z(marginals, w: np.ndarray, poly, target: Fraction) -> float:
    """z of the sample mean of ``w = poly(counts)`` against its exact mean.

    The standard error comes from the exact variance ``E[poly^2] - target^2``
    rather than the sample variance: products of orthogonal polynomials are
    heavy tailed and the studentized mean is then skewed toward negative z.
    """
    var = _moment_inner(marginals, poly, poly) - target**2
    se = math.sqrt(max(float(var), 0.0) / w.size)
    return z_score(float(w.mean()), float(target), se)


def _product_check(name, marginals, closed_form, counts, degrees, pointwise: int, inputs, seed,
                   norm_target=None):
    """Oracle-vs-closed-form on sampled counts plus MC orthogonality screens."""
    poly = gram_schmidt_In(marginals, degrees)
    sample = counts[:pointwise]
    oracle = np.array([float(_exact_poly_value(poly, row)) for row in sample])
    closed = np.array([float(closed_form(row)) for row in sample])
    diff = float(np.max(np.abs(oracle - closed), initial=0.0))
    parts = []
    values = poly.evaluate_many(counts)
    for low in _lower_degrees(degrees):
        other = gram_schmidt_In(marginals, low)
        prod = _poly_product(poly, other)
        parts.append((f"E[I{tuple(degrees)} I{low}]",
                      _screen_z(marginals, prod.evaluate_many(counts), prod, Fraction(0))))
    if norm_target is not None:
        sq = _poly_product(poly, poly)
        parts.append(("E[I^2]", _screen_z(marginals, values**2, sq, Fraction(norm_target))))
    worst = max((abs(z) for _, z in parts), default=0.0)
    rep = exact_report(name, oracle, closed, POINTWISE_TOL, inputs=inputs, diff=diff,
                       details={"mc_z": dict(parts), "condition_number": poly.condition_number})
    rep.seed = seed
    rep.z_score = max((z for _, z in parts), key=abs, default=0.0)
    rep.passed = bool(rep.passed and worst <= Z_LIMIT)
    return rep


@_timed
def meixner_product_check(alpha: AlphaMeasure, p: float, cells: Sequence[Interval],
                          degrees: Sequence[int], samples: int = 100_000, seed: int = 0,
                          pointwise: int = 100) -> VerificationReport:
    """Cell-count orthogonal polynomial of a Pascal process against Meixner products.

    The oracle projects ``prod_k zeta(A_k)^{d_k}`` in ``L^2`` of the product
    of ``NB(alpha(A_k), p)``; it must coincide with ``prod_k M_{d_k}`` at the
    first ``pointwise`` sampled configurations.  All samples are used to screen
    orthogonality against lower-degree members.
    """
    masses = [alpha.mass(a) for a in cells]
    marg = [NegBinomial(m, p) for m in masses]
    fa = [Fraction(m) for m in masses]
    fp = Fraction(p)

    def closed(row):
        out = Fraction(1)
        for k, d in enumerate(degrees):
            out *= orthopoly.meixner(d, int(row[k]), fa[k], fp)
        return out

    counts = _pascal_counts(alpha, p, cells, samples, seed)
    inputs = {"alpha": alpha.to_dict(), "p": p, "cells": [(a.lo, a.hi) for a in cells],
              "degrees": list(degrees), "samples": samples, "seed": seed}
    return _product_check("meixner_product", marg, closed, counts, degrees, pointwise, inputs, seed)


@_timed
def charlier_product_check(lambda_measure: AlphaMeasure, cells: Sequence[Interval],
                           degrees: Sequence[int], samples: int = 100_000, seed: int = 0,
                           pointwise: int = 100) -> VerificationReport:
    """Poisson analogue of :func:`meixner_product_check` with Charlier products.

    Also compares ``E[I_n^2]`` with ``n! int f~^2 d lambda^n = prod_k d_k!
    lambda(B_k)^{d_k}`` by Monte Carlo.
    """
    masses = [lambda_measure.mass(a) for a in cells]
    marg = [Poisson(m) for m in masses]
    fa = [Fraction(m) for m in masses]

    def closed(row):
        out = Fraction(1)
        for k, d in enumerate(degrees):
            out *= orthopoly.charlier(d, int(row[k]), fa[k])
        return out

    target = float(np.prod([math.factorial(d) * m**d for d, m in zip(degrees, masses)]))
    counts = _poisson_counts(lambda_measure, cells, samples, seed)
    inputs = {"lambda": lambda_measure.to_dict(), "cells": [(a.lo, a.hi) for a in cells],
              "degrees": list(degrees), "samples": samples, "seed": seed}
    return _product_check("charlier_product", marg, closed, counts, degrees, pointwise, inputs,
                          seed, norm_target=target)


def _symmetrized_square(alpha, cells: Sequence[Interval], degrees: Sequence[int]) -> float:
    """int (sym f)^2 d lambda_n for f the tensor indicator of ``cells``/``degrees``."""
    slots = [c for c, d in zip(cells, degrees) for _ in range(d)]
    n = len(slots)
    perms = list(itertools.permutations(range(n)))
    total = 0.0
    cache: dict = {}
    for p1 in perms:
        for p2 in perms:
            key = tuple((slots[i], slots[j]) for i, j in zip(p1, p2))
            if key not in cache:
                f = ProductFunction([Indicator(a & b) for a, b in key])
                cache[key] = lambda_n_integral(alpha, n, f)
            total += cache[key]
    return total / math.factorial(n) ** 2


@_timed
def lambda_orthogonality_check(alpha: AlphaMeasure, p: float, cells: Sequence[Interval],
                               degrees: Sequence[int],
                               tolerance: float = POINTWISE_TOL) -> VerificationReport:
    """E_rho[I_n(f)^2] against p^n n! / (1-p)^{2n} int f^2 d lambda_n.

    The left side comes from the moment oracle under the product of
    ``NB(alpha(A_k), p)``; the right side symmetrizes the tensor indicator and
    integrates against the partition-sum measure ``lambda_n``.  Cross inner
    products with the lower-degree members are recorded and must vanish.
    """
    masses = [alpha.mass(a) for a in cells]
    marg = [NegBinomial(m, p) for m in masses]
    n = sum(degrees)
    poly = gram_schmidt_In(marg, degrees)
    lhs = float(_moment_inner(marg, poly, poly))
    rhs = p**n * math.factorial(n) / (1 - p) ** (2 * n) * _symmetrized_square(alpha, cells, degrees)
    cross = {str(low): float(_moment_inner(marg, poly, gram_schmidt_In(marg, low)))
             for low in _lower_degrees(degrees)}
    diff = max([abs(lhs - rhs)] + [abs(v) for v in cross.values()])
    return exact_report("lambda_orthogonality", lhs, rhs, tolerance, diff=diff,
                        inputs={"alpha": alpha.to_dict(), "p": p,
                                "cells": [(a.lo, a.hi) for a in cells], "degrees": list(degrees)},
                        details={"cross": cross})


@_timed
def factorization_check(sampler: str, intensity: AlphaMeasure, cells: Sequence[Interval],
                        split: tuple[Sequence[int], Sequence[int]], p: float = 0.5,
                        samples: int = 100, seed: int = 0) -> VerificationReport:
    """I_{d1+d2}(f1 (x) f2) = I_{d1}(f1) I_{d2}(f2) on sampled configurations.

    ``split`` gives the degree vectors of ``f1`` and ``f2`` over the common
    list of disjoint ``cells``; each side is an independent oracle projection.
    """
    d1, d2 = (tuple(int(v) for v in s) for s in split)
    if len(d1) != len(cells) or len(d2) != len(cells):
        raise ValueError("each degree vector needs one entry per cell")
    both = tuple(a + b for a, b in zip(d1, d2))
    if any(a and b for a, b in zip(d1, d2)):
        raise ValueError("f1 and f2 must live on disjoint cells")
    masses = [intensity.mass(a) for a in cells]
    if sampler == "poisson":
        marg = [Poisson(m) for m in masses]
        counts = _poisson_counts(intensity, cells, samples, seed)
    elif sampler == "pascal":
        marg = [NegBinomial(m, p) for m in masses]
        counts = _pascal_counts(intensity, p, cells, samples, seed)
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    P, P1, P2 = (gram_schmidt_In(marg, d) for d in (both, d1, d2))
    lhs = np.array([float(_exact_poly_value(P, row)) for row in counts])
    rhs = np.array([float(_exact_poly_value(P1, row) * _exact_poly_value(P2, row)) for row in counts])
    rep = exact_report(f"factorization[{sampler}]", lhs, rhs, POINTWISE_TOL,
                       inputs={"intensity": intensity.to_dict(), "p": p, "split": [d1, d2],
                               "cells": [(a.lo, a.hi) for a in cells], "samples": samples})
    rep.seed = seed
    return rep


# --- Pascal sampler and gSIP stationarity ---------------------------------------------


def _nb_table(a: float, p: float, tail: float = 1e-12) -> np.ndarray:
    d = NegBinomial(a, p)
    L = d.support_bound(tail)
    return np.array([d.pmf(k) for k in range(L + 1)])


def _laplace_target(alpha: AlphaMeasure, p: float, fn: Sequence[tuple[Interval, float]]) -> float:
    def phi(y):
        return math.log((1 - p * math.exp(-y)) / (1 - p))

    return math.exp(-sum(phi(v) * alpha.mass(cell) for cell, v in fn))


@_timed
def pascal_sampler_check(alpha: AlphaMeasure, p: float, cells: Sequence[Interval],
                         functions: Sequence[Sequence[tuple[Interval, float]]],
                         samples: int = 100_000, seed: int = 0,
                         max_k: int = 6) -> VerificationReport:
    """Per-cell negative binomial marginals, pairwise independence and the
    Laplace functional of the Pascal sampler.

    ``functions`` are piecewise-constant test functions given as lists of
    ``(cell, value)`` pairs with disjoint cells.
    """
    X = sample_pascal_batch(alpha, p, samples, seed)
    counts = cell_counts(X, cells)
    parts = []
    for k, a in enumerate(cells):
        pmf = _nb_table(alpha.mass(a), p)
        for j in range(min(max_k, pmf.size - 1) + 1):
            if pmf[j] * samples >= 5:
                parts.append((f"cell{k}:P(={j})", frequency_z(counts[:, k] == j, pmf[j])))
    for i, j in itertools.combinations(range(len(cells)), 2):
        parts.append((f"corr({i},{j})", correlation_z(counts[:, i], counts[:, j])))
    for m, fn in enumerate(functions):
        fc = cell_counts(X, [cell for cell, _ in fn])
        vals = np.exp(-(fc * np.array([v for _, v in fn])).sum(axis=1))
        target = _laplace_target(alpha, p, fn)
        parts.append((f"laplace{m}", z_score(vals.mean(), target, vals.std(ddof=1) / math.sqrt(samples))))
    return _bundle("pascal_sampler", parts, seed,
                   inputs={"alpha": alpha.to_dict(), "p": p, "samples": samples,
                           "cells": [(a.lo, a.hi) for a in cells]})


@_timed
def stationarity_check_gsip(alpha: AlphaMeasure, p: float, c: ConductanceFn, t: float,
                            samples: int, cells: Sequence[Interval],
                            seed: int = 0) -> VerificationReport:
    """Cell counts at time ``t`` from a Pascal start against NB(alpha(A_i), p).

    Per-cell chi-square statistics (mapped to one-sided z) and pairwise
    correlation screens.
    """

    def job(rng, size):
        from .gsip import _pascal_rows

        X0 = _pascal_rows(alpha, p, rng, size)
        return cell_counts(simulate_positions(X0, c, alpha, t, rng), cells)

    counts = run_batches(job, samples, seed).astype(int)
    parts, stat_total, dof_total = [], 0.0, 0
    for k, a in enumerate(cells):
        pmf = _nb_table(alpha.mass(a), p)
        obs = np.bincount(counts[:, k], minlength=pmf.size)[: pmf.size]
        stat, dof, z = chi_square_z(obs, pmf)
        stat_total += stat
        dof_total += dof
        parts.append((f"chi2 cell{k}", z))
    for i, j in itertools.combinations(range(len(cells)), 2):
        parts.append((f"corr({i},{j})", correlation_z(counts[:, i], counts[:, j])))
    return _bundle("gsip_stationarity", parts, seed, lhs=stat_total, rhs=float(dof_total),
                   se=math.sqrt(2 * dof_total),
                   inputs={"alpha": alpha.to_dict(), "p": p, "c": c.to_dict(), "t": t,
                           "samples": samples, "cells": [(a.lo, a.hi) for a in cells]})


def reduced_detailed_balance(c: ConductanceFn, alpha: AlphaMeasure, p: float, n: int,
                             tolerance: float = 1e-12) -> VerificationReport:
    """Detailed balance of the product NB(alpha(A_i), p) law for the reduced SIP."""
    sys = reduce_to_discrete(c.cells, c, alpha)
    theta = p / (1 - p)
    defect = detailed_balance_defect(sys, theta, n)
    return exact_report("reduced_detailed_balance", defect, 0.0, tolerance,
                        inputs={"c": c.to_dict(), "alpha": alpha.to_dict(), "p": p, "n": n})


@_timed
def reduction_check(eta0: CountingMeasure, c: ConductanceFn, alpha: AlphaMeasure, t: float,
                    samples: int, seed: int = 0) -> VerificationReport:
    """Law of the cell counts at time ``t`` against the reduced discrete SIP.

    Each sector state gets its own z from the exact probability, using the
    binomial standard error of the oracle.
    """
    cells = c.cells
    sys = reduce_to_discrete(cells, c, alpha)
    occ = tuple(int(v) for v in cell_counts(np.asarray([eta0.points]), cells)[0])
    G = build_generator(sys, eta0.total)
    start = np.zeros(G.size)
    start[G.index[occ]] = 1.0
    exact = semigroup_apply(G, t, start, transpose=True)
    x0 = _as_rows(eta0.points, min(samples, 4096))
    counts = run_batches(lambda rng, n: cell_counts(simulate_positions(x0[:n], c, alpha, t, rng), cells),
                         samples, seed).astype(int)
    index = {s: i for i, s in enumerate(G.states)}
    codes = np.array([index[tuple(r)] for r in map(tuple, counts)])
    emp = np.bincount(codes, minlength=G.size) / samples
    parts = [(f"state{s}", frequency_z(codes == i, exact[i])) for i, s in enumerate(G.states)
             if exact[i] * samples >= 5]
    tv = 0.5 * float(np.abs(emp - exact).sum())
    rep = _bundle("gsip_reduction", parts, seed, lhs=emp, rhs=exact, se=None,
                  inputs={"eta0": eta0.points, "c": c.to_dict(), "alpha": alpha.to_dict(),
                          "t": t, "samples": samples})
    rep.abs_diff = tv
    rep.details["total_variation"] = tv
    return rep


# --- univariate families and partition identities --------------------------------


def orthogonality_check(params: orthopoly.PolyParams, nmax: int = 6,
                        tolerance: float = 1e-10) -> VerificationReport:
    """Quadrature of P_n P_m against the weight versus 1{n=m} h_n.

    The support starts at the point where the tail mass drops below 1e-14
    and is extended while the weighted square of the top-degree polynomial
    is still visible.  Errors are relative to ``sqrt(h_n h_m)``.
    """
    fam = params.family
    if fam is orthopoly.Family.CHARLIER:
        dist = Poisson(params.alpha)
    elif fam is orthopoly.Family.MEIXNER:
        dist = NegBinomial(params.alpha, params.p)
    else:
        dist = orthopoly.Binomial(int(params.alpha), params.p)
        nmax = min(nmax, int(params.alpha))
    h = np.array([float(orthopoly.orthogonality_constant(params, n)) for n in range(nmax + 1)])
    L = dist.support_bound(orthopoly.TAIL_MASS)
    if fam is not orthopoly.Family.KRAWTCHOUK:
        # a tail of mass 1e-14 still carries weight once multiplied by P_n^2
        while dist.pmf(L) * float(orthopoly.evaluate(params, nmax, L)) ** 2 / h[nmax] > 1e-18:
            L += 1
    xs = range(L + 1)
    w = np.array([dist.pmf(x) for x in xs])
    P = np.array([[float(orthopoly.evaluate(params, n, x)) for x in xs] for n in range(nmax + 1)])
    S = (P * w) @ P.T
    expected = np.diag(h)
    rel = np.abs(S - expected) / np.sqrt(np.outer(h, h))
    return exact_report(f"orthogonality[{fam.value}]", S, expected, tolerance,
                        diff=float(rel.max()),
                        inputs={"family": fam.value, "alpha": params.alpha, "p": params.p,
                                "nmax": nmax},
                        details={"support": L})


def convolution_check(a: float, b: float, p: float, nmax: int = 5, xmax: int = 10,
                      tolerance: float = 1e-10) -> VerificationReport:
    """M_n(x+y; a+b; p) = sum_k C(n,k) M_k(x; a; p) M_{n-k}(y; b; p), relative error."""
    worst = 0.0
    for n in range(nmax + 1):
        for x in range(xmax + 1):
            for y in range(xmax + 1):
                lhs = orthopoly.meixner(n, x + y, a + b, p)
                rhs = sum(math.comb(n, k) * orthopoly.meixner(k, x, a, p)
                          * orthopoly.meixner(n - k, y, b, p) for k in range(n + 1))
                worst = max(worst, abs(float(lhs) - float(rhs)) / max(1.0, abs(float(rhs))))
    return exact_report("meixner_convolution", worst, 0.0, tolerance, diff=worst,
                        inputs={"a": a, "b": b, "p": p, "nmax": nmax, "xmax": xmax})


def _random_instance(rng: np.random.Generator, max_points: int, max_n: int):
    from .pointconfig import GenericFunction

    N = int(rng.integers(0, max_points + 1))
    n = int(rng.integers(1, max_n + 1))
    if rng.random() < 0.5:
        m = 3
        eta = CountingMeasure([int(v) for v in rng.integers(0, m, size=N)], space="site", m=m)
        tables = rng.uniform(-1, 1, size=(n, m))
        f = ProductFunction([lambda x, t=t: float(t[x]) for t in tables],
                            bound=float(np.prod(np.abs(tables).max(axis=1))))
    else:
        eta = CountingMeasure(rng.random(N).round(2).clip(0, 0.99).tolist(), space="coord")
        cells = []
        for _ in range(n):
            lo, hi = sorted(rng.random(2))
            cells.append(Interval(float(lo), float(hi)))
        f = ProductFunction([Indicator(c) for c in cells])
    if rng.random() < 0.25:
        g = f
        f = GenericFunction(n, lambda *xs: g(*xs) * (1 + 0.5 * math.cos(len(xs))), bound=1.5 * g.bound)
    return eta, n, f


def partition_identity_check(instances: int = 200, seed: int = 0, max_points: int = 5,
                             max_n: int = 4, tolerance: float = 1e-12) -> VerificationReport:
    """Partition-sum conversions between product and factorial integrals
    against brute-force enumeration on random instances."""
    from .pointconfig import factorial_via_monomials, monomial_via_factorials, product_integral

    from .gsip import stream

    rng = stream(seed, 0)
    worst = 0.0
    for _ in range(instances):
        eta, n, f = _random_instance(rng, max_points, max_n)
        fac = factorial_integral(eta, n, f, method="enumerate")
        prod = product_integral(eta, n, f, method="enumerate")
        d1 = abs(factorial_via_monomials(eta, n, f) - fac)
        d2 = abs(monomial_via_factorials(eta, n, f) - prod)
        worst = max(worst, d1 / max(1.0, abs(fac)), d2 / max(1.0, abs(prod)))
    return exact_report("partition_identities", worst, 0.0, tolerance, diff=worst,
                        inputs={"instances": instances, "seed": seed, "max_points": max_points,
                                "max_n": max_n})


def consistency_check(systems: int = 50, m_max: int = 4, n_max: int = 3, seed: int = 0,
                      exact: bool = True, tolerance: float = 1e-12) -> VerificationReport:
    """Commutator of generator and lowering operator on random connected systems.

    In exact mode the systems have rational rates and the commutator is
    computed in rational arithmetic.
    """
    from .discrete_systems import consistency_commutator, random_system
    from .gsip import stream

    rng = stream(seed, 0)
    worst = 0.0
    count = 0
    for k in range(systems):
        sigma = (-1, 0, 1)[k % 3]
        m = int(rng.integers(2, m_max + 1))
        sys = random_system(rng, m, sigma, exact=exact)
        for n in range(1, n_max + 1):
            try:
                v = consistency_commutator(sys, n, exact=exact)
            except ValueError:
                continue  # empty exclusion sector
            worst = max(worst, float(v))
            count += 1
    return exact_report("consistency_commutator", worst, 0.0, tolerance, diff=worst,
                        inputs={"systems": systems, "m_max": m_max, "n_max": n_max,
                                "seed": seed, "exact": exact},
                        details={"pairs_checked": count})
