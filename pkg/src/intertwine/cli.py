"""Command-line entry point.

``intertwine run --config SUITE`` executes a JSON suite of checks and writes
``report.json`` and ``report.csv``.  Exit codes: 0 when every check passes,
1 when any fails, 2 for configuration errors.  Checks run on
``INTERTWINE_THREADS`` threads (default 1) and are reported in declaration
order.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from . import orthopoly, verify
from .discrete_systems import (
    SiteSystem,
    check_duality,
    check_intertwining,
    detailed_balance_defect,
    enumerate_labelled,
)
from .gsip import (
    AlphaMeasure,
    ConductanceFn,
    GsipTrajectoryConfig,
    THREADS_ENV,
    cell_counts,
    gsip_simulate,
    sample_pascal_batch,
)
from .pointconfig import CountingMeasure, Interval, TensorIndicator
from .report import VerificationReport, exact_report

__all__ = ["main", "run_suite", "load_suite", "ConfigError", "CHECKS"]

CSV_HEADER = ["check", "lhs", "rhs", "diff", "tol_or_se", "pass"]


class ConfigError(ValueError):
    """Malformed or inconsistent suite configuration."""


# --- parameter parsing ----------------------------------------------------------


def _req(params: dict, key: str):
    if key not in params:
        raise ConfigError(f"missing parameter {key!r}")
    return params[key]


def _system(params: dict) -> SiteSystem:
    return SiteSystem.from_dict(_req(params, "system"))


def _cells(raw) -> list[Interval]:
    out = []
    for item in raw:
        lo, hi = item
        out.append(Interval(float(lo), float(hi)))
    return out


def _alpha(params: dict, key: str = "alpha") -> AlphaMeasure:
    return AlphaMeasure.from_dict(_req(params, key))


def _conductance(params: dict) -> ConductanceFn:
    return ConductanceFn.from_dict(_req(params, "c"))


def _site_function(spec: dict, sys: SiteSystem, n: int, seed: int):
    """Table of a function on E^n over the labelled states of ``sys``."""
    kind = spec.get("kind")
    states = enumerate_labelled(sys, n)
    if kind == "product":
        weights = [np.asarray(w, dtype=float) for w in spec["weights"]]
        if len(weights) != n or any(w.shape != (sys.m,) for w in weights):
            raise ConfigError("product weights need n vectors of length m")
        return np.array([np.prod([weights[k][x] for k, x in enumerate(xs)]) for xs in states])
    if kind == "random":
        from .gsip import stream

        rng = stream(int(spec.get("seed", seed)), 0)
        table = rng.uniform(-1, 1, size=(sys.m,) * n) if n else np.array(rng.uniform(-1, 1))
        return np.array([table[xs] for xs in states])
    raise ConfigError(f"unknown function kind {kind!r}")


# --- check registry ----------------------------------------------------------------
# Each builder validates its parameters and returns a thunk producing reports, so
# configuration errors surface before anything runs.


def _b_orthogonality(p, ctx):
    pp = orthopoly.PolyParams(_req(p, "family"), float(_req(p, "alpha")), p.get("p"))
    return lambda: [verify.orthogonality_check(pp, int(p.get("nmax", 6)))]


def _b_convolution(p, ctx):
    a, b, pr = float(_req(p, "a")), float(_req(p, "b")), float(_req(p, "p"))
    return lambda: [verify.convolution_check(a, b, pr, int(p.get("nmax", 5)), int(p.get("xmax", 10)))]


def _b_consistency(p, ctx):
    return lambda: [verify.consistency_check(int(p.get("systems", 50)), int(p.get("m_max", 4)),
                                             int(p.get("n_max", 3)), ctx["seed"],
                                             bool(p.get("exact", True)))]


def _b_detailed_balance(p, ctx):
    sys = _system(p)
    theta, n, exact = float(_req(p, "theta")), int(_req(p, "n")), bool(p.get("exact", False))

    def run():
        d = float(detailed_balance_defect(sys, theta, n, exact))
        return [exact_report("detailed_balance", d, 0.0, float(p.get("tolerance", 1e-12)),
                             inputs=p)]

    return run


def _b_duality(p, ctx):
    sys = _system(p)
    theta = float(_req(p, "theta"))
    kinds = p.get("kinds", [p.get("kind", "classical")])
    times = p.get("times", [p.get("t", 1.0)])
    xi, eta = tuple(_req(p, "xi")), tuple(_req(p, "eta"))
    for k in kinds:
        if k not in ("cheap", "classical", "orthogonal"):
            raise ConfigError(f"unknown duality function {k!r}")
    tol = float(p.get("tolerance", 1e-10))
    return lambda: [check_duality(sys, theta, k, float(t), xi, eta if k != "cheap" else xi, tol)
                    for k in kinds for t in times]


def _b_intertwining(p, ctx):
    sys = _system(p)
    n = int(_req(p, "n"))
    mode = p.get("mode", "classical")
    if mode not in ("classical", "orthogonal"):
        raise ConfigError(f"unknown intertwining mode {mode!r}")
    f = _site_function(_req(p, "f"), sys, n, ctx["seed"])
    times = p.get("times", [p.get("t", 1.0)])
    total = p.get("total")
    theta = float(p.get("theta", 0.5))
    tol = float(p.get("tolerance", 1e-9))
    return lambda: [check_intertwining(sys, n, float(t), f, mode, total, theta, tol) for t in times]


def _b_partitions(p, ctx):
    return lambda: [verify.partition_identity_check(int(p.get("instances", 200)), ctx["seed"],
                                                    int(p.get("max_points", 5)), int(p.get("max_n", 4)))]


def _b_lambda(p, ctx):
    alpha, cells = _alpha(p), _cells(_req(p, "cells"))
    return lambda: [verify.lambda_orthogonality_check(alpha, float(_req(p, "p")), cells, _req(p, "degrees"))]


def _b_meixner_product(p, ctx):
    alpha, cells = _alpha(p), _cells(_req(p, "cells"))
    return lambda: [verify.meixner_product_check(alpha, float(_req(p, "p")), cells, _req(p, "degrees"),
                                                 ctx["samples"], ctx["seed"], int(p.get("pointwise", 100)))]


def _b_charlier_product(p, ctx):
    lam, cells = _alpha(p, "lambda"), _cells(_req(p, "cells"))
    return lambda: [verify.charlier_product_check(lam, cells, _req(p, "degrees"), ctx["samples"],
                                                  ctx["seed"], int(p.get("pointwise", 100)))]


def _b_factorization(p, ctx):
    intensity, cells = _alpha(p, "intensity"), _cells(_req(p, "cells"))
    split = _req(p, "split")
    sampler = _req(p, "sampler")
    if sampler not in ("poisson", "pascal"):
        raise ConfigError(f"unknown sampler {sampler!r}")
    return lambda: [verify.factorization_check(sampler, intensity, cells, split, float(p.get("p", 0.5)),
                                               int(p.get("configurations", 100)), ctx["seed"])]


def _b_pascal(p, ctx):
    alpha, cells = _alpha(p), _cells(_req(p, "cells"))
    fns = [[(Interval(float(lo), float(hi)), float(v)) for (lo, hi), v in fn]
           for fn in p.get("functions", [])]
    return lambda: [verify.pascal_sampler_check(alpha, float(_req(p, "p")), cells, fns,
                                                ctx["samples"], ctx["seed"])]


def _b_stationarity(p, ctx):
    alpha, c = _alpha(p), _conductance(p)
    if "cells" in p:
        cells = _cells(p["cells"])
    else:
        # common refinement of the conductance blocks and the alpha grid
        edges = sorted({float(e) for e in c.edges} | {k / alpha.grid for k in range(alpha.grid + 1)})
        cells = [Interval(lo, hi) for lo, hi in zip(edges, edges[1:])]
    if len(cells) < 2:
        raise ConfigError("gsip_stationarity needs at least two cells; one cell only sees the conserved total")
    times = p.get("times", [p.get("t", 1.0)])
    return lambda: [verify.stationarity_check_gsip(alpha, float(_req(p, "p")), c, float(t),
                                                   ctx["samples"], cells, ctx["seed"]) for t in times]


def _b_reduced_balance(p, ctx):
    alpha, c = _alpha(p), _conductance(p)
    ns = p.get("ns", [p.get("n", 3)])
    return lambda: [verify.reduced_detailed_balance(c, alpha, float(_req(p, "p")), int(n)) for n in ns]


def _b_reduction(p, ctx):
    alpha, c = _alpha(p), _conductance(p)
    eta0 = CountingMeasure(_req(p, "eta0"), space="coord")
    return lambda: [verify.reduction_check(eta0, c, alpha, float(p.get("t", 1.0)), ctx["samples"], ctx["seed"])]


def _b_mc_intertwining(p, ctx):
    alpha, c = _alpha(p), _conductance(p)
    eta0 = CountingMeasure(_req(p, "eta0"), space="coord")
    f = TensorIndicator(_cells(_req(p, "cells")), _req(p, "degrees"))
    times = p.get("times", [p.get("t", 1.0)])
    return lambda: [verify.mc_classical_intertwining_gsip(eta0, f, c, alpha, float(t), ctx["samples"],
                                                          ctx["seed"]) for t in times]


CHECKS: dict[str, Callable] = {
    "orthogonality": _b_orthogonality,
    "meixner_convolution": _b_convolution,
    "consistency": _b_consistency,
    "detailed_balance": _b_detailed_balance,
    "duality": _b_duality,
    "intertwining": _b_intertwining,
    "partition_identities": _b_partitions,
    "lambda_orthogonality": _b_lambda,
    "meixner_product": _b_meixner_product,
    "charlier_product": _b_charlier_product,
    "factorization": _b_factorization,
    "pascal_sampler": _b_pascal,
    "gsip_stationarity": _b_stationarity,
    "reduced_detailed_balance": _b_reduced_balance,
    "gsip_reduction": _b_reduction,
    "mc_intertwining_gsip": _b_mc_intertwining,
}


# --- suites --------------------------------------------------------------------------


def _resolve(path: str) -> tuple[str, str]:
    """Suite text and a display name; bare names refer to bundled suites."""
    p = Path(path)
    if p.exists():
        return p.read_text(), str(p)
    name = path if path.endswith(".json") else f"{path}.json"
    bundled = resources.files("intertwine").joinpath("suites", name)
    if bundled.is_file():
        return bundled.read_text(), f"bundled:{name}"
    raise ConfigError(f"config file not found: {path}")


def load_suite(path: str) -> dict:
    text, where = _resolve(path)
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict) or not isinstance(cfg.get("checks"), list):
        raise ConfigError(f"{where}: expected an object with a 'checks' list")
    return cfg


def build_jobs(cfg: dict, seed: int | None = None, samples: int | None = None):
    suite_seed = int(cfg.get("seed", 0) if seed is None else seed)
    jobs = []
    for i, entry in enumerate(cfg["checks"]):
        name = entry.get("check") if isinstance(entry, dict) else None
        if name not in CHECKS:
            raise ConfigError(f"checks[{i}]: unknown check {name!r}")
        ctx = {
            "seed": int(entry.get("seed", suite_seed)) if seed is None else suite_seed,
            "samples": int(samples if samples is not None else entry.get("samples", cfg.get("samples", 100_000))),
        }
        try:
            jobs.append(CHECKS[name](entry, ctx))
        except ConfigError as exc:
            raise ConfigError(f"checks[{i}] ({name}): {exc}") from None
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"checks[{i}] ({name}): invalid parameters: {exc}") from None
    return jobs


def _threads() -> int:
    v = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(v))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {v!r}") from None


def run_jobs(jobs) -> list[VerificationReport]:
    threads = _threads()
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            groups = list(pool.map(lambda job: job(), jobs))
    else:
        groups = [job() for job in jobs]
    return [r for g in groups for r in g]


def write_reports(reports: list[VerificationReport], out: Path):
    """report.json and report.csv; wall times are left out so reruns are byte-identical."""
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in reports:
        d = r.to_dict()
        d.pop("wall_time", None)
        rows.append(d)
    (out / "report.json").write_text(json.dumps(rows, indent=1) + "\n")
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in reports:
            w.writerow(r.csv_row())


def run_suite(config: str, seed: int | None = None, samples: int | None = None,
              out: str = ".", stream=None) -> int:
    """Run a suite; returns the process exit code."""
    stream = sys.stdout if stream is None else stream
    try:
        cfg = load_suite(config)
        jobs = build_jobs(cfg, seed, samples)
        reports = run_jobs(jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    write_reports(reports, Path(out))
    for r in reports:
        print(r.line(), file=stream)
    failed = sum(not r.passed for r in reports)
    print(f"{len(reports) - failed}/{len(reports)} checks passed", file=stream)
    return 0 if failed == 0 else 1


# --- data commands -----------------------------------------------------------------------


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _open_out(path: str):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from None


def sample_pascal_cmd(config: str, samples: int, seed: int, out: str) -> int:
    cfg = _load_json(config)
    alpha = _alpha(cfg)
    p = float(_req(cfg, "p"))
    if "cells" in cfg:
        cells = _cells(cfg["cells"])
    else:
        G = alpha.grid
        cells = [Interval(k / G, (k + 1) / G) for k in range(G)]
    counts = cell_counts(sample_pascal_batch(alpha, p, samples, seed), cells)
    with _open_out(out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"cell{k}" for k in range(len(cells))])
        w.writerows(counts.tolist())
    return 0


def simulate_gsip_cmd(config: str, seed: int, out: str) -> int:
    cfg = _load_json(config)
    alpha, c = _alpha(cfg), _conductance(cfg)
    eta0 = CountingMeasure(_req(cfg, "eta0"), space="coord")
    tc = GsipTrajectoryConfig(float(_req(cfg, "t_end")), seed, int(cfg.get("max_events", 10_000_000)))
    log: list = []
    final = gsip_simulate(eta0, c, alpha, tc, log=log)
    with _open_out(out) as fh:
        for ev in log:
            fh.write(json.dumps(ev) + "\n")
        fh.write(json.dumps({"time": tc.t_end, "event": "end", "state": list(final.points)}) + "\n")
    return 0


def emit_polynomials_cmd(family: str, nmax: int, alpha: float, p: float | None, xmax: int, out: str) -> int:
    params = orthopoly.PolyParams(family, alpha, p)
    with _open_out(out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "x", "value"])
        for n in range(nmax + 1):
            for x in range(xmax + 1):
                w.writerow([n, x, float(orthopoly.evaluate(params, n, x))])
    return 0


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="intertwine", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a suite of checks")
    r.add_argument("--config", required=True, help="suite JSON path or bundled suite name")
    r.add_argument("--seed", type=int)
    r.add_argument("--samples", type=int)
    r.add_argument("--out", default=".", help="directory for report.json and report.csv")

    s = sub.add_parser("sample-pascal", help="Pascal process cell counts as CSV")
    s.add_argument("--config", required=True, help="JSON with alpha, p and optional cells")
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    g = sub.add_parser("simulate-gsip", help="one trajectory with its event log as JSON lines")
    g.add_argument("--config", required=True, help="JSON with alpha, c, eta0 and t_end")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    e = sub.add_parser("emit-polynomials", help="table of polynomial values as CSV")
    e.add_argument("--family", choices=[f.value for f in orthopoly.Family], required=True)
    e.add_argument("--nmax", type=int, default=5)
    e.add_argument("--alpha", type=float, required=True)
    e.add_argument("--p", type=float)
    e.add_argument("--xmax", type=int, default=20)
    e.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_suite(args.config, args.seed, args.samples, args.out)
        if args.command == "sample-pascal":
            return sample_pascal_cmd(args.config, args.samples, args.seed, args.out)
        if args.command == "simulate-gsip":
            return simulate_gsip_cmd(args.config, args.seed, args.out)
        return emit_polynomials_cmd(args.family, args.nmax, args.alpha, args.p, args.xmax, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
