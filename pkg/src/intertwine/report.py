"""Verification reports shared by the exact and Monte Carlo checks."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = ["VerificationReport", "exact_report", "mc_report", "digest", "Z_LIMIT", "SE_FLOOR"]

Z_LIMIT = 3.0
SE_FLOOR = 1e-12


def _plain(v):
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if hasattr(v, "numerator") and hasattr(v, "denominator") and not isinstance(v, int):
        return float(v)
    return v


def digest(inputs) -> str:
    """Short stable hash of a JSON-serializable description of the inputs."""
    text = json.dumps(_plain(inputs), sort_keys=True, default=repr)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class VerificationReport:
    """Outcome of one named check.

    Exact-mode reports carry a ``tolerance`` and pass iff ``abs_diff`` is
    within it.  Monte Carlo reports carry ``std_error`` and ``z_score`` and
    pass iff ``|z_score| <= 3``.
    """

    check: str
    lhs: object
    rhs: object
    abs_diff: float
    passed: bool
    mode: str = "exact"
    tolerance: float | None = None
    std_error: float | None = None
    z_score: float | None = None
    seed: int | None = None
    inputs_digest: str = ""
    wall_time: float = 0.0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def csv_row(self) -> list:
        tol = self.tolerance if self.mode == "exact" else self.std_error
        return [self.check, _scalarize(self.lhs), _scalarize(self.rhs),
                self.abs_diff, tol, self.passed]

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.mode == "exact":
            return f"{status} {self.check}: |diff|={self.abs_diff:.3e} tol={self.tolerance:.1e}"
        return f"{status} {self.check}: |diff|={self.abs_diff:.3e} se={self.std_error:.3e} z={self.z_score:+.2f}"


def _scalarize(v):
    v = _plain(v)
    if isinstance(v, list):
        return json.dumps(v)
    return v


def exact_report(check, lhs, rhs, tolerance, inputs=None, details=None, diff=None) -> VerificationReport:
    """Report for deterministic comparisons; ``diff`` defaults to max |lhs - rhs|."""
    if diff is None:
        diff = float(np.max(np.abs(np.asarray(lhs, dtype=float) - np.asarray(rhs, dtype=float)), initial=0.0))
    return VerificationReport(
        check=check, lhs=lhs, rhs=rhs, abs_diff=float(diff),
        passed=bool(diff <= tolerance), mode="exact", tolerance=float(tolerance),
        inputs_digest=digest(inputs) if inputs is not None else "",
        details=details or {},
    )


def mc_report(check, lhs, rhs, std_error, seed, inputs=None, details=None, z=None) -> VerificationReport:
    """Report for Monte Carlo comparisons, accepted at |z| <= 3.

    ``std_error`` is floored at 1e-12 so that a zero-variance estimate does
    not yield a vacuous pass or a division by zero.
    """
    diff = abs(float(lhs) - float(rhs))
    se = max(float(std_error), SE_FLOOR)
    if z is None:
        z = (float(lhs) - float(rhs)) / se
    return VerificationReport(
        check=check, lhs=lhs, rhs=rhs, abs_diff=diff,
        passed=bool(math.isfinite(z) and abs(z) <= Z_LIMIT), mode="mc",
        std_error=se, z_score=float(z), seed=seed,
        inputs_digest=digest(inputs) if inputs is not None else "",
        details=details or {},
    )
