"""Exact and Monte Carlo checks of duality and intertwining relations for
consistent particle systems.

Modules
-------
orthopoly
    Charlier, Meixner and Krawtchouk polynomials and their weights.
pointconfig
    Counting measures, factorial measures and set-partition identities.
discrete_systems
    Exclusion, independent and inclusion processes on finite site sets.
gsip
    The generalized symmetric inclusion process on [0, 1) and the Pascal process.
verify
    Verification checks returning :class:`VerificationReport` objects.
cli
    The ``intertwine`` command.
"""

from .report import VerificationReport

__version__ = "0.1.0"

__all__ = ["VerificationReport", "__version__"]
