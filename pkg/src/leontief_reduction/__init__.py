"""Polynomial systems as Leontief exchange markets.

Pipeline: a bounded polynomial system F is decomposed into basic price
relations, homogenized with a numeraire, and compiled into a market whose
equilibria correspond one-to-one with the solutions of F.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AlreadyHomogenizedError,
    BoundError,
    CapExceededError,
    InvalidCertificateError,
    LiftError,
    MissingVariableError,
    NotConvergedError,
    ParseError,
    ReductionError,
    UnboundedDemandError,
    ZeroNumeraireError,
)
from .gadgets import audit_closed, compile_market, lift, project  # noqa: F401
from .market import EquilibriumCertificate, MarketInstance, verify_equilibrium  # noqa: F401
from .poly import Polynomial, PolynomialSystem, make_system  # noqa: F401
from .reduce import compute_H, decompose, homogenize, reduce_system  # noqa: F401
