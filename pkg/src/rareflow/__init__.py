"""Rare-event simulation toolkit: exponential tilting, importance sampling,
ruin probabilities, barrier crossing corrections, credit loss tails, and the
risk-sensitive dual of long-term outperformance."""

__version__ = "0.1.0"

from . import bridge, cramer, credit, isdrift, longterm, mc, oracles, ruin, tilt  # noqa: F401
from .errors import RareflowError  # noqa: F401
