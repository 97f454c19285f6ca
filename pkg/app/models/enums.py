"""
Enumeration classes for the application.
"""
from enum import Enum


class RiskKind(str, Enum):
    """Kinds of risk-sensitive function g."""
    IDENTITY = "identity"
    EXPONENTIAL = "exponential"
    CUSTOM = "custom"


class PayoffName(str, Enum):
    """Which payoff of the bundle is addressed."""
    LOWER = "L"
    UPPER = "U"
    TERMINAL = "xi"


class Label(int, Enum):
    """Signal stream labels. Stream 1 belongs to the min player, stream 2 to the max player."""
    MIN_PLAYER = 1
    MAX_PLAYER = 2


class Regime(str, Enum):
    """The three disjoint regimes of the realized payoff."""
    TERMINAL = "terminal"    # σ∧τ ≥ T
    LOWER = "lower"          # τ < T, τ ≤ σ
    UPPER = "upper"          # σ < T, σ < τ


class PolicyRule(str, Enum):
    """Stopping rules available to a player."""
    THRESHOLD = "threshold"
    FIXED_INDEX = "fixed_index"
    NEVER = "never"


class SolverMode(str, Enum):
    ODE = "ode"
    PDE = "pde"
    MC = "mc"


class CheckKind(str, Enum):
    VALUE_MATCH = "value_match"
    SADDLE = "saddle"
    RECURSION = "recursion"
    MARTINGALE = "martingale"
    SDG = "sdg"
    COLEHOPF = "colehopf"
    MONOTONE = "monotone"
    WIDENING = "widening"
    RISK_APPROXIMATION = "risk_approximation"
    SIGNAL_WAIT = "signal_wait"
