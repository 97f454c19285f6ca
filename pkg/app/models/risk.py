"""
Risk-sensitive criterion and payoff models.
"""
import math
from typing import Callable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.enums import RiskKind

# (time, state) -> payoff, vectorized over numpy arrays
PayoffMap = Callable[[np.ndarray, np.ndarray], np.ndarray]
TerminalMap = Callable[[np.ndarray], np.ndarray]
ScalarMap = Callable[[float], float]


class RiskFunction(BaseModel):
    """Strictly increasing risk-sensitive function g with its inverse."""
    kind: RiskKind = Field(RiskKind.IDENTITY, description="Kind of g")
    gamma: Optional[float] = Field(None, gt=0, description="Risk sensitivity for exponential g")
    forward: Optional[ScalarMap] = Field(None, description="Custom forward map g")
    inverse: Optional[ScalarMap] = Field(None, description="Custom inverse g⁻¹ (bisection when absent)")
    interval: Tuple[float, float] = Field((-math.inf, math.inf), description="Validity interval of g")
    label: Optional[str] = Field(None, description="Display name")

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _check_kind_fields(self):
        if self.kind == RiskKind.EXPONENTIAL and self.gamma is None:
            raise ValueError("exponential risk function requires gamma > 0")
        if self.kind == RiskKind.CUSTOM and self.forward is None:
            raise ValueError("custom risk function requires a forward map")
        lo, hi = self.interval
        if not lo < hi:
            raise ValueError(f"validity interval must satisfy lo < hi, got {self.interval}")
        return self

    @classmethod
    def identity(cls) -> "RiskFunction":
        return cls(kind=RiskKind.IDENTITY, label="identity")

    @classmethod
    def exponential(cls, gamma: float) -> "RiskFunction":
        return cls(kind=RiskKind.EXPONENTIAL, gamma=gamma, label=f"exponential(gamma={gamma})")

    @classmethod
    def custom(
        cls,
        forward: ScalarMap,
        interval: Tuple[float, float],
        inverse: Optional[ScalarMap] = None,
        label: str = "custom",
    ) -> "RiskFunction":
        return cls(kind=RiskKind.CUSTOM, forward=forward, inverse=inverse, interval=interval, label=label)


class PayoffBundle(BaseModel):
    """Discount rate, payoff maps and deterministic horizon of a game.

    No ordering between U and L is assumed.
    """
    r: float = Field(..., ge=0, description="Discount rate (1/time)")
    f: PayoffMap = Field(..., description="Running payoff (t, x) -> payoff/time")
    L: PayoffMap = Field(..., description="Lower obstacle, paid when the max player stops first or on ties")
    U: PayoffMap = Field(..., description="Upper obstacle, paid when the min player stops strictly first")
    xi: TerminalMap = Field(..., description="Terminal payoff x -> payoff")
    T: float = Field(..., gt=0, description="Deterministic finite horizon")

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _finite_horizon(self):
        if not math.isfinite(self.T):
            raise ValueError("horizon T must be finite")
        return self

    def obstacle(self, which: str) -> PayoffMap:
        if which == "L":
            return self.L
        if which == "U":
            return self.U
        raise ValueError(f"unknown obstacle {which!r}")


class StatePath(BaseModel):
    """A simulated (or deterministic) state path on a time grid.

    `states` holds the payoff observable of the state at each grid time.
    """
    times: np.ndarray
    states: np.ndarray

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _shapes(self):
        if self.times.ndim != 1 or self.states.shape[0] != self.times.shape[0]:
            raise ValueError("times and states must have matching first dimension")
        if self.times.shape[0] < 2:
            raise ValueError("a path needs at least two grid points")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("path times must be strictly increasing")
        return self

    @classmethod
    def constant(cls, x0: float, horizon: float, n_steps: int) -> "StatePath":
        times = np.linspace(0.0, horizon, n_steps + 1)
        return cls(times=times, states=np.full_like(times, float(x0)))

    def state_at(self, t):
        """Piecewise-linear interpolation of the observable at time(s) t."""
        return np.interp(t, self.times, self.states)

    @property
    def end_time(self) -> float:
        return float(self.times[-1])
