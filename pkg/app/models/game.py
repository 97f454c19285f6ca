"""
Strategies, realizations, estimates and check reports of the stopping game.
"""
import math
from typing import Any, Callable, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.enums import Label, PolicyRule, Regime
from app.models.risk import StatePath
from app.models.signals import MergedSequence, SignalStream
from app.models.surface import ValueSurface


class StoppingPolicy(BaseModel):
    """
    A player's rule for stopping at their own signal arrivals.

    Threshold rules read Q from a value surface: the min player stops when
    Q ≥ U + offset, the max player when Q ≤ L + offset. Every rule is forced to
    stop at the first own arrival after the horizon.
    """
    player: Label
    rule: PolicyRule
    index: Optional[int] = Field(None, ge=1, description="Own-arrival index for fixed_index rules")
    surface: Optional[ValueSurface] = None
    offset: float = 0.0
    description: str = ""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _rule_fields(self):
        if self.rule == PolicyRule.THRESHOLD and self.surface is None:
            raise ValueError("threshold policies need a value surface")
        if self.rule == PolicyRule.FIXED_INDEX and self.index is None:
            raise ValueError("fixed_index policies need an index >= 1")
        return self

    @classmethod
    def never(cls, player: int) -> "StoppingPolicy":
        return cls(player=Label(player), rule=PolicyRule.NEVER, description="never")

    @classmethod
    def fixed_index(cls, player: int, index: int) -> "StoppingPolicy":
        return cls(player=Label(player), rule=PolicyRule.FIXED_INDEX, index=index, description=f"fixed_index({index})")

    @classmethod
    def threshold(cls, player: int, surface: ValueSurface, offset: float = 0.0) -> "StoppingPolicy":
        text = "threshold" if offset == 0.0 else f"threshold(offset={offset:.6g})"
        return cls(player=Label(player), rule=PolicyRule.THRESHOLD, surface=surface, offset=offset, description=text)

    @property
    def label(self) -> str:
        return self.description or self.rule.value


class GameRealization(BaseModel):
    """One simulated play of the game."""
    path: StatePath
    stream1: SignalStream
    stream2: SignalStream
    merged: MergedSequence
    sigma: float
    tau: float
    regime: Regime
    payoff: float

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class McEstimate(BaseModel):
    """Monte Carlo value under the nonlinear expectation."""
    n: int = Field(..., ge=1)
    mean_g: float
    value: float
    stderr_mean_g: float = Field(..., ge=0)
    stderr_value: float = Field(..., ge=0)

    @field_validator("value")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("estimated value must be finite")
        return value


class ControlPolicy(BaseModel):
    """Binary stopping-intensity control: the rate is 0 or the player's intensity."""
    player: Label
    intensity: float = Field(..., ge=0)
    indicator: Callable[[Any, np.ndarray], np.ndarray]
    description: str = ""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def rate(self, t, x) -> np.ndarray:
        active = np.asarray(self.indicator(t, x), dtype=bool)
        return np.where(active, self.intensity, 0.0)

    @classmethod
    def constant(cls, player: int, intensity: float, active: bool) -> "ControlPolicy":
        def indicator(t, x):
            return np.full(np.broadcast(np.asarray(t), np.asarray(x)).shape, active)

        return cls(player=Label(player), intensity=intensity, indicator=indicator,
                   description="always" if active else "zero")

    @classmethod
    def piecewise(cls, player: int, intensity: float, edges: np.ndarray, flags: np.ndarray) -> "ControlPolicy":
        """Active on the time cells [edges[i], edges[i+1]) whose flag is set."""
        edges = np.asarray(edges, dtype=float)
        flags = np.asarray(flags, dtype=bool)

        def indicator(t, x):
            t = np.asarray(t, dtype=float)
            cell = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, flags.size - 1)
            return np.broadcast_to(flags[cell], np.broadcast(t, np.asarray(x)).shape)

        pattern = "".join("1" if f else "0" for f in flags)
        return cls(player=Label(player), intensity=intensity, indicator=indicator, description=f"piecewise({pattern})")


# Reports


class DeviationResult(BaseModel):
    player: Label
    description: str
    value: float
    margin: float
    stderr: float
    passed: bool


class SaddleReport(BaseModel):
    value: McEstimate
    multiplier: float
    deviations: List[DeviationResult]
    passed: bool


class IncrementResult(BaseModel):
    kind: Literal["martingale", "supermartingale", "submartingale"]
    deviation: str
    step: int
    mean: float
    stderr: float
    passed: bool


class MartingaleReport(BaseModel):
    n_paths: int
    k_max: int
    multiplier: float
    increments: List[IncrementResult]
    passed: bool


class RepresentationReport(BaseModel):
    method: Literal["quadrature", "monte_carlo"]
    value_sdg: float
    value_bsde: float
    difference: float
    stderr: float
    tolerance: float
    deviations: List[DeviationResult]
    passed: bool


class PathRecord(BaseModel):
    path: int
    block: int
    sigma: float
    tau: float
    regime: Regime
    payoff: float
