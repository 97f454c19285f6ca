"""
Poisson signal streams and the merged intervention sequence.
"""
import sys
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.enums import Label

# Arrival time standing for "never"; finite so arithmetic stays total
SENTINEL_TIME = sys.float_info.max


class SignalStream(BaseModel):
    """Arrival times of one player's signals, T₀ = 0 implicit."""
    stream_id: Label
    intensity: float = Field(..., ge=0)
    arrivals: np.ndarray
    horizon_cap: float = Field(..., gt=0)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _sorted_positive(self):
        a = self.arrivals
        if a.ndim != 1:
            raise ValueError("arrivals must be one-dimensional")
        if a.size and (a[0] <= 0.0 or np.any(np.diff(a) <= 0.0)):
            raise ValueError("arrivals must be positive and strictly increasing")
        return self

    @classmethod
    def from_times(cls, stream_id: int, times, intensity: float = 1.0, horizon_cap: float = None) -> "SignalStream":
        arrivals = np.asarray(times, dtype=float)
        cap = horizon_cap if horizon_cap is not None else (float(arrivals[-1]) if arrivals.size else 1.0)
        return cls(stream_id=Label(stream_id), intensity=intensity, arrivals=arrivals, horizon_cap=min(cap, SENTINEL_TIME))

    @property
    def finite_arrivals(self) -> np.ndarray:
        return self.arrivals[self.arrivals < SENTINEL_TIME]


class MergedSequence(BaseModel):
    """θ₁ < θ₂ < … with the label of the stream each time came from."""
    times: np.ndarray
    labels: np.ndarray

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _consistent(self):
        if self.times.shape != self.labels.shape:
            raise ValueError("times and labels must have the same length")
        return self

    @property
    def events(self) -> List[Tuple[float, int]]:
        return [(float(t), int(lab)) for t, lab in zip(self.times, self.labels)]

    def __len__(self) -> int:
        return int(self.times.size)
