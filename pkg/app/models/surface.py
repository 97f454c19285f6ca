"""
Markov models and solved value surfaces.
"""
import logging
from functools import cached_property
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.interpolate import RegularGridInterpolator

from app.models.enums import SolverMode
from app.models.risk import PayoffBundle, RiskFunction

logger = logging.getLogger(__name__)

# (time, state) -> drift or volatility; state is (n,) in one dimension, (n, d) otherwise
CoefficientMap = Callable[[Any, np.ndarray], np.ndarray]


class MarkovModel(BaseModel):
    """State dynamics, payoffs, criterion and signal intensities of a game."""
    drift: CoefficientMap
    volatility: CoefficientMap
    x0: Union[float, Tuple[float, ...]]
    bundle: PayoffBundle
    g: RiskFunction
    lambda1: float = Field(..., ge=0, description="Signal intensity of the min player")
    lambda2: float = Field(..., ge=0, description="Signal intensity of the max player")
    name: str = "model"

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @field_validator("x0")
    @classmethod
    def _non_empty_state(cls, value):
        if isinstance(value, tuple) and len(value) == 0:
            raise ValueError("x0 must have at least one coordinate")
        return value

    @property
    def dimension(self) -> int:
        return len(self.x0) if isinstance(self.x0, tuple) else 1

    @property
    def initial_state(self) -> np.ndarray:
        return np.asarray(self.x0, dtype=float)

    @property
    def initial_observable(self) -> float:
        return float(np.mean(self.initial_state))

    @property
    def horizon(self) -> float:
        return self.bundle.T

    def observable(self, states: np.ndarray) -> np.ndarray:
        """The scalar the payoffs read: the state in 1-D, the basket mean otherwise."""
        if self.dimension == 1:
            return states
        return np.mean(states, axis=-1)

    def is_deterministic(self) -> bool:
        declared = getattr(self.volatility, "is_zero", None)
        if declared is not None:
            return bool(declared)
        samples = np.linspace(-2.0, 5.0, 8)
        if self.dimension > 1:
            samples = np.repeat(samples[:, None], self.dimension, axis=1)
        for t in np.linspace(0.0, self.horizon, 3):
            if np.any(np.asarray(self.volatility(t, samples), dtype=float) != 0.0):
                return False
        return True

    def with_intensities(self, lambda1: float, lambda2: float) -> "MarkovModel":
        return self.model_copy(update={"lambda1": lambda1, "lambda2": lambda2})


class ValueSurface(BaseModel):
    """
    Solution of a backward equation on a (t, x) grid.

    `coordinates` is "auxiliary" when qbar solves the transformed equation and q is
    its pullback, and "raw" when the equation was solved directly for Q (then
    qbar equals q and zbar holds σ·∂ₓQ). ODE surfaces have a single state column
    and no state grid.
    """
    mode: SolverMode
    coordinates: Literal["auxiliary", "raw"] = "auxiliary"
    times: np.ndarray
    states: Optional[np.ndarray] = None
    qbar: np.ndarray
    zbar: np.ndarray
    q: np.ndarray
    accumulated: np.ndarray
    model: MarkovModel

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @property
    def n_t(self) -> int:
        return self.times.size - 1

    @property
    def n_x(self) -> Optional[int]:
        return None if self.states is None else self.states.size - 1

    def _interpolate(self, field: str, t, x) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        values = getattr(self, field)
        if self.states is None:
            return np.interp(t, self.times, values[:, 0])
        x = np.asarray(x, dtype=float)
        t, x = np.broadcast_arrays(t, x)
        lo, hi = self.states[0], self.states[-1]
        outside = (x < lo) | (x > hi)
        if np.any(outside):
            logger.warning(
                f"Clamping {int(np.count_nonzero(outside))} state(s) to the surface grid [{lo}, {hi}]"
            )
        points = np.stack([np.clip(t, self.times[0], self.times[-1]), np.clip(x, lo, hi)], axis=-1)
        return self.grid_interpolators[field](points)

    @cached_property
    def grid_interpolators(self) -> Dict[str, RegularGridInterpolator]:
        if self.states is None:
            return {}
        return {
            field: RegularGridInterpolator((self.times, self.states), getattr(self, field), method="linear")
            for field in ("qbar", "q", "zbar")
        }

    def q_at(self, t, x=None) -> np.ndarray:
        """Q(t, x), bilinear in (t, x)."""
        return self._interpolate("q", t, x)

    def qbar_at(self, t, x=None) -> np.ndarray:
        return self._interpolate("qbar", t, x)

    @property
    def initial_value(self) -> float:
        """Q at (0, x₀)."""
        return float(np.asarray(self.q_at(0.0, self.model.initial_observable)).item())

    @property
    def initial_qbar(self) -> float:
        return float(np.asarray(self.qbar_at(0.0, self.model.initial_observable)).item())


class RegressionResult(BaseModel):
    """Outcome of the least-squares backward induction."""
    qbar0: float
    stderr: float
    q0: float
    n_paths: int
    n_steps: int
    degree: int
    coefficients: List[Dict[str, Any]] = Field(default_factory=list)

    model_config = ConfigDict(frozen=True)


class WideningReport(BaseModel):
    value: float
    widened_value: float
    change: float
    tolerance: float
    passed: bool
    widened_grid: Tuple[float, float, int, int]


class MonotoneReport(BaseModel):
    intensities: List[float]
    values: List[float]
    nondecreasing: bool
    nodewise_nondecreasing: bool
