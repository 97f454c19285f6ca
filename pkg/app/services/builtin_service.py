"""
Catalog of named payoff maps and state dynamics usable from experiment specs.
"""
import difflib
import logging
from typing import Any, Dict, Tuple, Type

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from app.core.exceptions import SpecValidationError

logger = logging.getLogger(__name__)


def _shape(args) -> Tuple[int, ...]:
    return np.broadcast(*[np.asarray(a, dtype=float) for a in args]).shape


# Payoff maps. Each is called as (t, x) or (x) and reads the state from its last argument.


class ConstantPayoff:
    state_dependent = False

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, *args):
        return np.full(_shape(args), self.value)


class AffinePayoff:
    def __init__(self, a: float, b: float):
        self.a = float(a)
        self.b = float(b)
        self.state_dependent = self.b != 0.0

    def __call__(self, *args):
        x = np.asarray(args[-1], dtype=float)
        return np.broadcast_to(self.a + self.b * x, _shape(args)).copy()


class CallPayoff:
    """scale·max(x − strike, 0) + shift"""
    state_dependent = True

    def __init__(self, strike: float, scale: float = 1.0, shift: float = 0.0):
        self.strike = float(strike)
        self.scale = float(scale)
        self.shift = float(shift)

    def __call__(self, *args):
        x = np.asarray(args[-1], dtype=float)
        return np.broadcast_to(self.scale * np.maximum(x - self.strike, 0.0) + self.shift, _shape(args)).copy()


class PutPayoff(CallPayoff):
    """scale·max(strike − x, 0) + shift"""

    def __call__(self, *args):
        x = np.asarray(args[-1], dtype=float)
        return np.broadcast_to(self.scale * np.maximum(self.strike - x, 0.0) + self.shift, _shape(args)).copy()


# Coefficients of the state equation, called as (t, x).


class LinearCoefficient:
    def __init__(self, rate: float):
        self.rate = float(rate)
        self.is_zero = self.rate == 0.0

    def __call__(self, t, x):
        return self.rate * np.asarray(x, dtype=float)


class ConstantCoefficient:
    def __init__(self, value: float):
        self.value = float(value)
        self.is_zero = self.value == 0.0

    def __call__(self, t, x):
        return np.full(np.shape(x), self.value)


# Parameter schemas


class ConstantParams(BaseModel):
    value: float = Field(..., description="Constant payoff")


class AffineParams(BaseModel):
    a: float = Field(..., description="Intercept")
    b: float = Field(..., description="Slope in the state")


class OptionParams(BaseModel):
    strike: float = Field(..., description="Strike K")
    scale: float = Field(1.0, description="Multiplier of the option payoff")
    shift: float = Field(0.0, description="Constant added to the payoff")


class DiffusionParams(BaseModel):
    mu: float = Field(..., description="Drift parameter")
    sigma: float = Field(..., ge=0, description="Volatility parameter")


PAYOFFS: Dict[str, Tuple[Type, Type[BaseModel], str]] = {
    "constant": (ConstantPayoff, ConstantParams, "value"),
    "affine": (AffinePayoff, AffineParams, "a + b·x"),
    "call": (CallPayoff, OptionParams, "scale·max(x − strike, 0) + shift"),
    "put": (PutPayoff, OptionParams, "scale·max(strike − x, 0) + shift"),
}

DYNAMICS: Dict[str, Tuple[Type[BaseModel], str]] = {
    "geometric": (DiffusionParams, "dX = mu·X dt + sigma·X dW"),
    "arithmetic": (DiffusionParams, "dX = mu dt + sigma dW"),
}


class BuiltinService:
    """Lookup, validation and construction of built-in payoffs and dynamics."""

    @staticmethod
    def list_builtins() -> Dict[str, Any]:
        return {
            "payoffs": [
                {"name": name, "description": text, "parameters": params.model_json_schema()}
                for name, (_, params, text) in sorted(PAYOFFS.items())
            ],
            "dynamics": [
                {"name": name, "description": text, "parameters": params.model_json_schema()}
                for name, (params, text) in sorted(DYNAMICS.items())
            ],
        }

    @staticmethod
    def suggest(name: str, choices) -> str:
        matches = difflib.get_close_matches(name, list(choices), n=1, cutoff=0.0)
        return matches[0] if matches else ""

    @classmethod
    def _lookup(cls, name: str, table: Dict[str, Any], kind: str, where: str):
        if name not in table:
            nearest = cls.suggest(name, table)
            raise SpecValidationError(f"{where}: unknown {kind} built-in '{name}'; did you mean '{nearest}'?")
        return table[name]

    @staticmethod
    def _validate_params(schema: Type[BaseModel], params: Dict[str, Any], where: str) -> BaseModel:
        try:
            return schema(**params)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
            )
            raise SpecValidationError(f"{where}: {problems}")
        except TypeError as e:
            raise SpecValidationError(f"{where}: {e}")

    @classmethod
    def build_payoff(cls, name: str, params: Dict[str, Any], where: str = "payoff"):
        factory, schema, _ = cls._lookup(name, PAYOFFS, "payoff", where)
        checked = cls._validate_params(schema, params, where)
        return factory(**checked.model_dump())

    @classmethod
    def build_dynamics(cls, name: str, params: Dict[str, Any], where: str = "dynamics"):
        """(drift, volatility) coefficient maps of a named diffusion."""
        schema, _ = cls._lookup(name, DYNAMICS, "dynamics", where)
        checked = cls._validate_params(schema, params, where)
        if name == "geometric":
            return LinearCoefficient(checked.mu), LinearCoefficient(checked.sigma)
        return ConstantCoefficient(checked.mu), ConstantCoefficient(checked.sigma)


# Create instance for easy import
builtin_service = BuiltinService()
