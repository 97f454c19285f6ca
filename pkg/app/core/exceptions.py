"""
Domain errors for the solver.

Every error derives from ValueError so routers and the CLI can treat them the
same way they treat invalid input.
"""
from typing import Optional


class DynkinError(ValueError):
    """Base class for solver errors."""


class ParameterError(DynkinError):
    """A model or operation parameter is out of its admissible range."""


class NoSamplesError(DynkinError):
    def __init__(self):
        super().__init__("no samples")


class DomainViolationError(DynkinError):
    """A value lies outside the validity interval of g or g⁻¹."""

    def __init__(self, value: float, interval: Optional[tuple] = None, context: str = ""):
        self.value = value
        self.interval = interval
        detail = f"domain violation: value {value!r}"
        if interval is not None:
            detail += f" outside [{interval[0]!r}, {interval[1]!r}]"
        if context:
            detail += f" ({context})"
        super().__init__(detail)


class DegenerateDerivativeError(DynkinError):
    def __init__(self, x: float):
        self.x = x
        super().__init__(f"degenerate derivative: g'({x!r}) is numerically zero")


class RangeError(DynkinError):
    """A time argument falls outside [0, T]."""


class StreamTruncatedError(DynkinError):
    def __init__(self, horizon: float, last_arrival: float):
        super().__init__(
            f"stream truncated before horizon: last arrival {last_arrival!r} <= T={horizon!r}; "
            f"increase horizon_cap"
        )


class ModeError(DynkinError):
    """The model does not fit the requested solver mode."""


class StabilityError(DynkinError):
    """Explicit scheme refuses to run: Δt exceeds the stability bound."""

    def __init__(self, n_t: int, required_n_t: int):
        self.n_t = n_t
        self.required_n_t = required_n_t
        super().__init__(
            f"explicit scheme unstable: N_t={n_t} violates dt <= dx^2/max(sigma^2); "
            f"use N_t >= {required_n_t}"
        )


class PayoffEvaluationError(DynkinError):
    """A payoff map returned NaN or infinity on the evaluation grid."""


class ExponentialOverflowError(DynkinError):
    def __init__(self, where: str):
        super().__init__(
            f"overflow in exponential driver ({where}); use a smaller gamma or rescale payoffs"
        )


class SurfaceMismatchError(DynkinError):
    """A ValueSurface was solved for a different model."""


class SpecValidationError(DynkinError):
    """An experiment specification failed validation."""
