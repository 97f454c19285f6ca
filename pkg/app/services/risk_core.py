"""
Risk-sensitive criterion g, the nonlinear expectation g⁻¹(E[g(·)]) and the payoff
transforms between raw, discounted and auxiliary coordinates.
"""
import logging
import math
from typing import Callable, Iterable, Optional, Union

import numpy as np
from scipy.optimize import brentq

from app.config import settings
from app.core.exceptions import (
    DegenerateDerivativeError,
    DomainViolationError,
    NoSamplesError,
    RangeError,
)
from app.models.enums import PayoffName, RiskKind
from app.models.risk import PayoffBundle, RiskFunction, StatePath
from app.utils.numerics import (
    accumulate_on_grid,
    compensated_mean,
    sample_variance,
    trapezoid_until,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Sample states used to decide whether a payoff map ignores the state
_STATE_SAMPLES = np.array([-3.0, -1.0, 0.0, 0.5, 1.0, 2.0, 7.5])


def _like(source, out):
    """Return a Python float when the caller passed a scalar."""
    if np.ndim(source) == 0:
        return float(out)
    return out


class RiskCore:
    """
    Evaluation of g, g⁻¹ and the derived payoff transforms.

    All methods are pure; arrays are handled elementwise.
    """

    @classmethod
    def g_forward(cls, g: RiskFunction, x: ArrayLike) -> ArrayLike:
        values = np.asarray(x, dtype=float)
        if g.kind == RiskKind.IDENTITY:
            out = values.copy()
        elif g.kind == RiskKind.EXPONENTIAL:
            with np.errstate(over="ignore"):
                out = -np.exp(-g.gamma * values)
        else:
            cls._check_interval(g, values)
            out = np.vectorize(g.forward, otypes=[float])(values)

        bad = ~np.isfinite(out)
        if np.any(bad):
            offending = float(values[bad].flat[0]) if values.ndim else float(values)
            raise DomainViolationError(offending, g.interval, context="g")
        return _like(x, out)

    @classmethod
    def g_inverse(cls, g: RiskFunction, y: ArrayLike) -> ArrayLike:
        values = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(values)):
            offending = values[~np.isfinite(values)].flat[0]
            raise DomainViolationError(float(offending), context="g inverse")

        if g.kind == RiskKind.IDENTITY:
            return _like(y, values.copy())

        if g.kind == RiskKind.EXPONENTIAL:
            ceiling = settings.exp_inverse_ceiling
            bad = values > ceiling
            if np.any(bad):
                offending = values[bad].flat[0] if values.ndim else values
                raise DomainViolationError(float(offending), (-math.inf, ceiling), context="exponential g inverse")
            return _like(y, -np.log(-values) / g.gamma)

        lo, hi = g.interval
        g_lo = g.forward(lo) if math.isfinite(lo) else -math.inf
        g_hi = g.forward(hi) if math.isfinite(hi) else math.inf
        bad = (values < g_lo) | (values > g_hi)
        if np.any(bad):
            offending = values[bad].flat[0] if values.ndim else values
            raise DomainViolationError(float(offending), (g_lo, g_hi), context="custom g inverse")
        if g.inverse is not None:
            return _like(y, np.vectorize(g.inverse, otypes=[float])(values))
        return _like(y, np.vectorize(lambda v: cls._bisect(g, v), otypes=[float])(values))

    @classmethod
    def g_derivative(cls, g: RiskFunction, x: ArrayLike) -> ArrayLike:
        values = np.asarray(x, dtype=float)
        if g.kind == RiskKind.IDENTITY:
            return _like(x, np.ones_like(values))
        if g.kind == RiskKind.EXPONENTIAL:
            with np.errstate(over="ignore"):
                return _like(x, g.gamma * np.exp(-g.gamma * values))
        step = settings.fd_step * np.maximum(1.0, np.abs(values))
        up = cls.g_forward(g, values + step)
        down = cls.g_forward(g, values - step)
        return _like(x, (up - down) / (2.0 * step))

    @classmethod
    def nonlinear_expectation(cls, g: RiskFunction, samples: Iterable[float]) -> float:
        """
        Risk-sensitive certainty equivalent g⁻¹(mean of g(sample)).

        The mean is a compensated sum in sample-index order, so identity g
        reproduces the arithmetic mean exactly.
        """
        data = np.asarray(samples if isinstance(samples, np.ndarray) else list(samples), dtype=float).ravel()
        if data.size == 0:
            raise NoSamplesError()
        transformed = cls.g_forward(g, data)
        return float(cls.g_inverse(g, compensated_mean(transformed)))

    @classmethod
    def arrow_pratt(cls, g: RiskFunction, x: float, step: Optional[float] = None) -> float:
        """Absolute risk aversion −g''(x)/g'(x)."""
        if g.kind == RiskKind.CUSTOM:
            cls._check_interval(g, np.asarray(x, dtype=float))
        if g.kind == RiskKind.IDENTITY:
            return 0.0
        if g.kind == RiskKind.EXPONENTIAL:
            # g'(x) = γ·e^{−γx} underflows to zero
            if -g.gamma * x < -745.0:
                raise DegenerateDerivativeError(x)
            return float(g.gamma)

        h = step if step is not None else settings.fd_step
        centre = float(cls.g_forward(g, x))
        up = float(cls.g_forward(g, x + h))
        down = float(cls.g_forward(g, x - h))
        first = (up - down) / (2.0 * h)
        second = (up - 2.0 * centre + down) / (h * h)
        if abs(first) <= np.finfo(float).eps * max(abs(centre), 1.0):
            raise DegenerateDerivativeError(x)
        return -second / first

    @classmethod
    def certainty_equivalent_approximation(cls, g: RiskFunction, samples: Iterable[float]) -> float:
        """Second-order expansion mean − ½·l_g(mean)·variance of the nonlinear expectation."""
        data = np.asarray(samples if isinstance(samples, np.ndarray) else list(samples), dtype=float).ravel()
        mean = compensated_mean(data)
        return mean - 0.5 * cls.arrow_pratt(g, mean) * sample_variance(data)

    @classmethod
    def running_integral(cls, bundle: PayoffBundle, path: StatePath, t: float) -> float:
        """∫₀ᵗ e^{−ru} f(u, X_u) du by the trapezoid rule on the path grid."""
        if t <= path.times[0]:
            return 0.0
        integrand = np.exp(-bundle.r * path.times) * np.asarray(bundle.f(path.times, path.states), dtype=float)
        integrand = np.broadcast_to(integrand, path.times.shape)
        at_stop = math.exp(-bundle.r * t) * float(np.asarray(bundle.f(t, path.state_at(t)), dtype=float))
        return float(trapezoid_until(path.times, integrand, t, at_stop)[0])

    @classmethod
    def discounted_payoff(
        cls,
        bundle: PayoffBundle,
        which: Union[PayoffName, str],
        t: float,
        path: StatePath,
    ) -> float:
        """h̃_t = e^{−rt}·h_t + ∫₀ᵗ e^{−ru} f_u du; for ξ the time is T."""
        name = PayoffName(which)
        if name == PayoffName.TERMINAL:
            t = bundle.T
        cls._check_time(bundle, t, path)

        x_t = path.state_at(t)
        if name == PayoffName.TERMINAL:
            raw = bundle.xi(x_t)
        else:
            raw = bundle.obstacle(name.value)(t, x_t)
        return math.exp(-bundle.r * t) * float(raw) + cls.running_integral(bundle, path, t)

    @classmethod
    def auxiliary_payoff(
        cls,
        g: RiskFunction,
        bundle: PayoffBundle,
        which: Union[PayoffName, str],
        t: float,
        path: StatePath,
    ) -> float:
        """h̄_t = e^{rt}·g(h̃_t)."""
        if PayoffName(which) == PayoffName.TERMINAL:
            t = bundle.T
        discounted = cls.discounted_payoff(bundle, which, t, path)
        return math.exp(bundle.r * t) * float(cls.g_forward(g, discounted))

    @classmethod
    def value_from_qbar(
        cls,
        g: RiskFunction,
        bundle: PayoffBundle,
        t: float,
        qbar: float,
        path: StatePath,
    ) -> float:
        """Pullback Q_t = e^{r s}·(g⁻¹(e^{−r s}·Q̄_t) − ∫₀ˢ e^{−ru} f_u du) with s = t∧T."""
        s = min(t, bundle.T)
        accumulated = cls.running_integral(bundle, path, s)
        return cls.pullback(g, bundle.r, s, qbar, accumulated)

    # Grid forms used by the solvers

    @classmethod
    def transform_payoff(cls, g: RiskFunction, r: float, t: ArrayLike, h: ArrayLike, accumulated: ArrayLike = 0.0):
        """e^{rt}·g(e^{−rt}·h + accumulated), elementwise."""
        return np.exp(r * np.asarray(t)) * cls.g_forward(g, np.exp(-r * np.asarray(t)) * h + accumulated)

    @classmethod
    def pullback(cls, g: RiskFunction, r: float, t: ArrayLike, qbar: ArrayLike, accumulated: ArrayLike = 0.0):
        """e^{rt}·(g⁻¹(e^{−rt}·Q̄) − accumulated), elementwise."""
        out = np.exp(r * np.asarray(t)) * (cls.g_inverse(g, np.exp(-r * np.asarray(t)) * qbar) - accumulated)
        return _like(qbar, out) if np.ndim(t) == 0 else out

    @classmethod
    def accumulated_running(cls, bundle: PayoffBundle, times: np.ndarray) -> np.ndarray:
        """F(t) = ∫₀ᵗ e^{−ru} f(u) du on a grid, for a running payoff of time only."""
        def integrand(u):
            return np.exp(-bundle.r * u) * np.broadcast_to(bundle.f(u, np.zeros_like(u)), u.shape)

        return accumulate_on_grid(integrand, np.asarray(times, dtype=float))

    @staticmethod
    def depends_on_state(fn: Callable, horizon: float, terminal: bool = False) -> bool:
        """Whether a payoff map varies with the state (declared or sampled)."""
        declared = getattr(fn, "state_dependent", None)
        if declared is not None:
            return bool(declared)
        for t in np.linspace(0.0, horizon, 5):
            values = fn(_STATE_SAMPLES) if terminal else fn(np.full_like(_STATE_SAMPLES, t), _STATE_SAMPLES)
            values = np.broadcast_to(np.asarray(values, dtype=float), _STATE_SAMPLES.shape)
            if not np.all(values == values[0]):
                return True
            if terminal:
                break
        return False

    # Internal helpers

    @staticmethod
    def _check_interval(g: RiskFunction, values: np.ndarray) -> None:
        lo, hi = g.interval
        bad = (values < lo) | (values > hi) | np.isnan(values)
        if np.any(bad):
            offending = values[bad].flat[0] if values.ndim else values
            raise DomainViolationError(float(offending), g.interval, context="g")

    @staticmethod
    def _check_time(bundle: PayoffBundle, t: float, path: StatePath) -> None:
        if t < 0.0 or t > bundle.T:
            raise RangeError(f"time {t!r} outside [0, {bundle.T!r}]")
        if t > path.end_time or t < path.times[0]:
            raise RangeError(f"path defined on [{path.times[0]!r}, {path.end_time!r}] does not cover t={t!r}")

    @staticmethod
    def _bisect(g: RiskFunction, target: float) -> float:
        lo, hi = g.interval
        a = lo if math.isfinite(lo) else min(-1.0, hi - 1.0)
        b = hi if math.isfinite(hi) else max(1.0, lo + 1.0)
        width = 1.0
        while g.forward(a) > target and not math.isfinite(lo):
            width *= 2.0
            a -= width
            if width > 2.0 ** 64:
                raise DomainViolationError(target, context="custom g inverse bracket")
        width = 1.0
        while g.forward(b) < target and not math.isfinite(hi):
            width *= 2.0
            b += width
            if width > 2.0 ** 64:
                raise DomainViolationError(target, context="custom g inverse bracket")
        if g.forward(a) == target:
            return a
        if g.forward(b) == target:
            return b
        return brentq(lambda v: g.forward(v) - target, a, b, xtol=settings.bisection_tol)


# Create instance for easy import
risk_core = RiskCore()
