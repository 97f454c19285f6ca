"""
Small numerical helpers shared by the solvers and the Monte Carlo engine.
"""
import math
from typing import Callable, Iterable, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from app.core.exceptions import NoSamplesError, PayoffEvaluationError


def positive_part(x):
    return np.maximum(x, 0.0)


def compensated_mean(values: Iterable[float]) -> float:
    """Mean with compensated summation in index order."""
    if not isinstance(values, np.ndarray):
        values = list(values)
    data = np.asarray(values, dtype=float).ravel()
    if data.size == 0:
        raise NoSamplesError()
    return math.fsum(data.tolist()) / data.size


def sample_variance(values: np.ndarray) -> float:
    """Unbiased variance computed on deviations from the first sample.

    Identical samples give exactly 0.
    """
    data = np.asarray(values, dtype=float).ravel()
    n = data.size
    if n == 0:
        raise NoSamplesError()
    if n == 1:
        return 0.0
    shifted = (data - data[0]).tolist()
    total = math.fsum(shifted)
    squares = math.fsum(d * d for d in shifted)
    return max((squares - total * total / n) / (n - 1), 0.0)


def standard_error(values: np.ndarray) -> float:
    data = np.asarray(values, dtype=float).ravel()
    return math.sqrt(sample_variance(data) / data.size)


def ensure_finite(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise PayoffEvaluationError(f"{what} returned NaN or infinity on the evaluation grid")
    return arr


def cumulative_integral(times: np.ndarray, integrand: np.ndarray) -> np.ndarray:
    """Trapezoid accumulation along the last axis, starting at 0."""
    return cumulative_trapezoid(integrand, times, axis=-1, initial=0.0)


def trapezoid_until(times: np.ndarray, integrand: np.ndarray, stop, value_at_stop) -> np.ndarray:
    """Trapezoid integral on [times[0], stop], closing the last partial interval.

    `integrand` has one row per path, shape (n_paths, n); `stop` and
    `value_at_stop` have shape (n_paths,).
    """
    integrand = np.atleast_2d(integrand)
    stop = np.atleast_1d(np.asarray(stop, dtype=float))
    value_at_stop = np.broadcast_to(np.asarray(value_at_stop, dtype=float), stop.shape)
    cumulative = cumulative_integral(times, integrand)
    k = np.clip(np.searchsorted(times, stop, side="right") - 1, 0, times.size - 1)
    rows = np.arange(stop.size)
    partial = 0.5 * (stop - times[k]) * (integrand[rows, k] + value_at_stop)
    return cumulative[rows, k] + partial


def gauss_legendre(a: float, b: float, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the `nodes`-point Gauss-Legendre rule on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gauss_legendre(
    fn: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    nodes: int,
    panels: int = 16,
) -> float:
    if b <= a:
        return 0.0
    edges = np.linspace(a, b, panels + 1)
    total = []
    for left, right in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(left, right, nodes)
        total.append(float(np.dot(w, fn(x))))
    return math.fsum(total)


def accumulate_on_grid(fn: Callable[[np.ndarray], np.ndarray], times: np.ndarray, nodes: int = 8) -> np.ndarray:
    """Running integral of a smooth time function at every grid time (Gauss-Legendre per cell)."""
    out = np.zeros_like(times, dtype=float)
    for k in range(1, times.size):
        x, w = gauss_legendre(times[k - 1], times[k], nodes)
        out[k] = out[k - 1] + float(np.dot(w, fn(x)))
    return out
