"""
Backward solvers for the penalized game equation.

Three backends share one driver: RK4 for deterministic coefficients, an explicit
finite-difference sweep for 1-D Markov models and least-squares regression Monte
Carlo for the general case. The risk-neutral and exponential-utility equations
are also solved directly in raw payoff coordinates for cross-validation.
"""
import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.config import settings
from app.core.exceptions import (
    ExponentialOverflowError,
    ModeError,
    ParameterError,
    StabilityError,
)
from app.models.enums import RiskKind, SolverMode
from app.models.surface import MarkovModel, MonotoneReport, RegressionResult, ValueSurface, WideningReport
from app.services.risk_core import risk_core
from app.utils.numerics import compensated_mean, ensure_finite, positive_part, standard_error
from app.utils.simulation import simulate_states

logger = logging.getLogger(__name__)

# driver(n, q, z) on one time slice
SliceDriver = Callable[[int, np.ndarray, Optional[np.ndarray]], np.ndarray]
EdgeMap = Callable[[int, np.ndarray], np.ndarray]


class BsdeSolver:
    """Backward-in-time solvers for the value equation."""

    MIN_ODE_STEPS = 10
    MIN_REGRESSION_PATHS = 1000
    SAMPLE_TIMES = 201

    @staticmethod
    def driver(q, ubar, lbar, lambda1: float, lambda2: float, r: float):
        """−λ1·(q−Ū)⁺ + λ2·(L̄−q)⁺ − r·q."""
        return -lambda1 * positive_part(q - ubar) + lambda2 * positive_part(lbar - q) - r * q

    # ------------------------------------------------------------------ ODE

    @classmethod
    def solve_ode(cls, model: MarkovModel, n_t: int) -> ValueSurface:
        """RK4 backward integration of dQ̄/dt = −driver for state-independent payoffs."""
        cls._require_time_only(model, "the ODE solver", include_obstacles=True)
        cls._check_ode_steps(n_t)
        bundle, g = model.bundle, model.g

        times, half = cls._ode_grids(bundle.T, n_t)
        accumulated_half = risk_core.accumulated_running(bundle, half)
        upper, lower, terminal = cls._time_payoffs(model, half)
        ubar = risk_core.transform_payoff(g, bundle.r, half, upper, accumulated_half)
        lbar = risk_core.transform_payoff(g, bundle.r, half, lower, accumulated_half)
        xibar = float(risk_core.transform_payoff(g, bundle.r, bundle.T, terminal, accumulated_half[-1]))

        def rhs(j: int, y: float) -> float:
            return -cls.driver(y, ubar[j], lbar[j], model.lambda1, model.lambda2, bundle.r)

        qbar = cls._rk4_backward(half, xibar, rhs)
        accumulated = accumulated_half[::2]
        q = risk_core.pullback(g, bundle.r, times, qbar, accumulated)

        logger.info(f"ODE solve: N_t={n_t}, Qbar(0)={qbar[0]:.10g}, Q(0)={q[0]:.10g}")
        return ValueSurface(
            mode=SolverMode.ODE,
            times=times,
            qbar=qbar[:, None],
            zbar=np.zeros((times.size, 1)),
            q=np.asarray(q)[:, None],
            accumulated=accumulated,
            model=model,
        )

    # ------------------------------------------------------------------ PDE

    @classmethod
    def solve_pde(cls, model: MarkovModel, n_t: int, n_x: int, x_min: float, x_max: float) -> ValueSurface:
        """Explicit finite differences for ∂ₜQ̄ + μ∂ₓQ̄ + ½σ²∂ₓₓQ̄ + driver = 0."""
        cls._check_pde_model(model)
        cls._require_time_only(model, "the auxiliary PDE solver", include_obstacles=False)
        bundle, g = model.bundle, model.g

        times = np.linspace(0.0, bundle.T, n_t + 1)
        xs = cls._state_grid(n_x, x_min, x_max)
        cls._check_stability(model, times, xs)

        accumulated = risk_core.accumulated_running(bundle, times)
        xibar = risk_core.transform_payoff(
            g, bundle.r, bundle.T, ensure_finite(np.broadcast_to(bundle.xi(xs), xs.shape), "xi"), accumulated[-1]
        )

        def slice_driver(n: int, q: np.ndarray, z: Optional[np.ndarray]) -> np.ndarray:
            t = times[n]
            upper, lower = cls._obstacles_on_slice(model, t, xs)
            ubar = risk_core.transform_payoff(g, bundle.r, t, upper, accumulated[n])
            lbar = risk_core.transform_payoff(g, bundle.r, t, lower, accumulated[n])
            return cls.driver(q, ubar, lbar, model.lambda1, model.lambda2, bundle.r)

        def to_raw(n: int, values: np.ndarray) -> np.ndarray:
            return risk_core.pullback(g, bundle.r, times[n], values, accumulated[n])

        def from_raw(n: int, values: np.ndarray) -> np.ndarray:
            return risk_core.transform_payoff(g, bundle.r, times[n], values, accumulated[n])

        qbar = cls._explicit_sweep(
            model, times, xs, xibar, slice_driver, needs_gradient=False, edge_maps=(to_raw, from_raw)
        )
        zbar = cls._gradient_term(model, times, xs, qbar)
        q = risk_core.pullback(g, bundle.r, times[:, None], qbar, accumulated[:, None])

        surface = ValueSurface(
            mode=SolverMode.PDE, times=times, states=xs, qbar=qbar, zbar=zbar, q=q,
            accumulated=accumulated, model=model,
        )
        logger.info(
            f"PDE solve: N_t={n_t}, N_x={n_x}, x in [{x_min}, {x_max}], Q(0,x0)={surface.initial_value:.10g}"
        )
        return surface

    # ------------------------------------------------------- regression MC

    @classmethod
    def solve_regression_mc(
        cls,
        model: MarkovModel,
        n_t: int,
        n_paths: int,
        basis_degree: Optional[int] = None,
        rng_seed: Optional[int] = None,
        jobs: int = 1,
    ) -> RegressionResult:
        """
        Least-squares backward induction on Euler paths.

        Q̄ at step k is the regressed conditional expectation of step k+1 plus
        Δt times the driver evaluated at that regressed value. Every path starts
        at x₀, so the first step uses a plain mean.
        """
        if n_paths < cls.MIN_REGRESSION_PATHS:
            raise ParameterError(f"regression Monte Carlo needs at least {cls.MIN_REGRESSION_PATHS} paths")
        if n_t < 1:
            raise ParameterError("N_t must be >= 1")
        cls._require_time_only(model, "the regression solver", include_obstacles=False)
        degree = settings.regression_degree if basis_degree is None else int(basis_degree)
        if degree < 0:
            raise ParameterError("basis degree must be >= 0")
        seed = settings.default_seed if rng_seed is None else int(rng_seed)
        bundle, g = model.bundle, model.g

        times = np.linspace(0.0, bundle.T, n_t + 1)
        states = simulate_states(model, times, n_paths, seed, jobs)
        observed = model.observable(states)
        accumulated = risk_core.accumulated_running(bundle, times)

        terminal = ensure_finite(np.broadcast_to(bundle.xi(observed[:, -1]), (n_paths,)), "xi")
        y = risk_core.transform_payoff(g, bundle.r, bundle.T, terminal, accumulated[-1])
        table = []
        reduced_steps = 0
        for k in range(n_t - 1, 0, -1):
            t = times[k]
            upper, lower = cls._obstacles_on_slice(model, t, observed[:, k])
            ubar = risk_core.transform_payoff(g, bundle.r, t, upper, accumulated[k])
            lbar = risk_core.transform_payoff(g, bundle.r, t, lower, accumulated[k])
            fitted, coefficients, used, centre, scale = cls._regress(states[:, k], y, degree)
            if used < degree:
                reduced_steps += 1
            y = fitted + (times[k + 1] - t) * cls.driver(fitted, ubar, lbar, model.lambda1, model.lambda2, bundle.r)
            table.append({
                "step": k, "t": float(t), "degree": used,
                "centre": np.atleast_1d(centre).tolist(), "scale": np.atleast_1d(scale).tolist(),
                "coefficients": coefficients.tolist(),
            })

        continuation = compensated_mean(y)
        stderr = standard_error(y)
        x0 = np.array([model.initial_observable])
        upper, lower = cls._obstacles_on_slice(model, 0.0, x0)
        ubar0 = float(risk_core.transform_payoff(g, bundle.r, 0.0, upper, 0.0)[0])
        lbar0 = float(risk_core.transform_payoff(g, bundle.r, 0.0, lower, 0.0)[0])
        qbar0 = continuation + times[1] * float(
            cls.driver(continuation, ubar0, lbar0, model.lambda1, model.lambda2, bundle.r)
        )
        table.append({"step": 0, "t": 0.0, "degree": 0, "centre": [], "scale": [], "coefficients": [continuation]})
        table.reverse()

        if reduced_steps:
            logger.warning(f"Regression basis degree reduced at {reduced_steps} of {n_t - 1} steps (rank deficiency)")
        q0 = float(risk_core.pullback(g, bundle.r, 0.0, qbar0, 0.0))
        logger.info(f"Regression MC: N_t={n_t}, paths={n_paths}, Qbar(0)={qbar0:.10g} +/- {stderr:.3g}")
        return RegressionResult(
            qbar0=qbar0, stderr=stderr, q0=q0, n_paths=n_paths, n_steps=n_t, degree=degree, coefficients=table
        )

    # ------------------------------------------------- raw-coordinate forms

    @classmethod
    def solve_risk_neutral(
        cls,
        model: MarkovModel,
        mode: SolverMode,
        n_t: int,
        n_x: Optional[int] = None,
        x_min: Optional[float] = None,
        x_max: Optional[float] = None,
    ) -> ValueSurface:
        """Penalized double-obstacle equation in raw coordinates (identity g)."""
        if model.g.kind != RiskKind.IDENTITY:
            raise ModeError("the risk-neutral equation requires the identity risk function")
        lambda1, lambda2 = model.lambda1, model.lambda2

        def generator(t, f, upper, lower, q, z):
            return f - lambda1 * positive_part(q - upper) + lambda2 * positive_part(lower - q) - model.bundle.r * q

        return cls._solve_raw(model, SolverMode(mode), generator, n_t, n_x, x_min, x_max, "risk-neutral")

    @classmethod
    def solve_exponential_quadratic(
        cls,
        model: MarkovModel,
        gamma: float,
        mode: SolverMode,
        n_t: int,
        n_x: Optional[int] = None,
        x_min: Optional[float] = None,
        x_max: Optional[float] = None,
    ) -> ValueSurface:
        """Quadratic-growth equation for exponential utility in raw coordinates."""
        if model.g.kind != RiskKind.EXPONENTIAL:
            raise ModeError("the exponential-quadratic equation requires an exponential risk function")
        if not math.isclose(gamma, model.g.gamma, rel_tol=1e-12):
            raise ParameterError(f"gamma={gamma} does not match the model's risk function gamma={model.g.gamma}")
        lambda1, lambda2, r = model.lambda1, model.lambda2, model.bundle.r

        def generator(t, f, upper, lower, q, z):
            discount = math.exp(-r * t)
            growth = math.exp(r * t) / gamma
            try:
                with np.errstate(over="raise", invalid="raise"):
                    above = positive_part(np.expm1(gamma * discount * (q - upper)))
                    below = positive_part(-np.expm1(gamma * discount * (q - lower)))
            except FloatingPointError:
                raise ExponentialOverflowError(f"penalty terms at t={t:.6g}")
            quadratic = 0.0 if z is None else 0.5 * gamma * discount * z * z
            return f - lambda1 * growth * above + lambda2 * growth * below - r * q - quadratic

        return cls._solve_raw(model, SolverMode(mode), generator, n_t, n_x, x_min, x_max, "exponential-quadratic")

    @staticmethod
    def z_from_zbar(model: MarkovModel, t, zbar, qbar):
        """Z = −e^{rt}·Z̄/(γ·Q̄) for exponential g."""
        if model.g.kind != RiskKind.EXPONENTIAL:
            raise ModeError("Z recovery from Zbar is defined for exponential g")
        return -np.exp(model.bundle.r * np.asarray(t)) * np.asarray(zbar) / (model.g.gamma * np.asarray(qbar))

    # ------------------------------------------------------------ diagnostics

    @classmethod
    def required_time_steps(cls, model: MarkovModel, n_x: int, x_min: float, x_max: float) -> int:
        xs = cls._state_grid(n_x, x_min, x_max)
        sample_times = np.linspace(0.0, model.horizon, cls.SAMPLE_TIMES)
        sigma2 = max(float(np.max(cls._volatility_on_slice(model, t, xs) ** 2)) for t in sample_times)
        dx = xs[1] - xs[0]
        return max(1, math.ceil(model.horizon * sigma2 / (dx * dx) - 1e-9))

    @classmethod
    def widening_check(cls, model: MarkovModel, n_t: int, n_x: int, x_min: float, x_max: float) -> WideningReport:
        """Double the state domain about x₀ at fixed Δx and compare Q̄(0, x₀)."""
        base = cls.solve_pde(model, n_t, n_x, x_min, x_max)
        x0 = model.initial_observable
        wide_min = x0 - 2.0 * (x0 - x_min)
        wide_max = x0 + 2.0 * (x_max - x0)
        dx = (x_max - x_min) / n_x
        wide_nx = int(round((wide_max - wide_min) / dx))
        wide_nt = max(n_t, cls.required_time_steps(model, wide_nx, wide_min, wide_max))
        wide = cls.solve_pde(model, wide_nt, wide_nx, wide_min, wide_max)

        value, widened = base.initial_qbar, wide.initial_qbar
        change = abs(widened - value)
        tolerance = 1e-4 * max(1.0, abs(value))
        if change >= tolerance:
            logger.warning(f"Value at x0 is boundary-sensitive: change {change:.3g} >= {tolerance:.3g}")
        return WideningReport(
            value=value, widened_value=widened, change=change, tolerance=tolerance,
            passed=change < tolerance, widened_grid=(wide_min, wide_max, wide_nx, wide_nt),
        )

    @classmethod
    def monotone_opportunity(
        cls,
        model: MarkovModel,
        intensities: Sequence[float],
        n_t: int,
        mode: SolverMode = SolverMode.ODE,
        n_x: Optional[int] = None,
        x_min: Optional[float] = None,
        x_max: Optional[float] = None,
    ) -> MonotoneReport:
        """One-player values (min player never stops) across increasing max-player intensities."""
        ordered = sorted(float(lam) for lam in intensities)
        surfaces = []
        for lam in ordered:
            single = model.with_intensities(0.0, lam)
            if SolverMode(mode) == SolverMode.PDE:
                surfaces.append(cls.solve_pde(single, n_t, n_x, x_min, x_max))
            else:
                surfaces.append(cls.solve_ode(single, n_t))
        values = [s.initial_value for s in surfaces]
        scale = max(1.0, max(abs(v) for v in values))
        nondecreasing = all(b >= a - 1e-12 * scale for a, b in zip(values, values[1:]))
        nodewise = all(np.all(nxt.q >= prev.q - 1e-10 * scale) for prev, nxt in zip(surfaces, surfaces[1:]))
        return MonotoneReport(
            intensities=ordered, values=values, nondecreasing=nondecreasing, nodewise_nondecreasing=bool(nodewise)
        )

    # ------------------------------------------------------------- internals

    @classmethod
    def _solve_raw(cls, model, mode, generator, n_t, n_x, x_min, x_max, label) -> ValueSurface:
        bundle = model.bundle
        if mode == SolverMode.ODE:
            cls._require_time_only(model, f"the {label} ODE solver", include_obstacles=True)
            cls._check_ode_steps(n_t)
            times, half = cls._ode_grids(bundle.T, n_t)
            upper, lower, terminal = cls._time_payoffs(model, half)
            running = ensure_finite(np.broadcast_to(bundle.f(half, np.zeros_like(half)), half.shape), "f")

            def rhs(j: int, y: float) -> float:
                return -float(generator(half[j], running[j], upper[j], lower[j], y, None))

            q = cls._rk4_backward(half, float(terminal), rhs)
            logger.info(f"{label} ODE solve: N_t={n_t}, Q(0)={q[0]:.10g}")
            return ValueSurface(
                mode=mode, coordinates="raw", times=times, qbar=q[:, None], zbar=np.zeros((times.size, 1)),
                q=q[:, None], accumulated=np.zeros_like(times), model=model,
            )

        if mode != SolverMode.PDE:
            raise ModeError(f"the {label} equation is solved by the ode or pde backend, not {mode.value}")
        cls._check_pde_model(model)
        times = np.linspace(0.0, bundle.T, n_t + 1)
        xs = cls._state_grid(n_x, x_min, x_max)
        cls._check_stability(model, times, xs)
        terminal = ensure_finite(np.broadcast_to(bundle.xi(xs), xs.shape), "xi")

        def slice_driver(n: int, q: np.ndarray, z: Optional[np.ndarray]) -> np.ndarray:
            t = times[n]
            upper, lower = cls._obstacles_on_slice(model, t, xs)
            running = ensure_finite(np.broadcast_to(bundle.f(t, xs), xs.shape), "f")
            return generator(t, running, upper, lower, q, z)

        q = cls._explicit_sweep(model, times, xs, np.array(terminal, dtype=float), slice_driver, needs_gradient=True)
        z = cls._gradient_term(model, times, xs, q)
        surface = ValueSurface(
            mode=mode, coordinates="raw", times=times, states=xs, qbar=q, zbar=z, q=q,
            accumulated=np.zeros_like(times), model=model,
        )
        logger.info(f"{label} PDE solve: N_t={n_t}, N_x={n_x}, Q(0,x0)={surface.initial_value:.10g}")
        return surface

    @staticmethod
    def _ode_grids(horizon: float, n_t: int) -> Tuple[np.ndarray, np.ndarray]:
        return np.linspace(0.0, horizon, n_t + 1), np.linspace(0.0, horizon, 2 * n_t + 1)

    @classmethod
    def _check_ode_steps(cls, n_t: int) -> None:
        if n_t < cls.MIN_ODE_STEPS:
            raise ParameterError(f"N_t must be >= {cls.MIN_ODE_STEPS}, got {n_t}")

    @staticmethod
    def _rk4_backward(half: np.ndarray, terminal: float, rhs: Callable[[int, float], float]) -> np.ndarray:
        """Classical RK4 from T down to 0; `half` holds grid times and midpoints."""
        n = (half.size - 1) // 2
        y = np.empty(n + 1)
        y[n] = terminal
        for k in range(n - 1, -1, -1):
            j = 2 * (k + 1)
            h = half[j - 2] - half[j]
            current = y[k + 1]
            k1 = rhs(j, current)
            k2 = rhs(j - 1, current + 0.5 * h * k1)
            k3 = rhs(j - 1, current + 0.5 * h * k2)
            k4 = rhs(j - 2, current + h * k3)
            y[k] = current + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return y

    @classmethod
    def _explicit_sweep(
        cls,
        model: MarkovModel,
        times: np.ndarray,
        xs: np.ndarray,
        terminal: np.ndarray,
        slice_driver: SliceDriver,
        needs_gradient: bool,
        edge_maps: Optional[Tuple[EdgeMap, EdgeMap]] = None,
    ) -> np.ndarray:
        """
        Backward explicit Euler in time with central differences in space.

        Edge nodes are extrapolated linearly in raw payoff coordinates. A sweep
        over transformed values passes ``edge_maps``, the per-slice maps to raw
        coordinates and back, so every coordinate system shares one edge rule.
        """
        dx = xs[1] - xs[0]
        values = np.empty((times.size, xs.size))
        values[-1] = terminal
        for n in range(times.size - 2, -1, -1):
            dt = times[n + 1] - times[n]
            nxt = values[n + 1]
            mu = cls._drift_on_slice(model, times[n + 1], xs)
            sigma = cls._volatility_on_slice(model, times[n + 1], xs)
            z = sigma * np.gradient(nxt, dx) if needs_gradient else None
            generator = slice_driver(n + 1, nxt, z)
            d1 = (nxt[2:] - nxt[:-2]) / (2.0 * dx)
            d2 = (nxt[2:] - 2.0 * nxt[1:-1] + nxt[:-2]) / (dx * dx)
            current = values[n]
            current[1:-1] = nxt[1:-1] + dt * (mu[1:-1] * d1 + 0.5 * sigma[1:-1] ** 2 * d2 + generator[1:-1])
            cls._extrapolate_edges(n, current, edge_maps)
        if not np.all(np.isfinite(values)):
            raise ParameterError("finite-difference solution is not finite; refine the grid or rescale payoffs")
        return values

    @staticmethod
    def _extrapolate_edges(n: int, current: np.ndarray, edge_maps: Optional[Tuple[EdgeMap, EdgeMap]]) -> None:
        inner = current[[1, 2, -3, -2]]
        if edge_maps is not None:
            inner = edge_maps[0](n, inner)
        edges = np.array([2.0 * inner[0] - inner[1], 2.0 * inner[3] - inner[2]])
        if edge_maps is not None:
            edges = edge_maps[1](n, edges)
        current[0], current[-1] = edges[0], edges[1]

    @classmethod
    def _gradient_term(cls, model: MarkovModel, times: np.ndarray, xs: np.ndarray, values: np.ndarray) -> np.ndarray:
        dx = xs[1] - xs[0]
        sigma = np.stack([cls._volatility_on_slice(model, t, xs) for t in times])
        return sigma * np.gradient(values, dx, axis=1)

    @staticmethod
    def _drift_on_slice(model: MarkovModel, t: float, xs: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(model.drift(t, xs), dtype=float), xs.shape)

    @staticmethod
    def _volatility_on_slice(model: MarkovModel, t: float, xs: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(model.volatility(t, xs), dtype=float), xs.shape)

    @staticmethod
    def _state_grid(n_x: Optional[int], x_min: Optional[float], x_max: Optional[float]) -> np.ndarray:
        if n_x is None or x_min is None or x_max is None:
            raise ParameterError("the PDE backend needs N_x, x_min and x_max")
        if n_x < 2:
            raise ParameterError(f"N_x must be >= 2, got {n_x}")
        if not x_max > x_min:
            raise ParameterError(f"x_max must exceed x_min, got [{x_min}, {x_max}]")
        return np.linspace(x_min, x_max, n_x + 1)

    @staticmethod
    def _check_pde_model(model: MarkovModel) -> None:
        if model.dimension != 1:
            raise ModeError("the PDE backend handles one-dimensional states only; use regression Monte Carlo")

    @classmethod
    def _check_stability(cls, model: MarkovModel, times: np.ndarray, xs: np.ndarray) -> None:
        dx = xs[1] - xs[0]
        sigma2 = 0.0
        for t in times:
            sigma = cls._volatility_on_slice(model, t, xs)
            if np.any(sigma < 0):
                raise ParameterError(f"volatility must be >= 0 on the grid (t={t})")
            sigma2 = max(sigma2, float(np.max(sigma * sigma)))
        n_t = times.size - 1
        if sigma2 == 0.0:
            return
        required = max(1, math.ceil(model.horizon * sigma2 / (dx * dx) - 1e-9))
        if n_t < required:
            logger.error(f"CFL violation: N_t={n_t} < required {required}")
            raise StabilityError(n_t, required)

    @staticmethod
    def _obstacles_on_slice(model: MarkovModel, t: float, xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        upper = ensure_finite(np.broadcast_to(model.bundle.U(t, xs), xs.shape), "U")
        lower = ensure_finite(np.broadcast_to(model.bundle.L(t, xs), xs.shape), "L")
        return upper, lower

    @staticmethod
    def _time_payoffs(model: MarkovModel, half: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        bundle = model.bundle
        zeros = np.zeros_like(half)
        upper = ensure_finite(np.broadcast_to(bundle.U(half, zeros), half.shape), "U")
        lower = ensure_finite(np.broadcast_to(bundle.L(half, zeros), half.shape), "L")
        terminal = float(ensure_finite(np.broadcast_to(bundle.xi(np.zeros(1)), (1,)), "xi")[0])
        return upper, lower, terminal

    @staticmethod
    def _require_time_only(model: MarkovModel, what: str, include_obstacles: bool) -> None:
        bundle = model.bundle
        checks = [("f", bundle.f, False)]
        if include_obstacles:
            checks += [("L", bundle.L, False), ("U", bundle.U, False), ("xi", bundle.xi, True)]
        for name, fn, terminal in checks:
            if risk_core.depends_on_state(fn, bundle.T, terminal=terminal):
                raise ModeError(f"{what} needs a state-independent {name}")

    @staticmethod
    def _regress(x: np.ndarray, y: np.ndarray, degree: int):
        """Least-squares fit of y on monomials of the standardized state, lowering the degree on rank loss."""
        x = x[:, None] if x.ndim == 1 else x
        centre = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0.0] = 1.0
        z = (x - centre) / scale
        ones = np.ones((x.shape[0], 1))
        for used in range(degree, -1, -1):
            columns = [ones] + [z ** p for p in range(1, used + 1)]
            basis = np.hstack(columns)
            coefficients, _, rank, _ = np.linalg.lstsq(basis, y, rcond=None)
            if rank == basis.shape[1]:
                return basis @ coefficients, coefficients, used, centre, scale
        raise ParameterError("regression failed even with a constant basis")


# Create instance for easy import
bsde_solver = BsdeSolver()
