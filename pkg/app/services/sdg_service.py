"""
Randomized-stopping differential game: the players pick stopping intensities
instead of stopping times, and the game pays the hazard-weighted obstacles.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.config import settings
from app.core.exceptions import DegenerateDerivativeError, ParameterError, SurfaceMismatchError
from app.models.enums import Label
from app.models.game import ControlPolicy, DeviationResult, RepresentationReport
from app.models.risk import PayoffBundle, RiskFunction, StatePath
from app.models.surface import MarkovModel, ValueSurface
from app.services.risk_core import risk_core
from app.utils.numerics import compensated_mean, cumulative_integral, standard_error
from app.utils.rng import Block, StreamTag, block_generator
from app.utils.simulation import euler_paths, run_blocks

logger = logging.getLogger(__name__)

DEVIATION_CELLS = 10


class SdgService:
    """Payoff functional J(a, b), optimal intensity controls and the value identity check."""

    MIN_PATHS = 100

    @staticmethod
    def auxiliary_obstacles(bundle: PayoffBundle, g: RiskFunction, times: np.ndarray, observed: np.ndarray):
        """Ū, L̄ on the grid and ξ̄ at the end of each row; the running integral is taken along the path."""
        r = bundle.r
        shape = observed.shape
        running = np.exp(-r * times)[None, :] * np.broadcast_to(bundle.f(times[None, :], observed), shape)
        accumulated = cumulative_integral(times, running)
        discount = np.exp(-r * times)[None, :]
        growth = np.exp(r * times)[None, :]
        upper = growth * risk_core.g_forward(g, discount * np.broadcast_to(bundle.U(times[None, :], observed), shape) + accumulated)
        lower = growth * risk_core.g_forward(g, discount * np.broadcast_to(bundle.L(times[None, :], observed), shape) + accumulated)
        terminal_raw = math.exp(-r * bundle.T) * np.broadcast_to(bundle.xi(observed[:, -1]), shape[:1])
        terminal = math.exp(r * bundle.T) * risk_core.g_forward(g, terminal_raw + accumulated[:, -1])
        return upper, lower, terminal

    @staticmethod
    def hazard_payoff(
        times: np.ndarray,
        a_rates: np.ndarray,
        b_rates: np.ndarray,
        r: float,
        upper: np.ndarray,
        lower: np.ndarray,
        terminal: np.ndarray,
    ) -> np.ndarray:
        """
        J(a, b) per row with the exact-hazard trapezoid rule.

        On each cell the stopping mass e^{−A_k} − e^{−A_{k+1}} is shared between
        the obstacles in proportion to the averaged rates, so constant payoffs
        integrate to themselves.
        """
        total = a_rates + b_rates + r
        hazard = cumulative_integral(times, total)
        survival = np.exp(-hazard)
        mass = survival[:, :-1] - survival[:, 1:]
        a_avg = 0.5 * (a_rates[:, :-1] + a_rates[:, 1:])
        b_avg = 0.5 * (b_rates[:, :-1] + b_rates[:, 1:])
        upper_avg = 0.5 * (upper[:, :-1] + upper[:, 1:])
        lower_avg = 0.5 * (lower[:, :-1] + lower[:, 1:])
        rate = a_avg + b_avg + r
        weighted = a_avg * upper_avg + b_avg * lower_avg
        with np.errstate(divide="ignore", invalid="ignore"):
            cells = np.where(rate > 0.0, mass * weighted / rate, 0.0)
        return np.sum(cells, axis=1) + survival[:, -1] * terminal

    @classmethod
    def payoff_rows(
        cls,
        bundle: PayoffBundle,
        g: RiskFunction,
        times: np.ndarray,
        observed: np.ndarray,
        a: ControlPolicy,
        b: ControlPolicy,
    ) -> np.ndarray:
        upper, lower, terminal = cls.auxiliary_obstacles(bundle, g, times, observed)
        grid = np.broadcast_to(times[None, :], observed.shape)
        a_rates = np.broadcast_to(a.rate(grid, observed), observed.shape)
        b_rates = np.broadcast_to(b.rate(grid, observed), observed.shape)
        return cls.hazard_payoff(times, a_rates, b_rates, bundle.r, upper, lower, terminal)

    @classmethod
    def sdg_payoff(
        cls,
        bundle: PayoffBundle,
        g: RiskFunction,
        path: StatePath,
        a: ControlPolicy,
        b: ControlPolicy,
    ) -> float:
        """J(a, b) along one path, in g-scale."""
        if not math.isclose(path.end_time, bundle.T) or path.times[0] != 0.0:
            raise ParameterError(f"path must cover [0, {bundle.T}]")
        return float(cls.payoff_rows(bundle, g, path.times, path.states[None, :], a, b)[0])

    @staticmethod
    def optimal_controls(surface: ValueSurface) -> Tuple[ControlPolicy, ControlPolicy]:
        """a* = λ1·1{Q̄ ≥ Ū}, b* = λ2·1{Q̄ ≤ L̄}, compared in raw coordinates."""
        model = surface.model
        bundle = model.bundle

        def upper_active(t, x):
            return surface.q_at(t, x) >= np.broadcast_to(bundle.U(t, x), np.shape(x))

        def lower_active(t, x):
            return surface.q_at(t, x) <= np.broadcast_to(bundle.L(t, x), np.shape(x))

        return (
            ControlPolicy(player=Label.MIN_PLAYER, intensity=model.lambda1, indicator=upper_active, description="optimal"),
            ControlPolicy(player=Label.MAX_PLAYER, intensity=model.lambda2, indicator=lower_active, description="optimal"),
        )

    @staticmethod
    def sample_deviations(model: MarkovModel, seed: int, count: Optional[int] = None) -> List[ControlPolicy]:
        """Random piecewise-constant binary controls, `count` per player."""
        per_player = settings.sdg_deviations if count is None else int(count)
        gen = block_generator(seed, 0, StreamTag.DEVIATION)
        edges = np.linspace(0.0, model.horizon, DEVIATION_CELLS + 1)
        deviations = []
        for player, intensity in ((Label.MIN_PLAYER, model.lambda1), (Label.MAX_PLAYER, model.lambda2)):
            own = [ControlPolicy.constant(player, intensity, False), ControlPolicy.constant(player, intensity, True)]
            while len(own) < per_player:
                flags = gen.integers(0, 2, DEVIATION_CELLS).astype(bool)
                own.append(ControlPolicy.piecewise(player, intensity, edges, flags))
            deviations += own[:per_player]
        return deviations

    @classmethod
    def representation_check(
        cls,
        model: MarkovModel,
        surface: ValueSurface,
        n_paths: int = 20000,
        rng_seed: Optional[int] = None,
        n_steps: Optional[int] = None,
        jobs: int = 1,
        multiplier: Optional[float] = None,
        deviations: Optional[Sequence[ControlPolicy]] = None,
        tolerance: Optional[float] = None,
    ) -> RepresentationReport:
        """
        Compare g⁻¹(E J(a*, b*)) with g⁻¹(Q̄₀) and test the control-deviation inequalities.

        Deterministic models use quadrature along their single path; others use
        Monte Carlo with common random numbers for all controls.
        """
        if surface.model.bundle != model.bundle:
            raise SurfaceMismatchError("value surface was solved for a different payoff bundle")
        k = settings.stderr_multiplier if multiplier is None else float(multiplier)
        seed = settings.default_seed if rng_seed is None else int(rng_seed)
        g = model.g
        a_opt, b_opt = cls.optimal_controls(surface)
        deviations = list(deviations) if deviations is not None else cls.sample_deviations(model, seed)
        pairs = [(dev, b_opt) if dev.player == Label.MIN_PLAYER else (a_opt, dev) for dev in deviations]
        deterministic = model.is_deterministic()

        if deterministic:
            times = surface.times if surface.states is None else np.linspace(0.0, model.horizon, cls._steps(n_steps) + 1)
            samples = cls._evaluate(model, times, Block(0, 0, 1), seed, [(a_opt, b_opt)] + pairs)
        else:
            if n_paths < cls.MIN_PATHS:
                raise ParameterError(f"Monte Carlo estimates need at least {cls.MIN_PATHS} paths")
            times = np.linspace(0.0, model.horizon, cls._steps(n_steps) + 1)
            results = run_blocks(
                lambda block: cls._evaluate(model, times, block, seed, [(a_opt, b_opt)] + pairs), n_paths, jobs
            )
            samples = np.concatenate(results, axis=0)

        optimal = samples[:, 0]
        mean_j = compensated_mean(optimal)
        value_sdg = float(risk_core.g_inverse(g, mean_j))
        value_bsde = float(risk_core.g_inverse(g, surface.initial_qbar))
        scale = max(1.0, abs(value_bsde))
        stderr = 0.0 if deterministic else cls._value_stderr(g, optimal, value_sdg)
        if tolerance is None:
            tolerance = 1e-6 * scale if deterministic else k * stderr
        difference = value_sdg - value_bsde
        slack = 1e-6 * scale if deterministic else 0.0

        results = []
        for i, dev in enumerate(deviations):
            diff = samples[:, i + 1] - optimal
            margin = compensated_mean(diff) if dev.player == Label.MIN_PLAYER else -compensated_mean(diff)
            dev_stderr = 0.0 if deterministic else standard_error(diff)
            results.append(DeviationResult(
                player=dev.player,
                description=dev.description,
                value=float(risk_core.g_inverse(g, compensated_mean(samples[:, i + 1]))),
                margin=margin,
                stderr=dev_stderr,
                passed=margin >= -(k * dev_stderr + slack),
            ))
        passed = abs(difference) <= tolerance and all(res.passed for res in results)
        logger.info(
            f"Representation check ({'quadrature' if deterministic else 'monte_carlo'}): "
            f"SDG {value_sdg:.8g} vs BSDE {value_bsde:.8g}, passed={passed}"
        )
        return RepresentationReport(
            method="quadrature" if deterministic else "monte_carlo",
            value_sdg=value_sdg,
            value_bsde=value_bsde,
            difference=difference,
            stderr=stderr,
            tolerance=tolerance,
            deviations=results,
            passed=passed,
        )

    @staticmethod
    def _steps(n_steps: Optional[int]) -> int:
        return settings.path_steps if n_steps is None else int(n_steps)

    @classmethod
    def _evaluate(cls, model: MarkovModel, times: np.ndarray, block: Block, seed: int, pairs) -> np.ndarray:
        states = euler_paths(model, times, block.count, block_generator(seed, block.index, StreamTag.BROWNIAN))
        observed = model.observable(states)
        out = np.empty((block.count, len(pairs)))
        for j, (a, b) in enumerate(pairs):
            out[:, j] = cls.payoff_rows(model.bundle, model.g, times, observed, a, b)
        return out

    @staticmethod
    def _value_stderr(g: RiskFunction, samples: np.ndarray, value: float) -> float:
        stderr_g = standard_error(samples)
        if stderr_g == 0.0:
            return 0.0
        slope = float(risk_core.g_derivative(g, value))
        if not slope > 0.0:
            raise DegenerateDerivativeError(value)
        return stderr_g / slope


# Create instance for easy import
sdg_service = SdgService()
