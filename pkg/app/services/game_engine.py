"""
Pathwise realization of the signal-constrained stopping game.

Simulation runs in fixed-size path blocks. Each block draws its Brownian
increments and both signal streams from generators seeded by (master seed,
block index, source tag), so estimates do not depend on the worker count.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import settings
from app.core.exceptions import (
    DegenerateDerivativeError,
    DomainViolationError,
    DynkinError,
    ModeError,
    ParameterError,
    RangeError,
    SurfaceMismatchError,
)
from app.models.enums import Label, PolicyRule, Regime
from app.models.game import (
    DeviationResult,
    GameRealization,
    IncrementResult,
    MartingaleReport,
    McEstimate,
    PathRecord,
    SaddleReport,
    StoppingPolicy,
)
from app.models.risk import PayoffBundle, RiskFunction, StatePath
from app.models.signals import SENTINEL_TIME, SignalStream
from app.models.surface import MarkovModel, ValueSurface
from app.services.risk_core import risk_core
from app.services.signal_service import signal_service
from app.utils.numerics import composite_gauss_legendre, compensated_mean, standard_error, trapezoid_until
from app.utils.rng import Block, StreamTag, block_generator
from app.utils.simulation import euler_paths, run_blocks

logger = logging.getLogger(__name__)

_REGIME_CODES = (Regime.TERMINAL, Regime.LOWER, Regime.UPPER)


def interp_rows(times: np.ndarray, values: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Row-wise linear interpolation of values (n, m) on `times` at t (n,), clamped to the grid."""
    t = np.clip(np.asarray(t, dtype=float), times[0], times[-1])
    k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2)
    w = (t - times[k]) / (times[k + 1] - times[k])
    rows = np.arange(values.shape[0])
    return (1.0 - w) * values[rows, k] + w * values[rows, k + 1]


class GameEngine:
    """Monte Carlo engine and verification checks for the game."""

    MIN_PATHS = 100

    # ------------------------------------------------------------- payoffs

    @staticmethod
    def classify_regime(sigma: float, tau: float, horizon: float) -> Regime:
        if min(sigma, tau) >= horizon:
            return Regime.TERMINAL
        if tau <= sigma:
            return Regime.LOWER
        return Regime.UPPER

    @classmethod
    def payoffs(
        cls,
        bundle: PayoffBundle,
        times: np.ndarray,
        observed: np.ndarray,
        sigma: np.ndarray,
        tau: np.ndarray,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Realized payoffs of many paths and their regime codes.

        Codes index (terminal, lower, upper); exactly one regime holds per path.
        """
        r, horizon = bundle.r, bundle.T
        first = np.minimum(sigma, tau)
        terminal = first >= horizon
        lower = ~terminal & (tau <= sigma)
        upper = ~terminal & (sigma < tau)
        if np.any(terminal.astype(int) + lower.astype(int) + upper.astype(int) != 1):
            raise DynkinError("payoff regimes do not partition the paths")

        stop = np.minimum(first, horizon)
        x_stop = interp_rows(times, observed, stop)
        shape = observed.shape
        integrand = np.exp(-r * times)[None, :] * np.broadcast_to(bundle.f(times[None, :], observed), shape)
        at_stop = np.exp(-r * stop) * np.broadcast_to(bundle.f(stop, x_stop), stop.shape)
        running = trapezoid_until(times, integrand, stop, at_stop)

        discount = np.exp(-r * stop)
        terminal_pay = math.exp(-r * horizon) * np.broadcast_to(bundle.xi(observed[:, -1]), stop.shape)
        lower_pay = discount * np.broadcast_to(bundle.L(stop, x_stop), stop.shape)
        upper_pay = discount * np.broadcast_to(bundle.U(stop, x_stop), stop.shape)
        payoff = (
            running
            + np.where(terminal, terminal_pay, 0.0)
            + np.where(lower, lower_pay, 0.0)
            + np.where(upper, upper_pay, 0.0)
        )
        codes = np.where(terminal, 0, np.where(lower, 1, 2))
        return payoff, codes

    @classmethod
    def realized_payoff(cls, bundle: PayoffBundle, path: StatePath, sigma: float, tau: float) -> float:
        """Payoff of one path for the stopping pair (σ, τ)."""
        payoff, _ = cls.payoffs(
            bundle, path.times, path.states[None, :], np.array([float(sigma)]), np.array([float(tau)])
        )
        return float(payoff[0])

    # ------------------------------------------------------------ policies

    @classmethod
    def execute(
        cls,
        policy: StoppingPolicy,
        bundle: PayoffBundle,
        arrivals: np.ndarray,
        cap_column: np.ndarray,
        times: np.ndarray,
        observed: np.ndarray,
        start: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """
        Stopping times of `policy` on each row of an arrival matrix.

        Decisions are taken only at own arrivals not after the horizon; the first
        arrival after the horizon is a forced stop. With `start`, a row only stops
        at arrivals at or after its start time and fixed indices count from there.
        """
        n, columns = arrivals.shape
        stop = np.full(n, SENTINEL_TIME)
        decided = np.zeros(n, dtype=bool)
        seen = np.zeros(n, dtype=int)
        for j in range(columns):
            live = ~decided
            if not live.any():
                break
            t_j = arrivals[:, j]
            eligible = live & (j < cap_column)
            if start is not None:
                eligible &= t_j >= start
            seen += eligible
            fire = np.zeros(n, dtype=bool)
            if policy.rule == PolicyRule.FIXED_INDEX:
                fire = eligible & (seen == policy.index)
            elif policy.rule == PolicyRule.THRESHOLD:
                rows = np.flatnonzero(eligible)
                if rows.size:
                    fire[rows] = cls._threshold_hit(policy, bundle, t_j[rows], interp_rows(times, observed[rows], t_j[rows]))
            take = fire | (live & (j == cap_column))
            stop[take] = t_j[take]
            decided |= take
        return stop

    @staticmethod
    def _threshold_hit(policy: StoppingPolicy, bundle: PayoffBundle, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        q = policy.surface.q_at(t, x)
        if policy.player == Label.MIN_PLAYER:
            return q >= np.broadcast_to(bundle.U(t, x), t.shape) + policy.offset
        return q <= np.broadcast_to(bundle.L(t, x), t.shape) + policy.offset

    @classmethod
    def execute_policy(cls, policy: StoppingPolicy, bundle: PayoffBundle, stream: SignalStream, path: StatePath) -> float:
        """Stopping time of `policy` on a single stream and path."""
        cap = signal_service.m_index(stream, bundle.T) - 1
        stop = cls.execute(
            policy, bundle, stream.arrivals[None, :], np.array([cap]), path.times, path.states[None, :]
        )
        return float(stop[0])

    @staticmethod
    def optimal_policies(surface: ValueSurface, bundle: PayoffBundle) -> Tuple[StoppingPolicy, StoppingPolicy]:
        """Threshold strategies: the min player stops when Q ≥ U, the max player when Q ≤ L."""
        if surface.model.bundle != bundle:
            raise SurfaceMismatchError("value surface was solved for a different payoff bundle")
        if not math.isclose(surface.times[-1], bundle.T):
            raise SurfaceMismatchError("value surface does not cover the game horizon")
        return (
            StoppingPolicy.threshold(Label.MIN_PLAYER, surface),
            StoppingPolicy.threshold(Label.MAX_PLAYER, surface),
        )

    def play(
        self,
        model: MarkovModel,
        policy1: StoppingPolicy,
        policy2: StoppingPolicy,
        path: StatePath,
        stream1: SignalStream,
        stream2: SignalStream,
    ) -> GameRealization:
        """Run both policies on given streams and path."""
        sigma = self.execute_policy(policy1, model.bundle, stream1, path)
        tau = self.execute_policy(policy2, model.bundle, stream2, path)
        return GameRealization(
            path=path,
            stream1=stream1,
            stream2=stream2,
            merged=signal_service.merge(stream1, stream2),
            sigma=sigma,
            tau=tau,
            regime=self.classify_regime(sigma, tau, model.bundle.T),
            payoff=self.realized_payoff(model.bundle, path, sigma, tau),
        )

    # ---------------------------------------------------------- estimation

    @staticmethod
    def summarize(g: RiskFunction, samples: np.ndarray) -> McEstimate:
        """Nonlinear-expectation estimate with delta-method standard error."""
        transformed = np.asarray(risk_core.g_forward(g, samples), dtype=float)
        mean_g = compensated_mean(transformed)
        value = float(risk_core.g_inverse(g, mean_g))
        stderr_g = standard_error(transformed)
        if stderr_g == 0.0:
            stderr_value = 0.0
        else:
            slope = float(risk_core.g_derivative(g, value))
            if not slope > 0.0 or not math.isfinite(slope):
                raise DegenerateDerivativeError(value)
            stderr_value = stderr_g / abs(slope)
        return McEstimate(
            n=transformed.size, mean_g=mean_g, value=value, stderr_mean_g=stderr_g, stderr_value=stderr_value
        )

    @classmethod
    def simulate_payoffs(
        cls,
        model: MarkovModel,
        policy1: StoppingPolicy,
        policy2: StoppingPolicy,
        n_paths: int,
        rng_seed: Optional[int] = None,
        n_steps: Optional[int] = None,
        jobs: int = 1,
        extra_pairs: Sequence[Tuple[StoppingPolicy, StoppingPolicy]] = (),
        keep_records: bool = False,
    ) -> Dict[str, object]:
        """
        Realized payoffs of the main policy pair and of any extra pairs on common paths.

        Returns "payoffs" (n_paths,), "extra" (n_paths, len(extra_pairs)) and,
        when requested, per-path "records".
        """
        if n_paths < cls.MIN_PATHS:
            raise ParameterError(f"Monte Carlo estimates need at least {cls.MIN_PATHS} paths")
        for first, second in [(policy1, policy2), *extra_pairs]:
            cls._check_pair(model, first, second)
        seed = settings.default_seed if rng_seed is None else int(rng_seed)
        steps = settings.path_steps if n_steps is None else int(n_steps)
        times = np.linspace(0.0, model.horizon, steps + 1)
        bundle = model.bundle

        def task(block: Block):
            observed, arrivals1, cap1, arrivals2, cap2 = cls._simulate_block(model, times, block, seed)
            sigma = cls.execute(policy1, bundle, arrivals1, cap1, times, observed)
            tau = cls.execute(policy2, bundle, arrivals2, cap2, times, observed)
            cls._assert_feasible(sigma, arrivals1, cap1)
            cls._assert_feasible(tau, arrivals2, cap2)
            payoff, codes = cls.payoffs(bundle, times, observed, sigma, tau)
            extra = np.empty((block.count, len(extra_pairs)))
            for i, (first, second) in enumerate(extra_pairs):
                s = sigma if first is policy1 else cls.execute(first, bundle, arrivals1, cap1, times, observed)
                u = tau if second is policy2 else cls.execute(second, bundle, arrivals2, cap2, times, observed)
                extra[:, i] = cls.payoffs(bundle, times, observed, s, u)[0]
            records = None
            if keep_records:
                records = [
                    PathRecord(path=block.start + i, block=block.index, sigma=float(sigma[i]), tau=float(tau[i]),
                               regime=_REGIME_CODES[int(codes[i])], payoff=float(payoff[i]))
                    for i in range(block.count)
                ]
            return payoff, extra, records

        results = run_blocks(task, n_paths, jobs)
        payoffs = np.concatenate([res[0] for res in results])
        extra = np.concatenate([res[1] for res in results], axis=0)
        records = [rec for res in results for rec in (res[2] or [])]
        return {"payoffs": payoffs, "extra": extra, "records": records, "seed": seed}

    @classmethod
    def estimate_value(
        cls,
        model: MarkovModel,
        policy1: StoppingPolicy,
        policy2: StoppingPolicy,
        n_paths: int,
        rng_seed: Optional[int] = None,
        n_steps: Optional[int] = None,
        jobs: int = 1,
    ) -> McEstimate:
        """g⁻¹ of the mean g-payoff over independent (path, signals) samples."""
        simulated = cls.simulate_payoffs(model, policy1, policy2, n_paths, rng_seed, n_steps, jobs)
        estimate = cls._summarize_payoffs(model.g, simulated["payoffs"], simulated["seed"])
        logger.info(
            f"Game estimate ({policy1.label} vs {policy2.label}): {estimate.value:.8g} "
            f"+/- {estimate.stderr_value:.3g} over {n_paths} paths"
        )
        return estimate

    @classmethod
    def _summarize_payoffs(cls, g: RiskFunction, payoffs: np.ndarray, seed: int) -> McEstimate:
        try:
            return cls.summarize(g, payoffs)
        except DomainViolationError as exc:
            lo, hi = g.interval
            outside = np.flatnonzero((payoffs < lo) | (payoffs > hi))
            bad = int(outside[0]) if outside.size else -1
            block = bad // settings.path_block_size if bad >= 0 else -1
            logger.error(f"Risk function domain violation on path {bad}")
            raise DomainViolationError(
                exc.value, exc.interval, context=f"path {bad}, block {block}, master seed {seed}"
            ) from exc

    @staticmethod
    def _check_pair(model: MarkovModel, policy1: StoppingPolicy, policy2: StoppingPolicy) -> None:
        if policy1.player != Label.MIN_PLAYER or policy2.player != Label.MAX_PLAYER:
            raise ParameterError("policy1 must belong to player 1 and policy2 to player 2")
        for policy in (policy1, policy2):
            if policy.surface is not None and policy.surface.model.bundle != model.bundle:
                raise SurfaceMismatchError("policy surface was solved for a different payoff bundle")

    @staticmethod
    def _simulate_block(model: MarkovModel, times: np.ndarray, block: Block, seed: int):
        states = euler_paths(model, times, block.count, block_generator(seed, block.index, StreamTag.BROWNIAN))
        observed = model.observable(states)
        arrivals1, cap1 = signal_service.sample_arrival_matrix(
            model.lambda1, model.horizon, block_generator(seed, block.index, StreamTag.SIGNAL_MIN), block.count
        )
        arrivals2, cap2 = signal_service.sample_arrival_matrix(
            model.lambda2, model.horizon, block_generator(seed, block.index, StreamTag.SIGNAL_MAX), block.count
        )
        return observed, arrivals1, cap1, arrivals2, cap2

    @staticmethod
    def _assert_feasible(stop: np.ndarray, arrivals: np.ndarray, cap_column: np.ndarray) -> None:
        rows = np.arange(stop.size)
        own = np.any(arrivals == stop[:, None], axis=1)
        capped = stop <= arrivals[rows, cap_column]
        if not (np.all(own) and np.all(capped)):
            raise DynkinError("a stopping time left the player's own arrivals or passed the cap")

    # ------------------------------------------------------- saddle check

    @staticmethod
    def sample_deviations(surface: ValueSurface, count: Optional[int] = None) -> List[StoppingPolicy]:
        """Markovian deviations per player: never, fixed arrival indices and shifted thresholds."""
        per_player = settings.saddle_deviations if count is None else int(count)
        scale = max(abs(surface.initial_value), 0.1)
        deviations = []
        for player in (Label.MIN_PLAYER, Label.MAX_PLAYER):
            candidates = [StoppingPolicy.never(player)]
            candidates += [StoppingPolicy.fixed_index(player, k) for k in (1, 2, 3)]
            candidates += [
                StoppingPolicy.threshold(player, surface, offset=factor * scale)
                for factor in (-0.5, -0.2, -0.05, 0.05, 0.2, 0.5)
            ]
            extra_index = 4
            while len(candidates) < per_player:
                candidates.append(StoppingPolicy.fixed_index(player, extra_index))
                extra_index += 1
            deviations += candidates[:per_player]
        return deviations

    @classmethod
    def saddle_check(
        cls,
        model: MarkovModel,
        surface: ValueSurface,
        deviations: Optional[Sequence[StoppingPolicy]] = None,
        n_paths: int = 10000,
        rng_seed: Optional[int] = None,
        n_steps: Optional[int] = None,
        jobs: int = 1,
        multiplier: Optional[float] = None,
    ) -> SaddleReport:
        """
        J(σ*, τ) ≤ J(σ*, τ*) ≤ J(σ, τ*) on common random numbers.

        A margin passes when it is at least −k times the paired standard error of
        the linearized value difference.
        """
        k = settings.stderr_multiplier if multiplier is None else float(multiplier)
        policy1, policy2 = cls.optimal_policies(surface, model.bundle)
        deviations = list(deviations) if deviations is not None else cls.sample_deviations(surface)
        pairs = [(dev, policy2) if dev.player == Label.MIN_PLAYER else (policy1, dev) for dev in deviations]

        simulated = cls.simulate_payoffs(model, policy1, policy2, n_paths, rng_seed, n_steps, jobs, extra_pairs=pairs)
        g = model.g
        optimal = cls._summarize_payoffs(g, simulated["payoffs"], simulated["seed"])
        weighted_opt = cls._linearized(g, simulated["payoffs"], optimal.value)

        results = []
        for i, dev in enumerate(deviations):
            dev_payoffs = simulated["extra"][:, i]
            estimate = cls._summarize_payoffs(g, dev_payoffs, simulated["seed"])
            stderr = standard_error(cls._linearized(g, dev_payoffs, estimate.value) - weighted_opt)
            if dev.player == Label.MAX_PLAYER:
                margin = optimal.value - estimate.value
            else:
                margin = estimate.value - optimal.value
            results.append(DeviationResult(
                player=dev.player, description=dev.label, value=estimate.value, margin=margin, stderr=stderr,
                passed=margin >= -k * stderr,
            ))
        passed = all(res.passed for res in results)
        logger.info(f"Saddle check: J*={optimal.value:.8g}, {len(results)} deviations, passed={passed}")
        return SaddleReport(value=optimal, multiplier=k, deviations=results, passed=passed)

    @staticmethod
    def _linearized(g: RiskFunction, payoffs: np.ndarray, value: float) -> np.ndarray:
        slope = float(risk_core.g_derivative(g, value))
        if not slope > 0.0:
            raise DegenerateDerivativeError(value)
        return np.asarray(risk_core.g_forward(g, payoffs), dtype=float) / slope

    # ------------------------------------------- dynamic-programming checks

    @staticmethod
    def _g_scale(surface: ValueSurface):
        """g-transformed discounted quantities along time for a deterministic surface."""
        model = surface.model
        bundle, g, r = model.bundle, model.g, model.bundle.r
        x0 = model.initial_observable

        def accumulated(t):
            return np.interp(t, surface.times, surface.accumulated)

        def g_value(t):
            return np.exp(-r * t) * surface.qbar_at(t, np.full_like(np.asarray(t, dtype=float), x0))

        def g_upper(t):
            t = np.asarray(t, dtype=float)
            raw = np.broadcast_to(bundle.U(t, np.full_like(t, x0)), t.shape)
            return risk_core.g_forward(g, np.exp(-r * t) * raw + accumulated(t))

        def g_lower(t):
            t = np.asarray(t, dtype=float)
            raw = np.broadcast_to(bundle.L(t, np.full_like(t, x0)), t.shape)
            return risk_core.g_forward(g, np.exp(-r * t) * raw + accumulated(t))

        terminal = float(np.broadcast_to(bundle.xi(np.array([x0])), (1,))[0])
        g_terminal = float(risk_core.g_forward(g, math.exp(-r * bundle.T) * terminal + surface.accumulated[-1]))
        return g_value, g_upper, g_lower, g_terminal

    @classmethod
    def qhat(cls, surface: ValueSurface, theta, label, x: Optional[float] = None):
        """
        Q̂ at merged events: ξ̃ at or after the horizon, min(Ũ, Q̃) at a min-player
        signal and max(L̃, Q̃) at a max-player signal, with Q̃ = g⁻¹(e^{−rθ}·Q̄_θ).

        `theta` and `label` broadcast against each other; scalars give a float.
        """
        if surface.coordinates != "auxiliary":
            raise SurfaceMismatchError("Q-hat needs a surface of the auxiliary equation")
        model = surface.model
        bundle, g, r = model.bundle, model.g, model.bundle.r
        x = model.initial_observable if x is None else float(x)
        horizon = bundle.T

        theta, label = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(label, dtype=int))
        if not np.all(np.isin(label, [int(Label.MIN_PLAYER), int(Label.MAX_PLAYER)])):
            raise ParameterError("signal labels must be 1 (min player) or 2 (max player)")
        clipped = np.minimum(theta, horizon)
        states = np.full_like(clipped, x)
        discount = np.exp(-r * clipped)
        accumulated = np.interp(clipped, surface.times, surface.accumulated)

        q_tilde = risk_core.g_inverse(g, discount * np.reshape(surface.qbar_at(clipped, states), clipped.shape))
        upper = discount * np.broadcast_to(bundle.U(clipped, states), clipped.shape) + accumulated
        lower = discount * np.broadcast_to(bundle.L(clipped, states), clipped.shape) + accumulated
        terminal = math.exp(-r * horizon) * float(np.broadcast_to(bundle.xi(np.array([x])), (1,))[0]) + float(
            surface.accumulated[-1]
        )
        out = np.where(label == int(Label.MIN_PLAYER), np.minimum(upper, q_tilde), np.maximum(lower, q_tilde))
        out = np.where(theta >= horizon, terminal, out)
        return float(out) if out.ndim == 0 else out

    @classmethod
    def recursion_residual(
        cls,
        model: MarkovModel,
        surface: ValueSurface,
        t: float,
        quad_points: int = 64,
        panels: int = 64,
    ) -> float:
        """
        One-step dynamic-programming identity at time t, in g-scale.

        Right side: e^{−Λ(T−t)}·g(ξ̃) + ∫ₜᵀ e^{−Λ(s−t)}·[λ1·g(min(Ũ, Q̃)) + λ2·g(max(L̃, Q̃))] ds
        with Λ = λ1 + λ2; the residual is the right side minus g(Q̃_t).
        """
        cls._require_deterministic_surface(model, surface)
        horizon = model.horizon
        if t < 0.0 or t >= horizon:
            raise RangeError(f"recursion residual needs 0 <= t < T, got t={t!r}")
        lam1, lam2 = model.lambda1, model.lambda2
        total = lam1 + lam2
        g_value, g_upper, g_lower, g_terminal = cls._g_scale(surface)

        def integrand(s):
            value = g_value(s)
            weight = np.exp(-total * (s - t))
            return weight * (lam1 * np.minimum(g_upper(s), value) + lam2 * np.maximum(g_lower(s), value))

        right = math.exp(-total * (horizon - t)) * g_terminal
        if total > 0.0:
            right += composite_gauss_legendre(integrand, t, horizon, quad_points, panels)
        return right - float(g_value(t))

    @classmethod
    def martingale_check(
        cls,
        model: MarkovModel,
        surface: ValueSurface,
        k_max: int = 4,
        n_paths: int = 100000,
        rng_seed: Optional[int] = None,
        jobs: int = 1,
        multiplier: Optional[float] = None,
    ) -> MartingaleReport:
        """
        Increments of g(Q̂) stopped at σ∧τ along merged signal events.

        The mean increment is zero under the optimal pair, nonpositive when the
        max player deviates and nonnegative when the min player deviates. The
        state is frozen, so only the signal randomness is sampled.
        """
        cls._require_deterministic_surface(model, surface)
        if k_max < 1:
            raise ParameterError("k_max must be >= 1")
        if n_paths < cls.MIN_PATHS:
            raise ParameterError(f"Monte Carlo estimates need at least {cls.MIN_PATHS} paths")
        k = settings.stderr_multiplier if multiplier is None else float(multiplier)
        seed = settings.default_seed if rng_seed is None else int(rng_seed)
        policy1, policy2 = cls.optimal_policies(surface, model.bundle)
        cases = [
            ("martingale", "optimal", policy1, policy2),
            ("supermartingale", "max player never", policy1, StoppingPolicy.never(Label.MAX_PLAYER)),
            ("supermartingale", "max player fixed_index(1)", policy1, StoppingPolicy.fixed_index(Label.MAX_PLAYER, 1)),
            ("submartingale", "min player never", StoppingPolicy.never(Label.MIN_PLAYER), policy2),
            ("submartingale", "min player fixed_index(1)", StoppingPolicy.fixed_index(Label.MIN_PLAYER, 1), policy2),
        ]
        horizon = model.horizon
        g_terminal = float(risk_core.g_forward(model.g, cls.qhat(surface, horizon, Label.MIN_PLAYER)))
        times = np.array([0.0, horizon])
        x0 = model.initial_observable

        def task(block: Block):
            arrivals1, cap1 = signal_service.sample_arrival_matrix(
                model.lambda1, horizon, block_generator(seed, block.index, StreamTag.SIGNAL_MIN), block.count
            )
            arrivals2, cap2 = signal_service.sample_arrival_matrix(
                model.lambda2, horizon, block_generator(seed, block.index, StreamTag.SIGNAL_MAX), block.count
            )
            observed = np.full((block.count, 2), x0)
            theta, labels = cls._merged_events(arrivals1, arrivals2, k_max + 1)
            q_hat = np.asarray(risk_core.g_forward(model.g, cls.qhat(surface, theta, labels)), dtype=float)
            out = []
            for _, _, first, second in cases:
                sigma = cls.execute(first, model.bundle, arrivals1, cap1, times, observed, start=theta[:, 0])
                tau = cls.execute(second, model.bundle, arrivals2, cap2, times, observed, start=theta[:, 0])
                stopped = cls._stopped(q_hat, theta, labels, sigma, tau)
                out.append(np.diff(stopped, axis=1))
            return out

        results = run_blocks(task, n_paths, jobs)
        increments = []
        scale = max(1.0, abs(g_terminal))
        for c, (kind, description, _, _) in enumerate(cases):
            diffs = np.concatenate([res[c] for res in results], axis=0)
            for m in range(k_max):
                mean = compensated_mean(diffs[:, m])
                stderr = standard_error(diffs[:, m])
                slack = k * stderr + 1e-12 * scale
                if kind == "martingale":
                    passed = abs(mean) <= slack
                elif kind == "supermartingale":
                    passed = mean <= slack
                else:
                    passed = mean >= -slack
                increments.append(IncrementResult(
                    kind=kind, deviation=description, step=m + 1, mean=mean, stderr=stderr, passed=passed
                ))
        passed = all(inc.passed for inc in increments)
        logger.info(f"Martingale check: {len(increments)} increments over {n_paths} samples, passed={passed}")
        return MartingaleReport(n_paths=n_paths, k_max=k_max, multiplier=k, increments=increments, passed=passed)

    @staticmethod
    def _merged_events(arrivals1: np.ndarray, arrivals2: np.ndarray, count: int) -> Tuple[np.ndarray, np.ndarray]:
        """First `count` merged events per row; the max player's signal sorts first on ties."""
        n = arrivals1.shape[0]
        times = np.hstack([arrivals1, arrivals2])
        labels = np.hstack([
            np.full(arrivals1.shape, int(Label.MIN_PLAYER)),
            np.full(arrivals2.shape, int(Label.MAX_PLAYER)),
        ])
        if times.shape[1] < count:
            pad = count - times.shape[1]
            times = np.hstack([times, np.full((n, pad), SENTINEL_TIME)])
            labels = np.hstack([labels, np.full((n, pad), int(Label.MIN_PLAYER))])
        order = np.lexsort(((labels != int(Label.MAX_PLAYER)).astype(int), times), axis=-1)
        times = np.take_along_axis(times, order, axis=1)[:, :count]
        labels = np.take_along_axis(labels, order, axis=1)[:, :count]
        return times, labels

    @staticmethod
    def _stopped(q_hat, theta, labels, sigma, tau) -> np.ndarray:
        """Freeze each row at the merged event where σ or τ fires."""
        n, count = theta.shape
        real = theta < SENTINEL_TIME
        hit = real & (
            ((labels == int(Label.MIN_PLAYER)) & (theta == sigma[:, None]))
            | ((labels == int(Label.MAX_PLAYER)) & (theta == tau[:, None]))
        )
        first_hit = np.where(hit.any(axis=1), np.argmax(hit, axis=1), count - 1)
        columns = np.minimum(np.arange(count)[None, :], first_hit[:, None])
        return np.take_along_axis(q_hat, columns, axis=1)

    @staticmethod
    def _require_deterministic_surface(model: MarkovModel, surface: ValueSurface) -> None:
        if surface.states is not None or surface.coordinates != "auxiliary":
            raise ModeError("this check needs an ODE surface of the auxiliary equation")
        if surface.model.bundle != model.bundle:
            raise SurfaceMismatchError("value surface was solved for a different payoff bundle")


# Create instance for easy import
game_engine = GameEngine()
