"""
Experiment orchestration: load a spec, solve, run the requested checks and
write the result files.
"""
import json
import logging
import os
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # Python 3.10: API-identical backport
    import tomli as tomllib
from typing import Any, Dict, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from app.config import create_output_dirs, settings
from app.core.exceptions import SpecValidationError
from app.models.enums import CheckKind, Label, RiskKind, SolverMode
from app.models.experiment import CheckReport, CheckSpec, ExperimentSpec, RunSummary, SolverBlock
from app.models.risk import PayoffBundle, RiskFunction
from app.models.surface import MarkovModel, RegressionResult, ValueSurface
from app.services.bsde_solver import bsde_solver
from app.services.builtin_service import builtin_service
from app.services.game_engine import game_engine
from app.services.risk_core import risk_core
from app.services.sdg_service import sdg_service
from app.services.signal_service import signal_service
from app.utils.numerics import compensated_mean, sample_variance, standard_error
from app.utils.report_writer import ReportWriter, surface_rows

logger = logging.getLogger(__name__)

SURFACE_CHECKS = {
    CheckKind.SADDLE, CheckKind.RECURSION, CheckKind.MARTINGALE, CheckKind.SDG, CheckKind.COLEHOPF,
    CheckKind.MONOTONE, CheckKind.WIDENING, CheckKind.RISK_APPROXIMATION,
}
ODE_CHECKS = {CheckKind.RECURSION, CheckKind.MARTINGALE}
PDE_CHECKS = {CheckKind.WIDENING}

DEFAULT_GAME_PATHS = 20000
DEFAULT_MARTINGALE_PATHS = 100000
DEFAULT_PATH_RECORDS = 1000


class ExperimentService:
    """Runs one experiment specification end to end."""

    # ------------------------------------------------------------- loading

    @staticmethod
    def parse_text(text: str, fmt: str, source: str = "<spec>") -> Dict[str, Any]:
        try:
            if fmt == "toml":
                return tomllib.loads(text)
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise SpecValidationError(f"{source}:{e.lineno}:{e.colno}: {e.msg}")
        except tomllib.TOMLDecodeError as e:
            raise SpecValidationError(f"{source}: {e}")

    @classmethod
    def load_spec(cls, path: str, seed: Optional[int] = None) -> ExperimentSpec:
        """Read a JSON or TOML spec file; `seed` overrides the solver seed."""
        if not os.path.exists(path):
            raise SpecValidationError(f"spec file not found: {path}")
        fmt = "toml" if path.endswith(".toml") else "json"
        with open(path, "r", encoding="utf-8") as handle:
            raw = cls.parse_text(handle.read(), fmt, source=path)
        return cls.validate_spec(raw, seed=seed, source=path)

    @classmethod
    def validate_spec(cls, raw: Dict[str, Any], seed: Optional[int] = None, source: str = "<spec>") -> ExperimentSpec:
        if not isinstance(raw, dict):
            raise SpecValidationError(f"{source}: top level must be a table/object")
        if seed is not None:
            solver = dict(raw.get("solver") or {})
            solver["seed"] = int(seed)
            raw = {**raw, "solver": solver}
        try:
            spec = ExperimentSpec(**raw)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
            )
            raise SpecValidationError(f"{source}: {problems}")
        cls._check_modes(spec, source)
        cls.build_model(spec)
        return spec

    @staticmethod
    def _check_modes(spec: ExperimentSpec, source: str) -> None:
        mode = spec.solver.mode
        for i, check in enumerate(spec.checks):
            where = f"{source}: checks.{i}.kind"
            if mode == SolverMode.MC and check.kind in SURFACE_CHECKS:
                raise SpecValidationError(f"{where}: '{check.kind.value}' needs a value surface (mode ode or pde)")
            if check.kind in ODE_CHECKS and mode != SolverMode.ODE:
                raise SpecValidationError(f"{where}: '{check.kind.value}' needs mode ode")
            if check.kind in PDE_CHECKS and mode != SolverMode.PDE:
                raise SpecValidationError(f"{where}: '{check.kind.value}' needs mode pde")
            if check.kind == CheckKind.VALUE_MATCH and mode == SolverMode.MC:
                if isinstance(spec.model.x0, list) and len(spec.model.x0) > 1:
                    raise SpecValidationError(f"{where}: value_match in mc mode needs a one-dimensional state")

    @staticmethod
    def build_model(spec: ExperimentSpec) -> MarkovModel:
        block = spec.model
        payoffs = {
            name: builtin_service.build_payoff(ref.name, ref.params, where=f"model.{name}")
            for name, ref in (("f", block.f), ("L", block.L), ("U", block.U), ("xi", block.xi))
        }
        drift, volatility = builtin_service.build_dynamics(
            block.dynamics.name, block.dynamics.params, where="model.dynamics"
        )
        if block.g.kind == RiskKind.EXPONENTIAL.value:
            g = RiskFunction.exponential(block.g.gamma)
        else:
            g = RiskFunction.identity()
        x0 = tuple(block.x0) if isinstance(block.x0, list) else float(block.x0)
        if isinstance(x0, tuple) and len(x0) == 1:
            x0 = x0[0]
        return MarkovModel(
            drift=drift,
            volatility=volatility,
            x0=x0,
            bundle=PayoffBundle(r=block.r, T=block.T, **payoffs),
            g=g,
            lambda1=block.lambda1,
            lambda2=block.lambda2,
            name=spec.name,
        )

    # ------------------------------------------------------------- solving

    @staticmethod
    def solve(model: MarkovModel, solver: SolverBlock, seed: int, jobs: int = 1):
        if solver.mode == SolverMode.ODE:
            return bsde_solver.solve_ode(model, solver.n_t)
        if solver.mode == SolverMode.PDE:
            return bsde_solver.solve_pde(model, solver.n_t, solver.n_x, solver.x_min, solver.x_max)
        return bsde_solver.solve_regression_mc(
            model, solver.n_t, solver.n_paths, basis_degree=solver.basis_degree, rng_seed=seed, jobs=jobs
        )

    @staticmethod
    def _headline(model: MarkovModel, result) -> Tuple[float, float, Optional[float]]:
        if isinstance(result, RegressionResult):
            slope = float(risk_core.g_derivative(model.g, result.q0))
            stderr = result.stderr / slope if result.stderr > 0.0 else 0.0
            return result.q0, result.qbar0, stderr
        return result.initial_value, result.initial_qbar, None

    # -------------------------------------------------------------- checks

    @classmethod
    def run_check(
        cls,
        check: CheckSpec,
        spec: ExperimentSpec,
        model: MarkovModel,
        result,
        seed: int,
        jobs: int = 1,
    ) -> CheckReport:
        check_seed = seed if check.seed is None else check.seed
        logger.info(f"Running check '{check.label}' ({check.kind.value})")
        handler = {
            CheckKind.VALUE_MATCH: cls._value_match,
            CheckKind.SADDLE: cls._saddle,
            CheckKind.RECURSION: cls._recursion,
            CheckKind.MARTINGALE: cls._martingale,
            CheckKind.SDG: cls._sdg,
            CheckKind.COLEHOPF: cls._colehopf,
            CheckKind.MONOTONE: cls._monotone,
            CheckKind.WIDENING: cls._widening,
            CheckKind.RISK_APPROXIMATION: cls._risk_approximation,
            CheckKind.SIGNAL_WAIT: cls._signal_wait,
        }[check.kind]
        try:
            return handler(check, spec, model, result, check_seed, jobs)
        except Exception as e:
            logger.error(f"Check '{check.label}' failed to run: {str(e)}")
            raise

    @staticmethod
    def _multiplier(check: CheckSpec) -> float:
        return settings.stderr_multiplier if check.tolerance is None else check.tolerance

    @classmethod
    def _value_match(cls, check, spec, model, result, seed, jobs) -> CheckReport:
        k = cls._multiplier(check)
        if isinstance(result, RegressionResult):
            reference_block = check.reference or cls._default_reference(spec, model)
            if reference_block.mode == SolverMode.MC:
                raise SpecValidationError("value_match reference must use mode ode or pde")
            reference = cls.solve(model, reference_block, seed).initial_value
            value, _, stderr = cls._headline(model, result)
            difference = value - reference
            slack = 1e-10 * max(1.0, abs(reference))
            return CheckReport(
                kind=check.kind, value=value, reference=reference, margin=abs(difference), stderr=stderr,
                tolerance=k, passed=abs(difference) <= k * stderr + slack,
                details={"method": "regression", "reference_mode": reference_block.mode.value},
            )

        policy1, policy2 = game_engine.optimal_policies(result, model.bundle)
        estimate = game_engine.estimate_value(
            model, policy1, policy2, check.n_paths or DEFAULT_GAME_PATHS, rng_seed=seed,
            n_steps=check.n_steps, jobs=jobs,
        )
        reference = result.initial_value
        difference = estimate.value - reference
        slack = 1e-10 * max(1.0, abs(reference))
        return CheckReport(
            kind=check.kind, value=estimate.value, reference=reference, margin=abs(difference),
            stderr=estimate.stderr_value, tolerance=k,
            passed=abs(difference) <= k * estimate.stderr_value + slack,
            details={"method": "game", "estimate": estimate},
        )

    @staticmethod
    def _default_reference(spec: ExperimentSpec, model: MarkovModel) -> SolverBlock:
        if model.is_deterministic():
            return SolverBlock(mode=SolverMode.ODE, n_t=spec.solver.n_t)
        raise SpecValidationError("value_match in mc mode needs a 'reference' solver block (mode ode or pde)")

    @classmethod
    def _saddle(cls, check, spec, model, surface, seed, jobs) -> CheckReport:
        report = game_engine.saddle_check(
            model, surface, n_paths=check.n_paths or DEFAULT_GAME_PATHS, rng_seed=seed,
            n_steps=check.n_steps, jobs=jobs, multiplier=cls._multiplier(check),
        )
        worst = min(report.deviations, key=lambda dev: dev.margin + report.multiplier * dev.stderr)
        return CheckReport(
            kind=check.kind, value=report.value.value, reference=surface.initial_value, margin=worst.margin,
            stderr=worst.stderr, tolerance=report.multiplier, passed=report.passed, details={"report": report},
        )

    @staticmethod
    def _recursion(check, spec, model, surface, seed, jobs) -> CheckReport:
        scale = max(1.0, float(np.max(np.abs(surface.qbar))))
        tolerance = 1e-6 * scale if check.tolerance is None else check.tolerance
        residuals = {
            ReportWriter.format_float(t): game_engine.recursion_residual(model, surface, t, check.quad_points)
            for t in check.times
        }
        worst = max(abs(v) for v in residuals.values()) if residuals else 0.0
        return CheckReport(
            kind=check.kind, value=worst, reference=0.0, margin=worst, stderr=0.0, tolerance=tolerance,
            passed=worst <= tolerance, details={"residuals": residuals},
        )

    @classmethod
    def _martingale(cls, check, spec, model, surface, seed, jobs) -> CheckReport:
        report = game_engine.martingale_check(
            model, surface, k_max=check.k_max, n_paths=check.n_paths or DEFAULT_MARTINGALE_PATHS,
            rng_seed=seed, jobs=jobs, multiplier=cls._multiplier(check),
        )
        worst = max(report.increments, key=lambda inc: abs(inc.mean) - report.multiplier * inc.stderr)
        return CheckReport(
            kind=check.kind, value=worst.mean, reference=0.0, margin=worst.mean, stderr=worst.stderr,
            tolerance=report.multiplier, passed=report.passed, details={"report": report},
        )

    @classmethod
    def _sdg(cls, check, spec, model, surface, seed, jobs) -> CheckReport:
        deterministic = model.is_deterministic()
        report = sdg_service.representation_check(
            model, surface, n_paths=check.n_paths or DEFAULT_GAME_PATHS, rng_seed=seed, n_steps=check.n_steps,
            jobs=jobs, multiplier=None if deterministic else cls._multiplier(check),
            tolerance=check.tolerance if deterministic else None,
        )
        return CheckReport(
            kind=check.kind, value=report.value_sdg, reference=report.value_bsde, margin=abs(report.difference),
            stderr=report.stderr, tolerance=report.tolerance, passed=report.passed, details={"report": report},
        )

    @staticmethod
    def _colehopf(check, spec, model, surface, seed, jobs) -> CheckReport:
        solver = spec.solver
        grid = dict(n_x=solver.n_x, x_min=solver.x_min, x_max=solver.x_max)
        if model.g.kind == RiskKind.EXPONENTIAL:
            raw = bsde_solver.solve_exponential_quadratic(model, model.g.gamma, solver.mode, solver.n_t, **grid)
            default_tolerance = 2e-4
        else:
            raw = bsde_solver.solve_risk_neutral(model, solver.mode, solver.n_t, **grid)
            default_tolerance = 1e-8
        scale = max(1.0, float(np.max(np.abs(surface.q))))
        tolerance = default_tolerance * scale if check.tolerance is None else check.tolerance
        gap = float(np.max(np.abs(raw.q - surface.q)))
        return CheckReport(
            kind=check.kind, value=raw.initial_value, reference=surface.initial_value, margin=gap, stderr=0.0,
            tolerance=tolerance, passed=gap <= tolerance, details={"max_norm": gap, "raw_form": raw.mode.value},
        )

    @staticmethod
    def _monotone(check, spec, model, surface, seed, jobs) -> CheckReport:
        solver = spec.solver
        report = bsde_solver.monotone_opportunity(
            model, check.intensities, solver.n_t, solver.mode, solver.n_x, solver.x_min, solver.x_max
        )
        drops = np.diff(report.values)
        drop = float(max(0.0, -np.min(drops))) if drops.size else 0.0
        return CheckReport(
            kind=check.kind, value=report.values[-1], reference=report.values[0], margin=drop, stderr=0.0,
            tolerance=check.tolerance, passed=report.nondecreasing and report.nodewise_nondecreasing,
            details={"report": report},
        )

    @staticmethod
    def _widening(check, spec, model, surface, seed, jobs) -> CheckReport:
        solver = spec.solver
        report = bsde_solver.widening_check(model, solver.n_t, solver.n_x, solver.x_min, solver.x_max)
        tolerance = report.tolerance if check.tolerance is None else check.tolerance
        return CheckReport(
            kind=check.kind, value=report.widened_value, reference=report.value, margin=report.change, stderr=0.0,
            tolerance=tolerance, passed=report.change < tolerance, details={"report": report},
        )

    @staticmethod
    def _risk_approximation(check, spec, model, surface, seed, jobs) -> CheckReport:
        """Second-order certainty equivalent against the exact one on realized game payoffs."""
        policy1, policy2 = game_engine.optimal_policies(surface, model.bundle)
        payoffs = game_engine.simulate_payoffs(
            model, policy1, policy2, check.n_paths or DEFAULT_GAME_PATHS, rng_seed=seed,
            n_steps=check.n_steps, jobs=jobs,
        )["payoffs"]
        exact = risk_core.nonlinear_expectation(model.g, payoffs)
        approximation = risk_core.certainty_equivalent_approximation(model.g, payoffs)
        mean = compensated_mean(payoffs)
        error = abs(approximation - exact)
        # the correction must do better than the plain mean
        first_order_gap = abs(exact - mean)
        slack = 1e-12 * max(1.0, abs(exact))
        tolerance = first_order_gap + slack if check.tolerance is None else check.tolerance
        return CheckReport(
            kind=check.kind, value=approximation, reference=exact, margin=error, stderr=None,
            tolerance=tolerance, passed=error <= tolerance,
            details={
                "mean": mean,
                "variance": sample_variance(payoffs),
                "arrow_pratt": risk_core.arrow_pratt(model.g, mean),
                "first_order_gap": first_order_gap,
            },
        )

    @classmethod
    def _signal_wait(cls, check, spec, model, result, seed, jobs) -> CheckReport:
        """Mean wait from fixed times to the next signal against 1/λ for each signalling stream."""
        k = cls._multiplier(check)
        points = [t for t in check.times if 0.0 <= t < model.horizon]
        if not points:
            raise SpecValidationError(f"check '{check.label}' needs at least one time in [0, T)")
        streams = {}
        for label, intensity in ((Label.MIN_PLAYER, model.lambda1), (Label.MAX_PLAYER, model.lambda2)):
            if intensity == 0.0:
                continue
            waits = signal_service.waiting_times(
                intensity, model.horizon, points, check.n_paths or DEFAULT_GAME_PATHS, seed, label, jobs
            )
            per_path = waits.mean(axis=1)
            mean, stderr, reference = compensated_mean(per_path), standard_error(per_path), 1.0 / intensity
            streams[label.name.lower()] = {
                "mean": mean, "stderr": stderr, "reference": reference,
                "passed": abs(mean - reference) <= k * stderr,
            }
        if not streams:
            return CheckReport(kind=check.kind, tolerance=k, passed=True, details={"times": points, "streams": {}})
        worst = max(streams.values(), key=lambda s: abs(s["mean"] - s["reference"]) - k * s["stderr"])
        return CheckReport(
            kind=check.kind, value=worst["mean"], reference=worst["reference"],
            margin=abs(worst["mean"] - worst["reference"]), stderr=worst["stderr"], tolerance=k,
            passed=all(s["passed"] for s in streams.values()), details={"times": points, "streams": streams},
        )

    # ----------------------------------------------------------------- run

    @classmethod
    def run(
        cls,
        spec: ExperimentSpec,
        out_dir: Optional[str] = None,
        jobs: int = 1,
        emit_paths: bool = False,
    ) -> Tuple[RunSummary, Dict[str, CheckReport]]:
        """Solve and check; writes files when an output directory is given."""
        seed = settings.default_seed if spec.solver.seed is None else spec.solver.seed
        model = cls.build_model(spec)
        result = cls.solve(model, spec.solver, seed, jobs)
        value, qbar0, stderr = cls._headline(model, result)

        reports = {}
        for check in spec.checks:
            reports[check.label] = cls.run_check(check, spec, model, result, seed, jobs)

        summary = RunSummary(
            name=spec.name, mode=spec.solver.mode, seed=seed, value=value, qbar0=qbar0, stderr=stderr,
            checks={label: report.model_copy(update={"details": {}}) for label, report in reports.items()},
            passed=all(report.passed for report in reports.values()),
        )
        logger.info(f"Experiment '{spec.name}': Q(0,x0)={value:.10g}, checks passed={summary.passed}")

        directory = out_dir or spec.output.directory
        if directory:
            cls.write_outputs(directory, spec, model, result, summary, reports, seed, jobs,
                              emit_paths or spec.output.emit_paths)
        return summary, reports

    @classmethod
    def write_outputs(cls, directory, spec, model, result, summary, reports, seed, jobs, emit_paths) -> None:
        create_output_dirs(directory)
        ReportWriter.write_json(os.path.join(directory, "summary.json"), summary)
        formats = set(spec.output.formats)
        if "json" in formats:
            for label, report in reports.items():
                ReportWriter.write_json(os.path.join(directory, "checks", f"{label}.json"), report)
        if "csv" not in formats:
            return
        if isinstance(result, ValueSurface):
            ReportWriter.write_csv(
                os.path.join(directory, "surface.csv"),
                ["t", "x", "qbar", "zbar", "q"],
                surface_rows(result.times, result.states, result.qbar, result.zbar, result.q),
            )
        cap = model.horizon
        stream1 = signal_service.sample_stream(model.lambda1, cap, seed, Label.MIN_PLAYER)
        stream2 = signal_service.sample_stream(model.lambda2, cap, seed, Label.MAX_PLAYER)
        signal_service.write_streams_csv(os.path.join(directory, "streams.csv"), stream1, stream2)
        if emit_paths and isinstance(result, ValueSurface):
            policy1, policy2 = game_engine.optimal_policies(result, model.bundle)
            simulated = game_engine.simulate_payoffs(
                model, policy1, policy2, DEFAULT_PATH_RECORDS, rng_seed=seed, jobs=jobs, keep_records=True
            )
            ReportWriter.write_csv(
                os.path.join(directory, "paths.csv"),
                ["path", "seed_block", "sigma", "tau", "regime", "payoff"],
                [[rec.path, rec.block, rec.sigma, rec.tau, rec.regime, rec.payoff] for rec in simulated["records"]],
            )
        elif emit_paths:
            logger.warning("Per-path output needs a value surface; skipping paths.csv in mc mode")


# Create instance for easy import
experiment_service = ExperimentService()
