"""
Test cases for experiment specs, the experiment service and the command line.
"""
import json

import pytest

from app.cli import EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE, main
from app.core.exceptions import SpecValidationError
from app.models.enums import CheckKind
from app.services.experiment_service import experiment_service


def constant_spec(**overrides):
    """L = U = ξ ≡ 1 with every check kind an ODE surface supports."""
    spec = {
        "schema_version": "1.0",
        "name": "constant",
        "model": {
            "dynamics": {"name": "arithmetic", "params": {"mu": 0.0, "sigma": 0.0}},
            "x0": 1.0,
            "r": 0.0,
            "lambda1": 2.0,
            "lambda2": 3.0,
            "T": 1.0,
            "L": {"name": "constant", "params": {"value": 1.0}},
            "U": {"name": "constant", "params": {"value": 1.0}},
            "xi": {"name": "constant", "params": {"value": 1.0}},
        },
        "solver": {"mode": "ode", "n_t": 200, "seed": 42},
        "checks": [
            {"kind": "value_match", "n_paths": 1000},
            {"kind": "saddle", "n_paths": 1000},
            {"kind": "recursion"},
            {"kind": "martingale", "n_paths": 1000},
            {"kind": "sdg"},
            {"kind": "colehopf"},
            {"kind": "monotone"},
            {"kind": "risk_approximation", "n_paths": 1000},
            {"kind": "signal_wait", "n_paths": 1000, "tolerance": 4.0},
        ],
    }
    spec.update(overrides)
    return spec


def deterministic_spec(**overrides):
    """Constant payoffs with ξ above U and a running payoff."""
    spec = constant_spec(name="deterministic")
    spec["model"].update({
        "r": 0.05,
        "lambda1": 1.0,
        "lambda2": 2.0,
        "f": {"name": "constant", "params": {"value": 0.1}},
        "L": {"name": "constant", "params": {"value": 0.8}},
        "U": {"name": "constant", "params": {"value": 1.2}},
        "xi": {"name": "constant", "params": {"value": 1.5}},
    })
    spec["checks"] = [{"kind": "value_match", "n_paths": 2000}]
    spec.update(overrides)
    return spec


def geometric_spec(**overrides):
    """Geometric diffusion with option-style obstacles on a coarse grid."""
    spec = constant_spec(
        name="geometric",
        solver={"mode": "pde", "n_t": 400, "n_x": 60, "x_min": 0.0, "x_max": 3.0, "seed": 1},
        checks=[{"kind": "widening"}],
    )
    spec["model"].update({
        "dynamics": {"name": "geometric", "params": {"mu": 0.05, "sigma": 0.2}},
        "r": 0.05,
        "lambda1": 1.0,
        "lambda2": 2.0,
        "L": {"name": "call", "params": {"strike": 1.1}},
        "U": {"name": "call", "params": {"strike": 0.9, "scale": 1.2, "shift": 0.1}},
        "xi": {"name": "call", "params": {"strike": 1.0}},
    })
    spec.update(overrides)
    return spec


def write_spec(tmp_path, spec, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(spec), encoding="utf-8")
    return str(path)


class TestSpecValidation:
    """Test spec parsing and validation errors."""

    def test_valid_spec(self):
        """Test a complete spec validates."""
        spec = experiment_service.validate_spec(constant_spec())
        assert [check.kind for check in spec.checks] == [kind for kind in CheckKind if kind != CheckKind.WIDENING]

    def test_unknown_builtin_suggests_nearest(self):
        """Test a misspelled payoff name names the closest built-in."""
        raw = constant_spec()
        raw["model"]["L"] = {"name": "constnat", "params": {"value": 1.0}}
        with pytest.raises(SpecValidationError, match="did you mean 'constant'"):
            experiment_service.validate_spec(raw)

    def test_bad_builtin_params(self):
        """Test built-in parameters are validated against their schema."""
        raw = constant_spec()
        raw["model"]["dynamics"] = {"name": "geometric", "params": {"mu": 0.0, "sigma": -1.0}}
        with pytest.raises(SpecValidationError, match="model.dynamics"):
            experiment_service.validate_spec(raw)

    def test_schema_version(self):
        """Test an unsupported schema version is refused."""
        with pytest.raises(SpecValidationError, match="schema_version"):
            experiment_service.validate_spec(constant_spec(schema_version="2.0"))

    def test_unknown_field(self):
        """Test unknown keys are refused."""
        with pytest.raises(SpecValidationError, match="colour"):
            experiment_service.validate_spec(constant_spec(colour="blue"))

    def test_mc_checks_need_seed(self):
        """Test Monte Carlo checks without any seed are refused."""
        raw = constant_spec(solver={"mode": "ode", "n_t": 200})
        with pytest.raises(SpecValidationError, match="needs a seed"):
            experiment_service.validate_spec(raw)
        assert experiment_service.validate_spec(raw, seed=5).solver.seed == 5

    def test_duplicate_check_names(self):
        """Test two checks with the same label are refused."""
        raw = constant_spec(checks=[{"kind": "recursion"}, {"kind": "recursion"}])
        with pytest.raises(SpecValidationError, match="duplicate"):
            experiment_service.validate_spec(raw)

    def test_mode_constraints(self):
        """Test checks that need a surface or an ODE surface are refused in other modes."""
        raw = constant_spec(solver={"mode": "mc", "n_t": 20, "seed": 1}, checks=[{"kind": "saddle"}])
        with pytest.raises(SpecValidationError, match="needs a value surface"):
            experiment_service.validate_spec(raw)
        raw = constant_spec(
            solver={"mode": "pde", "n_t": 200, "n_x": 10, "x_min": 0.0, "x_max": 2.0, "seed": 1},
            checks=[{"kind": "recursion"}],
        )
        with pytest.raises(SpecValidationError, match="needs mode ode"):
            experiment_service.validate_spec(raw)
        with pytest.raises(SpecValidationError, match="needs mode pde"):
            experiment_service.validate_spec(constant_spec(checks=[{"kind": "widening"}]))
        with pytest.raises(SpecValidationError, match="intensities"):
            experiment_service.validate_spec(constant_spec(checks=[{"kind": "monotone", "intensities": [1.0, -1.0]}]))

    def test_pde_needs_grid(self):
        """Test pde mode without a state grid is refused."""
        with pytest.raises(SpecValidationError, match="pde mode needs"):
            experiment_service.validate_spec(constant_spec(solver={"mode": "pde", "seed": 1}))

    def test_malformed_json(self):
        """Test JSON syntax errors report line and column."""
        with pytest.raises(SpecValidationError, match=r"<spec>:1:\d+"):
            experiment_service.parse_text("{\"schema_version\": ", "json")

    def test_toml(self, tmp_path):
        """Test TOML specs load like JSON ones."""
        text = "\n".join([
            'schema_version = "1.0"',
            'name = "toml"',
            "[model]",
            "lambda1 = 1.0",
            "lambda2 = 1.0",
            "T = 1.0",
            'dynamics = { name = "arithmetic", params = { mu = 0.0, sigma = 0.0 } }',
            'L = { name = "constant", params = { value = 0.0 } }',
            'U = { name = "constant", params = { value = 2.0 } }',
            'xi = { name = "constant", params = { value = 1.0 } }',
            "",
        ])
        path = tmp_path / "spec.toml"
        path.write_text(text, encoding="utf-8")
        spec = experiment_service.load_spec(str(path))
        assert spec.name == "toml"
        assert spec.model.x0 == 1.0


class TestExperimentRun:
    """Test end-to-end runs of the experiment service."""

    def test_constant_instance_passes_every_check(self):
        """Test the constant instance reports K and passes all checks."""
        summary, reports = experiment_service.run(experiment_service.validate_spec(constant_spec()))
        assert summary.value == pytest.approx(1.0, abs=1e-12)
        assert summary.passed
        assert set(reports) == {kind.value for kind in CheckKind if kind != CheckKind.WIDENING}
        assert all(report.passed for report in reports.values())

    def test_exponential_constant_instance(self):
        """Test the exponential criterion also returns K."""
        raw = constant_spec()
        raw["model"]["g"] = {"kind": "exponential", "gamma": 0.5}
        summary, _ = experiment_service.run(experiment_service.validate_spec(raw))
        assert summary.value == pytest.approx(1.0, abs=1e-12)
        assert summary.passed

    def test_regression_mode(self):
        """Test mc mode reports a standard error and matches the ODE reference."""
        raw = constant_spec(
            solver={"mode": "mc", "n_t": 20, "n_paths": 1000, "seed": 3},
            checks=[{"kind": "value_match"}],
        )
        summary, reports = experiment_service.run(experiment_service.validate_spec(raw))
        assert summary.stderr == pytest.approx(0.0, abs=1e-10)
        assert reports["value_match"].passed


class TestCommandLine:
    """Test the dynkin command and its exit codes."""

    def test_run_writes_outputs(self, tmp_path):
        """Test a passing run exits 0 and writes every result file."""
        out = tmp_path / "out"
        code = main(["run", write_spec(tmp_path, constant_spec()), "--out", str(out), "--emit-paths"])
        assert code == EXIT_OK
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["pass"] is True
        assert summary["value"] == pytest.approx(1.0, abs=1e-12)
        assert summary["schema_version"] == "1.0"
        for name in ("surface.csv", "streams.csv", "paths.csv"):
            assert (out / name).exists()
        assert (out / "checks" / "saddle.json").exists()
        header = (out / "paths.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header == "path,seed_block,sigma,tau,regime,payoff"

    def test_failed_check_exits_one(self, tmp_path):
        """Test a zero tolerance on a noisy Monte Carlo comparison fails the run."""
        spec = deterministic_spec(checks=[{"kind": "value_match", "n_paths": 2000, "tolerance": 0.0}])
        code = main(["run", write_spec(tmp_path, spec), "--out", str(tmp_path / "out")])
        assert code == EXIT_CHECK_FAILED

    def test_jobs_do_not_change_output(self, tmp_path):
        """Test summary files are byte-identical across worker counts."""
        spec_path = write_spec(tmp_path, deterministic_spec())
        code_one = main(["run", spec_path, "--out", str(tmp_path / "one"), "--jobs", "1"])
        code_three = main(["run", spec_path, "--out", str(tmp_path / "three"), "--jobs", "3"])
        assert code_one == code_three
        assert code_one in (EXIT_OK, EXIT_CHECK_FAILED)
        one = (tmp_path / "one" / "summary.json").read_bytes()
        three = (tmp_path / "three" / "summary.json").read_bytes()
        assert one == three

    def test_seed_override(self, tmp_path):
        """Test --seed replaces the spec seed in the summary."""
        out = tmp_path / "out"
        assert main(["run", write_spec(tmp_path, constant_spec()), "--seed", "99", "--out", str(out)]) == EXIT_OK
        assert json.loads((out / "summary.json").read_text(encoding="utf-8"))["seed"] == 99

    def test_unknown_builtin_exits_two(self, tmp_path, capsys):
        """Test validation errors exit 2 with the nearest built-in in the message."""
        spec = constant_spec()
        spec["model"]["xi"] = {"name": "cal", "params": {"strike": 1.0}}
        code = main(["run", write_spec(tmp_path, spec), "--out", str(tmp_path / "out")])
        assert code == EXIT_USAGE
        assert "did you mean 'call'" in " ".join(capsys.readouterr().out.split())

    def test_stability_violation_exits_two(self, tmp_path, capsys):
        """Test the explicit-scheme guard is reported with the required N_t."""
        spec = constant_spec(
            solver={"mode": "pde", "n_t": 100, "n_x": 300, "x_min": 0.0, "x_max": 3.0, "seed": 1},
            checks=[],
        )
        spec["model"]["dynamics"] = {"name": "geometric", "params": {"mu": 0.05, "sigma": 0.2}}
        code = main(["run", write_spec(tmp_path, spec), "--out", str(tmp_path / "out")])
        assert code == EXIT_USAGE
        assert "N_t >= 3600" in " ".join(capsys.readouterr().out.split())

    def test_missing_file_and_bad_json(self, tmp_path):
        """Test unreadable specs exit 2."""
        assert main(["run", str(tmp_path / "missing.json")]) == EXIT_USAGE
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        assert main(["run", str(bad)]) == EXIT_USAGE

    def test_usage_errors(self):
        """Test argument errors exit 2 and --help exits 0."""
        assert main([]) == EXIT_USAGE
        assert main(["run"]) == EXIT_USAGE
        assert main(["--help"]) == EXIT_OK
        assert main(["run", "spec.json", "--jobs", "0"]) == EXIT_USAGE

    def test_builtins(self, capsys):
        """Test the catalog is printed as JSON."""
        assert main(["builtins"]) == EXIT_OK
        catalog = json.loads(capsys.readouterr().out)
        assert {item["name"] for item in catalog["payoffs"]} == {"constant", "affine", "call", "put"}
        assert {item["name"] for item in catalog["dynamics"]} == {"geometric", "arithmetic"}

    def test_diagnostic_checks(self, tmp_path):
        """Test the monotone, risk_approximation and signal_wait checks through a run."""
        spec = deterministic_spec(checks=[
            {"kind": "monotone"},
            {"kind": "risk_approximation", "n_paths": 2000},
            {"kind": "signal_wait", "n_paths": 2000, "tolerance": 4.0},
        ])
        spec["model"]["g"] = {"kind": "exponential", "gamma": 0.5}
        out = tmp_path / "out"
        assert main(["run", write_spec(tmp_path, spec), "--out", str(out)]) == EXIT_OK
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert set(summary["checks"]) == {"monotone", "risk_approximation", "signal_wait"}

        monotone = json.loads((out / "checks" / "monotone.json").read_text(encoding="utf-8"))
        assert monotone["details"]["report"]["intensities"] == [0.0, 0.5, 1.0, 2.0, 4.0]
        approximation = json.loads((out / "checks" / "risk_approximation.json").read_text(encoding="utf-8"))
        assert approximation["details"]["arrow_pratt"] == pytest.approx(0.5)
        assert approximation["details"]["variance"] > 0.0
        waits = json.loads((out / "checks" / "signal_wait.json").read_text(encoding="utf-8"))
        assert set(waits["details"]["streams"]) == {"min_player", "max_player"}
        assert waits["details"]["streams"]["max_player"]["reference"] == pytest.approx(0.5)

    def test_widening_check(self, tmp_path):
        """Test the domain-doubling check runs in pde mode and reports the widened grid."""
        out = tmp_path / "out"
        assert main(["run", write_spec(tmp_path, geometric_spec()), "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "checks" / "widening.json").read_text(encoding="utf-8"))
        assert report["details"]["report"]["widened_grid"] == [-1.0, 5.0, 120, 400]
        assert report["margin"] < report["tolerance"]
