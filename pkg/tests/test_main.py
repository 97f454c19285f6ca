from fastapi.testclient import TestClient

from app.main import app
from tests.test_cli import constant_spec

# Create test client
client = TestClient(app)


class TestServiceEndpoints:
    """Test root and health endpoints."""

    def test_root_endpoint(self):
        """Test root endpoint."""
        response = client.get("/")
        assert response.status_code == 200
        data = response.json()
        assert data["message"] == "Welcome to the Poisson Dynkin Solver API"
        assert "version" in data

    def test_health_endpoint(self):
        """Test basic health endpoint."""
        response = client.get("/health")
        assert response.status_code == 200
        data = response.json()
        assert data["status"] == "healthy"
        assert "version" in data

    def test_api_health_endpoint(self):
        """Test API versioned health endpoint."""
        response = client.get("/api/v1/health")
        assert response.status_code == 200
        data = response.json()
        assert data["status"] == "healthy"
        assert "timestamp" in data

    def test_liveness(self):
        """Test liveness check."""
        response = client.get("/api/v1/health/live")
        assert response.status_code == 200
        assert response.json()["status"] == "alive"


class TestExperimentEndpoints:
    """Test the builtins catalog and experiment runs over HTTP."""

    def test_builtins(self):
        """Test the catalog lists payoffs and dynamics."""
        response = client.get("/api/v1/builtins")
        assert response.status_code == 200
        data = response.json()
        assert "constant" in [item["name"] for item in data["payoffs"]]
        assert "geometric" in [item["name"] for item in data["dynamics"]]

    def test_run_constant_experiment(self):
        """Test a valid spec returns its summary."""
        spec = constant_spec(checks=[{"kind": "recursion"}, {"kind": "sdg"}])
        response = client.post("/api/v1/experiments", json=spec)
        assert response.status_code == 200
        summary = response.json()["summary"]
        assert summary["pass"] is True
        assert abs(summary["value"] - 1.0) <= 1e-12
        assert set(summary["checks"]) == {"recursion", "sdg"}
        assert "checks" not in response.json()

    def test_include_details(self):
        """Test per-check reports are returned on request."""
        spec = constant_spec(checks=[{"kind": "recursion"}])
        response = client.post("/api/v1/experiments?include_details=true", json=spec)
        assert response.status_code == 200
        assert "residuals" in response.json()["checks"]["recursion"]["details"]

    def test_invalid_spec(self):
        """Test schema errors return 422."""
        response = client.post("/api/v1/experiments", json={"schema_version": "1.0"})
        assert response.status_code == 422
        assert "model" in response.json()["detail"]

    def test_unknown_builtin(self):
        """Test misspelled built-ins return 422 with a suggestion."""
        spec = constant_spec()
        spec["model"]["U"] = {"name": "constnat", "params": {"value": 1.0}}
        response = client.post("/api/v1/experiments", json=spec)
        assert response.status_code == 422
        assert "did you mean 'constant'" in response.json()["detail"]

    def test_solver_refusal(self):
        """Test a stability violation returns 400."""
        spec = constant_spec(
            solver={"mode": "pde", "n_t": 100, "n_x": 300, "x_min": 0.0, "x_max": 3.0, "seed": 1},
            checks=[],
        )
        spec["model"]["dynamics"] = {"name": "geometric", "params": {"mu": 0.05, "sigma": 0.2}}
        response = client.post("/api/v1/experiments", json=spec)
        assert response.status_code == 400
        assert "N_t >= 3600" in response.json()["detail"]
