from pydantic_settings import BaseSettings
import os


class Settings(BaseSettings):
    # API
    api_v1_prefix: str = "/api/v1"
    project_name: str = "Poisson Dynkin Solver"
    version: str = "1.0.0"

    # Output
    output_dir: str = "results"
    float_digits: int = 17

    # Monte Carlo
    default_seed: int = 20240501
    default_jobs: int = 1
    path_block_size: int = 512  # paths per RNG block, independent of worker count
    path_steps: int = 200
    stderr_multiplier: float = 3.0

    # Numerics
    regression_degree: int = 3
    bisection_tol: float = 1e-12
    fd_step: float = 1e-4
    exp_inverse_ceiling: float = -1e-300
    saddle_deviations: int = 10
    sdg_deviations: int = 10

    # Logging
    log_level: str = "INFO"

    model_config = {
        'env_file': os.path.join(os.path.dirname(os.path.dirname(__file__)), '.env'),
        'env_file_encoding': 'utf-8',
        'env_prefix': 'DYNKIN_',
        'case_sensitive': False,
        'extra': 'ignore'
    }


# Create global settings instance
settings = Settings()


def create_output_dirs(output_dir: str) -> str:
    """Create the result directory tree for a run and return its path."""
    checks_path = os.path.join(output_dir, "checks")
    os.makedirs(checks_path, exist_ok=True)
    return output_dir
