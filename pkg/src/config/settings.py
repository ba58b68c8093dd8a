from pathlib import Path
from typing import List

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Laboratory settings loaded from environment variables (prefix ``WNLS_``) and ``.env``."""

    # Output and parallelism
    out_dir: str = "runs"
    workers: int = 1
    fft_workers: int = 1
    batch_size: int = 256
    log_level: str = "INFO"

    # Small parameters
    default_delta: float = 0.1
    default_epsilon: float = 0.1
    tau: float = 0.5

    # Pseudospectral products
    grid_policy: str = "exact"
    strict_aliasing: bool = True

    # Time integration
    dt_factor: float = 0.1
    blowup_factor: float = 1e3
    path_tolerance: float = 1e-10
    verify_paths: bool = False
    mass_tolerance: float = 1e-6
    quadrature_tolerance: float = 1e-8

    # Sampling
    ess_warning_fraction: float = 0.01
    ess_abort_fraction: float = 0.001
    mass_weight: bool = False
    observable_modes: List[List[int]] = [[0, 0], [1, 0], [0, 1], [1, 1], [2, 0]]

    # Time-frequency diagnostics
    window_half_width: float = 2.0
    window_points: int = 1024
    leakage_threshold: float = 1e-3
    column_chunk: int = 32
    weighted_zb_kappa: float = 2.0
    kernel_max_cutoff: int = 8

    # Counting and deviation
    enumeration_budget: float = 1e8
    theta: float = 0.1
    max_pairing_arity: int = 9
    isserlis_degree_budget: int = 18
    tail_trials: int = 10000

    # Statistical acceptance
    z_threshold: float = 4.0
    ks_pvalue_threshold: float = 1e-3

    # Project root
    project_root: Path = Path(__file__).parent.parent.parent

    class Config:
        env_file = ".env"
        env_prefix = "WNLS_"
        case_sensitive = False
        extra = "ignore"

    @property
    def runs_path(self) -> Path:
        """Get the full run output directory path."""
        path = Path(self.out_dir)
        return path if path.is_absolute() else self.project_root / path

    def dt_for(self, cutoff: float) -> float:
        """Default time step dt = dt_factor / N^2."""
        return self.dt_factor / float(cutoff) ** 2


settings = Settings()
