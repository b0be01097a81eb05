"""
Configuration management for the weakly subcritical BPRE simulator
"""
import os
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings"""

    # Logging
    BPRE_LOG: str = os.getenv("BPRE_LOG", "INFO")

    # Artifact identity (echoed into every run manifest)
    ARTIFACT_VERSION: str = "0.1.0"

    # Tilting (root finder)
    TILT_TOL: float = float(os.getenv("TILT_TOL", "1e-12"))
    TILT_BRACKET_WIDTH: float = 1e-13

    # Renewal tables
    RENEWAL_K: int = int(os.getenv("RENEWAL_K", "64"))
    RENEWAL_GRID_STEP: float = float(os.getenv("RENEWAL_GRID_STEP", "0.25"))
    RENEWAL_CUTOFF: float = float(os.getenv("RENEWAL_CUTOFF", "1e-10"))
    LADDER_TIME_CAP: int = int(os.getenv("LADDER_TIME_CAP", str(2 ** 16)))  # steps per ladder epoch

    # Branching engine
    POPULATION_CAP: int = int(os.getenv("POPULATION_CAP", "100000000"))  # per generation
    REJECTION_BUDGET: int = int(os.getenv("REJECTION_BUDGET", "100000"))  # tries per environment
    SURVIVAL_FLOOR: float = float(os.getenv("SURVIVAL_FLOOR", "1e-4"))
    ESS_MIN_FRACTION: float = float(os.getenv("ESS_MIN_FRACTION", "0.01"))
    UNDERFLOW_LOG_THRESHOLD: float = -644.7  # log(1e-280)

    # Conditioned walks
    MIN_ACCEPTANCE_RATE: float = float(os.getenv("MIN_ACCEPTANCE_RATE", "1e-6"))
    MAX_CONDITIONED_N: int = 10_000

    # Monte Carlo plumbing
    BLOCK_SIZE: int = int(os.getenv("BLOCK_SIZE", "10000"))  # replicas per rng block
    WORKERS: int = int(os.getenv("WORKERS", "1"))

    # Exact enumeration budgets
    ORACLE_BUDGET: int = int(os.getenv("ORACLE_BUDGET", "20000000"))
    WALK_ORACLE_BUDGET: int = int(os.getenv("WALK_ORACLE_BUDGET", str(2 ** 20)))
    ORACLE_CHUNK: int = 65536
    CHANGE_OF_MEASURE_BUDGET: int = 10_000_000

    # Acceptance-suite constants (CLI-tunable)
    STABILIZATION_THRESHOLD: float = float(os.getenv("STABILIZATION_THRESHOLD", "0.10"))
    SCALING_THRESHOLD: float = float(os.getenv("SCALING_THRESHOLD", "0.15"))

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"


settings = Settings()
