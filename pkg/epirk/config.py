"""Library configuration management."""

from typing import Any

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Library settings loaded from environment variables."""

    # Application Settings
    APP_NAME: str = "epirk"
    APP_VERSION: str = "0.1.0"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "json"

    # Krylov Configuration
    KRYLOV_M_MAX: int = 128
    KRYLOV_HAPPY_TOL: float = 1e-12
    KRYLOV_MAX_MATVECS: int = 200_000
    KRYLOV_TOL_FACTOR: float = 0.01  # krylov_tol relative to integrator tolerance
    DEFAULT_KRYLOV_TOL: float = 1e-10

    # Order Condition Checker
    ORDER_SAMPLES: int = 8
    ORDER_SAMPLE_DIM: int = 6
    ORDER_PASS_THRESHOLD: float = 1e-10

    # Step Size Controller
    CONTROLLER_SAFETY: float = 0.9
    CONTROLLER_MIN_FACTOR: float = 0.2
    CONTROLLER_MAX_FACTOR: float = 5.0
    MIN_STEP_FRACTION: float = 1e-14  # of the integration span

    # Experiments
    EPIRK_THREADS: int = 1
    REFERENCE_REFINEMENT: int = 8
    REFERENCE_KRYLOV_TOL: float = 1e-13
    REFERENCE_STEPS: int = 1024  # fixed steps of the adaptive-sweep reference

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def parse_log_level(cls, v: Any) -> str:
        """Normalize the log level name to upper case."""
        level = str(v).strip().upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {v}")
        return level

    @field_validator("LOG_FORMAT", mode="before")
    @classmethod
    def parse_log_format(cls, v: Any) -> str:
        """Accept 'json' or 'text' in any case."""
        fmt = str(v).strip().lower()
        if fmt not in {"json", "text"}:
            raise ValueError(f"LOG_FORMAT must be 'json' or 'text', got {v!r}")
        return fmt

    @field_validator("EPIRK_THREADS", mode="before")
    @classmethod
    def parse_threads(cls, v: Any) -> int:
        """Clamp the worker count to at least one."""
        return max(1, int(v))


# Global settings instance
settings = Settings()
