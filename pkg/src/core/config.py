"""
GPCM Toolkit Configuration
Process settings from the environment plus the validated numerical configs
shared by the EM engine, the M-step solvers and the CLI.
"""

from functools import lru_cache
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

SCHEMA_VERSION = "1.0"


class Settings(BaseSettings):
    """Process-level settings - only the thread default and log level come from env"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="GPCM_",
        case_sensitive=False,
        extra="ignore",
    )

    threads: int = Field(
        default=1, ge=1, description="Default worker count for replicate parallelism"
    )
    log_level: str = Field(default="INFO")

    @field_validator("log_level")
    @classmethod
    def normalize_log_level(cls, value: str) -> str:
        level = value.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {value}")
        return level


class MStepConfig(BaseModel):
    """Inner-loop control for the iterative M-steps (VEE, VEV, EVE, VVE)"""

    model_config = ConfigDict(frozen=True)

    inner_tol: float = Field(
        default=1e-8, gt=0, description="Relative objective decrease threshold"
    )
    inner_max_iter: int = Field(default=100, gt=0)
    orientation_max_iter: int = Field(default=100, gt=0)
    orientation_starts: int = Field(
        default=4, ge=1, description="Seed orientations refined by the EVE/VVE search"
    )


class FitConfig(BaseModel):
    """EM configuration: Aitken threshold, iteration cap, collapse floor, seeding"""

    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(default=1e-6, gt=0, description="Aitken threshold")
    max_iter: int = Field(default=1000, ge=2)
    min_weight: Optional[float] = Field(
        default=None,
        ge=0,
        description="Component-collapse floor on n_j; None means p + 1",
    )
    seed: int = Field(default=0, ge=0, lt=2**64)
    init_mode: Literal["soft", "hard"] = Field(default="soft")
    starts: int = Field(
        default=20, ge=0, description="Random starts on top of the hierarchical one"
    )
    mstep: MStepConfig = Field(default_factory=MStepConfig)

    def resolved_min_weight(self, p: int) -> float:
        """Collapse floor for dimension p"""
        return float(p + 1) if self.min_weight is None else self.min_weight

    def with_seed(self, seed: int) -> "FitConfig":
        return self.model_copy(update={"seed": seed})


class RunConfig(BaseModel):
    """Validated CLI invocation, checked before any computation"""

    model_config = ConfigDict(frozen=True)

    command: Literal["fit", "closed-test", "ic", "simulate"]
    input: Optional[str] = None
    k: int = Field(default=2, ge=1)
    model: Optional[str] = None
    method: Literal["chi2", "bootstrap"] = "chi2"
    alpha: float = Field(default=0.05, gt=0, lt=1)
    replicates: int = Field(default=999, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    starts: int = Field(default=20, ge=0)
    epsilon: float = Field(default=1e-6, gt=0)
    max_iter: int = Field(default=1000, ge=2)
    init_mode: Literal["soft", "hard"] = "soft"
    threads: int = Field(default=1, ge=1)
    output: Optional[str] = None
    pvalues_csv: Optional[str] = None
    # simulate only
    n: Optional[int] = Field(default=None, ge=2)
    overlap: Optional[float] = Field(default=None, gt=0, lt=1)
    reps: int = Field(default=200, ge=0)

    @model_validator(mode="after")
    def check_required(self) -> "RunConfig":
        if self.command in {"fit", "closed-test", "ic"} and not self.input:
            raise ValueError(f"{self.command} needs an input CSV")
        if self.command in {"fit", "simulate"} and not self.model:
            raise ValueError(f"{self.command} needs --model")
        if self.command == "simulate":
            if self.n is None or self.overlap is None:
                raise ValueError("simulate needs --n and --overlap")
            if self.k != 2:
                raise ValueError("simulate scenarios have exactly two components")
        return self

    def fit_config(self) -> FitConfig:
        return FitConfig(
            epsilon=self.epsilon,
            max_iter=self.max_iter,
            seed=self.seed,
            init_mode=self.init_mode,
            starts=self.starts,
        )


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()


# Convenience export
settings = get_settings()
