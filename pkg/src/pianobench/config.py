"""
Run configuration.

Defaults come from ``PIANOBENCH_*`` environment variables (a ``.env`` file is loaded by
the command line first); command-line flags override them.
"""

import typing as t
from os import getenv

from pydantic import BaseModel, Field, field_validator

METRICS = ("fid", "fgd", "wgd", "pd", "smooth")


def _env(name: str, default: str) -> str:
    return getenv(f"PIANOBENCH_{name}", default)


class CliConfig(BaseModel):
    seed: int = Field(default_factory=lambda: int(_env("SEED", "42")))
    gmm_components: int = Field(
        default_factory=lambda: int(_env("GMM_COMPONENTS", "8")), ge=1
    )
    latent_dim: int = Field(default_factory=lambda: int(_env("LATENT_DIM", "32")), ge=1)
    fps: float = Field(default_factory=lambda: float(_env("FPS", "30")), gt=0)
    jobs: int = Field(default_factory=lambda: int(_env("JOBS", "1")), ge=1)
    timing_tol_ms: float = Field(
        default_factory=lambda: float(_env("TIMING_TOL_MS", "30")), ge=0
    )
    dynamic_tol: float = Field(
        default_factory=lambda: float(_env("DYNAMIC_TOL", "0.10")), gt=0, lt=1
    )
    log_level: str = Field(default_factory=lambda: _env("LOG_LEVEL", "WARNING").upper())
    template: t.Optional[str] = Field(
        default_factory=lambda: getenv("PIANOBENCH_TEMPLATE")
    )
    metrics: tuple[str, ...] = METRICS
    window_s: float = Field(default=8.0, gt=0)
    stride_s: float = Field(default=1.0, gt=0)
    embedder: t.Optional[str] = None
    report: t.Optional[str] = None

    @field_validator("metrics", mode="before")
    @classmethod
    def _parse_metrics(cls, value: t.Any) -> t.Any:
        if isinstance(value, str):
            value = [m.strip() for m in value.split(",") if m.strip()]
        unknown = set(value) - set(METRICS)
        if unknown:
            raise ValueError(f"unknown metrics {sorted(unknown)}, known: {METRICS}")
        return tuple(m for m in METRICS if m in value)

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        if value not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level {value!r}")
        return value
