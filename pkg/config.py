"""
Settings read from the environment (a .env file is honored).

Every field maps to a RENYI_<FIELD> variable; see env.example.
"""

import logging
import os
from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from core_model import InputValidationError

logger = logging.getLogger(__name__)

ENV_PREFIX = "RENYI_"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Settings(BaseModel):
    model_config = ConfigDict(frozen=True)

    log_level: str = "INFO"
    fit_tol: float = Field(1e-9, gt=0)
    fit_max_iters: int = Field(100_000, ge=1)
    robust_eta: float = Field(1e-3, gt=0, lt=1)
    robust_delta: float = Field(1e-3, ge=0)
    robust_max_iters: int = Field(10_000, ge=1)
    seed: int = 7
    workers: int = Field(1, ge=1)
    output_dir: Path = Path("results")

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, level: str) -> str:
        level = level.upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"unknown log level {level!r}")
        return level


def env_name(field: str) -> str:
    return ENV_PREFIX + field.upper()


def load_settings() -> Settings:
    """
    Build Settings from RENYI_* environment variables.

    Raises:
        InputValidationError: Naming the first variable with an invalid value.
    """
    load_dotenv()
    raw = {}
    for field in Settings.model_fields:
        value = os.getenv(env_name(field))
        if value is not None and value != "":
            raw[field] = value
    try:
        return Settings(**raw)
    except ValidationError as e:
        err = e.errors()[0]
        field = str(err["loc"][0]) if err["loc"] else "?"
        raise InputValidationError(f"{env_name(field)}={raw.get(field)!r}: {err['msg']}") from None


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return load_settings()
