import os
from functools import lru_cache

from dotenv import load_dotenv
from pydantic import BaseModel, field_validator

load_dotenv()


class Settings(BaseModel):
    threads: int = 1
    tolerance: float = 1e-9
    support_tol: float = 1e-12
    log_level: str = "WARNING"

    @field_validator("threads")
    @classmethod
    def validate_threads(cls, v):
        if v < 1:
            raise ValueError("FAIRSLOT_THREADS must be at least 1")
        return v

    @field_validator("tolerance", "support_tol")
    @classmethod
    def validate_positive(cls, v):
        if not v > 0:
            raise ValueError("tolerances must be positive")
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        return v.upper()


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Settings read from the environment (and a local .env file, if any)."""
    return Settings(
        threads=int(os.getenv("FAIRSLOT_THREADS", "1")),
        tolerance=float(os.getenv("FAIRSLOT_TOLERANCE", "1e-9")),
        support_tol=float(os.getenv("FAIRSLOT_SUPPORT_TOL", "1e-12")),
        log_level=os.getenv("FAIRSLOT_LOG_LEVEL", "WARNING"),
    )
