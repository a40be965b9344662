from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    PMP_QOC_THREADS: int = 1

    LOG_LEVEL: str = "INFO"
    LOG_FILE: str = "logs/runtime.log"

    OUTPUT_DIR: str = "runs"
    DEFAULT_SEED: int = 0

    SHOOT_STARTS: int = 64
    PHI_TOL: float = 1e-8

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore")

    @field_validator("PMP_QOC_THREADS", "SHOOT_STARTS")
    @classmethod
    def _positive(cls, v: int, info) -> int:
        if v < 1:
            raise ValueError(f"{info.field_name} must be at least 1")
        return v

    @field_validator("LOG_LEVEL")
    @classmethod
    def _level(cls, v: str) -> str:
        allowed = {"TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR"}
        if v.upper() not in allowed:
            raise ValueError(f"LOG_LEVEL must be one of {sorted(allowed)}")
        return v.upper()

    @field_validator("DEFAULT_SEED")
    @classmethod
    def _seed(cls, v: int) -> int:
        if v < 0:
            raise ValueError("DEFAULT_SEED must be non-negative")
        return v

    @field_validator("PHI_TOL")
    @classmethod
    def _tol(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("PHI_TOL must lie in (0, 1)")
        return v

    @field_validator("LOG_FILE", "OUTPUT_DIR")
    @classmethod
    def _path(cls, v: str, info) -> str:
        if not v.strip():
            raise ValueError(f"{info.field_name} must not be empty")
        return v


settings = Settings()
