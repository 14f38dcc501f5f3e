"""Configuration helpers for faircox."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass

from faircox.errors import ConfigError


def _env(name: str, default: str | None = None) -> str | None:
    value = os.getenv(name, default)
    if value is None or value == "":
        return None
    return value


@dataclass
class Settings:
    environment: str | None = None
    log_level: str | None = None
    workers: int = 1
    data_dir: str = "data"
    http_timeout: float = 30.0

    @classmethod
    def from_env(cls) -> "Settings":
        invalid: list[str] = []

        def as_int(name: str, default: str) -> int:
            raw = _env(name, default) or default
            try:
                value = int(raw)
            except ValueError:
                invalid.append(f"{name}={raw!r}")
                return int(default)
            if value < 1:
                invalid.append(f"{name}={raw!r}")
                return int(default)
            return value

        def as_float(name: str, default: str) -> float:
            raw = _env(name, default) or default
            try:
                value = float(raw)
            except ValueError:
                invalid.append(f"{name}={raw!r}")
                return float(default)
            if value <= 0:
                invalid.append(f"{name}={raw!r}")
                return float(default)
            return value

        log_level = _env("FAIRCOX_LOG_LEVEL")
        if log_level and not isinstance(logging.getLevelName(log_level.upper()), int):
            invalid.append(f"FAIRCOX_LOG_LEVEL={log_level!r}")
            log_level = None

        settings = cls(
            environment=_env("ENVIRONMENT"),
            log_level=log_level.upper() if log_level else None,
            workers=as_int("FAIRCOX_WORKERS", "1"),
            data_dir=_env("FAIRCOX_DATA_DIR", "data") or "data",
            http_timeout=as_float("FAIRCOX_HTTP_TIMEOUT", "30"),
        )

        if invalid:
            raise ConfigError(
                "Invalid environment variables: " + ", ".join(invalid)
            )
        return settings

    @property
    def resolved_log_level(self) -> int:
        if self.log_level:
            return logging.getLevelName(self.log_level)
        return logging.DEBUG if self.environment == "development" else logging.INFO

    @property
    def json_logs(self) -> bool:
        return self.environment == "production"
