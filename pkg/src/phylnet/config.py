"""Application configuration helpers."""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv


@dataclass(slots=True)
class Settings:
    """Runtime settings loaded from environment variables."""

    out_dir: Path
    log_dir: Path
    seed: Optional[int]
    jobs: Optional[int]
    # Logging
    log_level: str
    log_rotate_max_mb: int
    log_backup_count: int
    log_types: str


def _load_env() -> None:
    """Load .env file values if available."""

    load_dotenv(override=False)


def _int_env(name: str, default: Optional[int]) -> Optional[int]:
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        return default


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return cached application settings."""

    _load_env()
    return Settings(
        out_dir=Path(os.getenv("PHYLNET_OUT_DIR", "resultados")),
        log_dir=Path(os.getenv("LOG_DIR", "logs")),
        seed=_int_env("PHYLNET_SEED", None),
        jobs=_int_env("PHYLNET_JOBS", None),
        log_level=os.getenv("LOG_LEVEL", "INFO").strip().upper(),
        log_rotate_max_mb=_int_env("LOG_ROTATE_MAX_MB", 10) or 10,
        log_backup_count=_int_env("LOG_BACKUP_COUNT", 5) or 5,
        log_types=os.getenv("LOG_TYPES", "error,warning,info").strip().lower(),
    )


def reload_settings() -> None:
    """Clear cached configuration to reload updated environment variables."""

    get_settings.cache_clear()
