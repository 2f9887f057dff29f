"""Central logging configuration for the application.

Recursos:
- Handler rotativo por tamanho (padrão 10MB), com backups configuráveis
- Nível custom "FULL" (15) para eventos granulares das execuções
- Helper ``run_event`` para registrar início/fim de cadeias e comandos
"""

from __future__ import annotations

import json
import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from phylnet.config import get_settings

FULL_LOG_LEVEL = 15
logging.addLevelName(FULL_LOG_LEVEL, "FULL")

_LEVELS_BY_TYPE = {
    "error": logging.ERROR,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
    "full": FULL_LOG_LEVEL,
}


def _log_full(self: logging.Logger, message: str, *args, **kwargs) -> None:
    if self.isEnabledFor(FULL_LOG_LEVEL):
        self._log(FULL_LOG_LEVEL, message, args, **kwargs)


if not hasattr(logging.Logger, "full"):
    logging.Logger.full = _log_full  # type: ignore[attr-defined]


class _TypesFilter(logging.Filter):
    def __init__(self, allowed: set[int]) -> None:
        super().__init__()
        self.allowed = allowed

    def filter(self, record: logging.LogRecord) -> bool:  # noqa: A003
        return record.levelno in self.allowed


def allowed_levels(log_types: str) -> tuple[set[int], int]:
    """Map a comma list such as ``"error,warning,info"`` to levels; INFO+WARNING+ERROR when empty."""

    types = {t.strip() for t in (log_types or "").split(",") if t.strip()}
    allowed = {_LEVELS_BY_TYPE[t] for t in types if t in _LEVELS_BY_TYPE}
    if not allowed:
        allowed = {logging.INFO, logging.WARNING, logging.ERROR}
    return allowed, min(allowed)


def setup_logging(level: Optional[str] = None, log_file: Optional[Path] = None) -> logging.Logger:
    """Configure root logging with console and optional rotating file handler."""

    settings = get_settings()
    logger = logging.getLogger()
    allowed, min_level = allowed_levels(settings.log_types)
    numeric_level = min(min_level, getattr(logging, (level or settings.log_level).upper(), logging.INFO))
    logger.setLevel(numeric_level)
    types_filter = _TypesFilter(allowed)
    console = None
    for handler in logger.handlers:
        if isinstance(handler, logging.StreamHandler) and not isinstance(handler, logging.FileHandler):
            console = handler
            break
    if console is None:
        console = logging.StreamHandler()
        logger.addHandler(console)
    console.setFormatter(logging.Formatter("%(asctime)s - %(levelname)s - %(message)s"))
    if log_file is not None:
        for handler in logger.handlers:
            if isinstance(handler, logging.FileHandler) and handler.baseFilename == str(log_file.resolve()):
                break
        else:
            log_file.parent.mkdir(parents=True, exist_ok=True)
            max_bytes = max(1, settings.log_rotate_max_mb) * 1024 * 1024
            file_handler = RotatingFileHandler(
                log_file, maxBytes=max_bytes, backupCount=max(1, settings.log_backup_count), encoding="utf-8"
            )
            file_handler.setFormatter(logging.Formatter("%(asctime)s - %(levelname)s - %(name)s - %(message)s"))
            logger.addHandler(file_handler)
    # Atualiza filtros e níveis em todos os handlers
    for handler in logger.handlers:
        handler.setLevel(numeric_level)
        handler.filters = [types_filter]
    return logger


def get_log_file_path(filename: str) -> Path:
    """Return a path inside the configured log directory."""

    return get_settings().log_dir / filename


def run_event(logger: Optional[logging.Logger], action: str, **kwargs) -> None:
    """Loga um evento de execução no nível FULL com payload JSON.

    Exemplo:
      run_event(LOGGER, "CHAIN_START", chain=0, n_iter=20000)
    """
    if logger is None:
        logger = logging.getLogger("phylnet.run")
    try:
        extra_txt = json.dumps(kwargs, ensure_ascii=False, sort_keys=True, default=str)
    except (TypeError, ValueError):
        extra_txt = str(kwargs)
    logger.full(f"RUN_EVENT {action} {extra_txt}")  # type: ignore[attr-defined]
