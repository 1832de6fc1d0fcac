"""Application logger setup.

This module configures a named logger `rr-channel` and a stream handler.
Log level is controlled via the `LOG_LEVEL` environment variable.
Adds a `ThreadIdLogFilter` to inject the deterministic thread id of the
calling thread, and a separate `rr-channel.desync` logger that prints the
bare one-line desync report to stderr.
"""

import logging
import os
import sys


DTI_KEY = "dti"
DEFAULT_LOG_LEVEL = "INFO"
LEVELS = {
    "CRITICAL": logging.CRITICAL,
    "ERROR": logging.ERROR,
    "WARNING": logging.WARNING,
    "INFO": logging.INFO,
    "DEBUG": logging.DEBUG,
    "NOTSET": logging.NOTSET,
}


class ThreadIdLogFilter(logging.Filter):
    """Inject the deterministic thread id of the logging thread into records."""

    def filter(self, record: logging.LogRecord) -> bool:
        # ids logs through this module
        from .ids import current_dti

        try:
            setattr(record, DTI_KEY, str(current_dti()))
        except Exception:
            setattr(record, DTI_KEY, "?")
        return True


def _resolve_level(name: str | None) -> int:
    if not name:
        return logging.DEBUG
    return LEVELS.get(name.upper(), logging.DEBUG)


# Configure logger
_env_level = os.getenv("LOG_LEVEL", DEFAULT_LOG_LEVEL)
_numeric_level = _resolve_level(_env_level)

logger = logging.getLogger("rr-channel")
logger.setLevel(_numeric_level)
logger.propagate = False

# Stream handler with same level and dti formatter
_handler = logging.StreamHandler()
_handler.setLevel(_numeric_level)
_handler.setFormatter(
    logging.Formatter(
        "[%(asctime)s] [%(dti)s] %(levelname)-9s %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
)
_handler.addFilter(ThreadIdLogFilter())

logger.addHandler(_handler)


# Desync reports are a fixed single-line format consumed by scripts
desync_logger = logging.getLogger("rr-channel.desync")
desync_logger.setLevel(logging.WARNING)
desync_logger.propagate = False

_desync_handler = logging.StreamHandler(sys.stderr)
_desync_handler.setFormatter(logging.Formatter("%(message)s"))
desync_logger.addHandler(_desync_handler)
