"""Logging system for elephantlab.

Every module logs through the package logger built here from the
``logging`` config section. Runs additionally get a ``run.log`` in their
output directory (:func:`run_log_file`) and tag their messages with the
config hash and seed (:func:`run_logger`), so interleaved output from sweep
workers stays attributable.
"""

import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Union

from .config import config
from .errors import ConfigError

DEFAULT_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LEVELS = ('CRITICAL', 'ERROR', 'WARNING', 'INFO', 'DEBUG', 'NOTSET')


def level_value(level: Union[str, int]) -> int:
    """Numeric level for a level name.

    Raises:
        ConfigError: If the name is not a standard logging level
    """
    if isinstance(level, int):
        return level
    name = str(level).strip().upper()
    if name not in LEVELS:
        raise ConfigError(f"Unknown logging level '{level}', expected one of {', '.join(LEVELS)}")
    return getattr(logging, name)


def _formatter() -> logging.Formatter:
    return logging.Formatter(config.get('logging.format') or DEFAULT_FORMAT)


def setup_logging(name: Optional[str] = None) -> logging.Logger:
    """Set up and return a logger instance.

    Args:
        name: Logger name (defaults to root logger if None)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)

    # Only configure if no handlers exist (avoid duplicate handlers)
    if not logger.handlers:
        formatter = _formatter()

        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        log_file = config.get('logging.file')
        if log_file:
            Path(log_file).parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(log_file, encoding='utf-8')
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

        logger.setLevel(level_value(config.get('logging.level', 'INFO')))

        # Named loggers do not propagate, root handlers would print twice
        if name:
            logger.propagate = False

    return logger


def configure_logging(level: Optional[str] = None) -> None:
    """Set the root and package logging level, e.g. from the CLI verbosity flags."""
    if level:
        value = level_value(level)
        logging.getLogger().setLevel(value)
        logging.getLogger('elephantlab').setLevel(value)
        logger.debug(f"Logging level set to {level}")


class RunLogAdapter(logging.LoggerAdapter):
    """Prefixes messages with ``[<config hash>/<seed>]``."""

    def process(self, msg, kwargs):
        return f"[{self.extra['config_hash']}/{self.extra['seed']}] {msg}", kwargs


def run_logger(config_hash: str, seed: int) -> RunLogAdapter:
    return RunLogAdapter(logger, {'config_hash': config_hash, 'seed': seed})


@contextmanager
def run_log_file(path: Union[str, Path]) -> Iterator[Path]:
    """Copy every package log record to ``path`` while the block runs.

    The file is truncated on entry, so a rerun of the same seed keeps only
    its own log.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode='w', encoding='utf-8')
    handler.setFormatter(_formatter())
    handler.setLevel(logging.DEBUG)
    logger.addHandler(handler)
    try:
        yield path
    finally:
        logger.removeHandler(handler)
        handler.close()


# Create default logger
logger = setup_logging('elephantlab')
