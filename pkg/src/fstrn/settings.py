"""Environment settings and logging setup."""

from functools import lru_cache
import logging

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from rich.console import Console
from rich.logging import RichHandler


class Settings(BaseSettings):
    """Process-wide settings read from ``FSTRN_*`` environment variables.

    Attributes:
        threads (int): Upper bound on worker threads used inside a single op.
        log_level (str): Level for the ``fstrn`` logger.
    """

    model_config = SettingsConfigDict(env_prefix='FSTRN_', extra='ignore')

    threads: int = Field(default=1, ge=1)
    log_level: str = 'INFO'


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return the cached settings instance."""
    return Settings()


def configure_logging(level: str | None = None) -> logging.Logger:
    """Attach a rich handler to the package logger.

    Calling it again replaces the handler instead of stacking a second one.

    Args:
        level (str, optional): Override for ``Settings.log_level``.

    Returns:
        logging.Logger: The configured ``fstrn`` logger.
    """
    logger = logging.getLogger('fstrn')
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = RichHandler(
        console=Console(stderr=True),
        show_path=False,
        rich_tracebacks=False,
    )
    handler.setFormatter(logging.Formatter('%(message)s'))
    logger.addHandler(handler)
    logger.setLevel((level or get_settings().log_level).upper())
    logger.propagate = False
    return logger
