"""Constants for the fstrn package."""
from . import defaults
from .help_text import app_help, config_help, format_help

__all__ = ['app_help', 'config_help', 'defaults', 'format_help']
