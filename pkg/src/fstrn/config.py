"""JSON run configuration: loading, flag overrides and schema validation."""

from collections.abc import Mapping
import json
from pathlib import Path
from typing import Annotated, Any, TypeVar

from pydantic import AfterValidator, BaseModel, ValidationError

from .constants.defaults import SUPPORTED_SCALES
from .errors import ConfigError

SECTIONS = ('model', 'train', 'data', 'inference')

SchemaT = TypeVar('SchemaT', bound=BaseModel)


def check_scale(value: int) -> int:
    """Accept only the upscale factors the network is built for."""
    if value not in SUPPORTED_SCALES:
        msg = f'scale must be one of {", ".join(map(str, SUPPORTED_SCALES))}, got {value}'
        raise ValueError(msg)
    return value


ScaleFactor = Annotated[int, AfterValidator(check_scale)]


def load_config_file(path: Path | None) -> dict[str, Any]:
    """Read a JSON config file with optional top-level sections.

    Args:
        path (Path | None): Config file; ``None`` yields an empty config.

    Returns:
        dict[str, Any]: Parsed config keyed by section name.

    Raises:
        ConfigError: If the file is unreadable, not a JSON object, or has unknown sections.
    """
    if path is None:
        return {}
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as e:
        msg = f'Cannot read config file {path}: {e!s}'
        raise ConfigError(msg) from e
    except json.JSONDecodeError as e:
        msg = f'Config file {path} is not valid JSON: line {e.lineno}, column {e.colno}: {e.msg}'
        raise ConfigError(msg) from e
    if not isinstance(payload, dict):
        msg = f'Config file {path} must contain a JSON object, got {type(payload).__name__}'
        raise ConfigError(msg)
    unknown = sorted(set(payload) - set(SECTIONS))
    if unknown:
        msg = f'Unknown config sections {unknown}; expected a subset of {list(SECTIONS)}'
        raise ConfigError(msg)
    return payload


def format_validation_error(exc: ValidationError, section: str | None = None) -> str:
    """Render a pydantic error as one ``json.path: message`` line per offending field."""
    lines = []
    for error in exc.errors():
        parts = [section] if section else []
        parts.extend(str(part) for part in error['loc'])
        lines.append(f'{".".join(parts) or "<root>"}: {error["msg"]}')
    return '; '.join(lines)


def parse_section(
    schema: type[SchemaT],
    config: Mapping[str, Any],
    section: str,
    overrides: Mapping[str, Any] | None = None,
) -> SchemaT:
    """Validate one config section after applying flag overrides.

    Args:
        schema (type[BaseModel]): Pydantic schema for the section.
        config (Mapping[str, Any]): Whole parsed config file.
        section (str): Section name, used as the JSON path prefix in errors.
        overrides (Mapping[str, Any], optional): Flag values; ``None`` entries are ignored.

    Returns:
        BaseModel: The validated section.

    Raises:
        ConfigError: If validation fails; the message names each offending field by JSON path.
    """
    raw = config.get(section, {})
    if not isinstance(raw, dict):
        msg = f'{section}: expected an object, got {type(raw).__name__}'
        raise ConfigError(msg)
    merged = dict(raw)
    merged.update({key: value for key, value in (overrides or {}).items() if value is not None})
    try:
        return schema.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e, section)) from e
