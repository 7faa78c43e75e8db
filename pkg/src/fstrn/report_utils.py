"""Helpers that shape JSON payloads emitted by the command line."""

import hashlib
import json
import math
from pathlib import Path
from typing import Any


def create_error_report(
    error_type: str,
    message: str,
    details: str | None = None,
    **additional_fields: Any,
) -> dict[str, Any]:
    """Create a standardized error payload.

    Args:
        error_type (str): Short error type identifier, usually the exception class name
        message (str): Detailed error message
        details (str, optional): Hint on how to fix the problem
        **additional_fields: Extra fields such as ``offset`` or ``path``

    Returns:
        dict[str, Any]: Error payload

    Example:
        >>> create_error_report('ConfigError', 'train.batch_size: must be >= 1')
        {'success': False, 'error': 'ConfigError', 'message': 'train.batch_size: must be >= 1'}
    """
    report = {
        'success': False,
        'error': error_type,
        'message': message,
    }

    if details is not None:
        report['details'] = details

    report.update(additional_fields)

    return report


def create_report(**fields: Any) -> dict[str, Any]:
    """Create a standardized success payload.

    Args:
        **fields: Any fields to include in the payload

    Returns:
        dict[str, Any]: Success payload

    Example:
        >>> create_report(volumes=8)
        {'success': True, 'volumes': 8}
    """
    report: dict[str, Any] = {'success': True}
    report.update(fields)
    return report


def json_safe(value: Any) -> Any:
    """Replace non-finite floats with strings so the payload is strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return 'inf' if value > 0 else ('-inf' if value < 0 else 'nan')
    if isinstance(value, dict):
        return {key: json_safe(item) for key, item in value.items()}
    if isinstance(value, list | tuple):
        return [json_safe(item) for item in value]
    return value


def write_json(path: Path, payload: dict[str, Any]) -> Path:
    """Write a payload as sorted, indented strict JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(json_safe(payload), indent=2, sort_keys=True, allow_nan=False) + '\n')
    return path


def file_digest(path: Path) -> str:
    """Return the sha256 hex digest of a file or, for a directory, of its sorted files."""
    digest = hashlib.sha256()
    files = sorted(p for p in path.rglob('*') if p.is_file()) if path.is_dir() else [path]
    for item in files:
        if path.is_dir():
            digest.update(item.relative_to(path).as_posix().encode())
        with item.open('rb') as handle:
            for chunk in iter(lambda: handle.read(1 << 20), b''):
                digest.update(chunk)
    return digest.hexdigest()
