"""Tests for config files, environment settings and report helpers."""

import json
import logging
import math

import pytest

from fstrn.config import load_config_file, parse_section
from fstrn.errors import ConfigError
from fstrn.model import FstrnConfig
from fstrn.report_utils import create_error_report, create_report, file_digest, json_safe, write_json
from fstrn.settings import Settings, configure_logging
from fstrn.train import TrainConfig


def write_config(tmp_path, payload):
    """Dump a config file and return its path."""
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(payload) if not isinstance(payload, str) else payload)
    return path


def test_no_config_file_is_empty():
    """Without a file every section falls back to defaults."""
    assert load_config_file(None) == {}
    assert parse_section(TrainConfig, {}, 'train') == TrainConfig()


def test_unknown_section(tmp_path):
    """Only known top-level sections are accepted."""
    with pytest.raises(ConfigError, match='optimizer'):
        load_config_file(write_config(tmp_path, {'optimizer': {}}))


def test_invalid_json_reports_position(tmp_path):
    """Syntax errors name the line and column."""
    with pytest.raises(ConfigError, match='line 1'):
        load_config_file(write_config(tmp_path, '{"train": '))


def test_top_level_must_be_object(tmp_path):
    """A JSON list is not a config."""
    with pytest.raises(ConfigError, match='JSON object'):
        load_config_file(write_config(tmp_path, [1, 2]))


def test_flags_override_file_values(tmp_path):
    """Explicit flags win over the file; unset flags do not."""
    config = load_config_file(write_config(tmp_path, {'train': {'lr': 0.01, 'epochs': 3}}))
    tcfg = parse_section(TrainConfig, config, 'train', {'lr': 0.5, 'epochs': None})

    assert (tcfg.lr, tcfg.epochs) == (0.5, 3)


def test_schema_violation_names_json_path(tmp_path):
    """Validation errors are reported by dotted path."""
    config = load_config_file(write_config(tmp_path, {'train': {'batch_size': 0}}))

    with pytest.raises(ConfigError, match=r'train\.batch_size'):
        parse_section(TrainConfig, config, 'train')


def test_unknown_field_is_rejected():
    """Typos in a section are not silently ignored."""
    with pytest.raises(ConfigError, match=r'model\.blocks'):
        parse_section(FstrnConfig, {'model': {'blocks': 3}}, 'model')


def test_section_must_be_object():
    """A section given as a scalar is refused."""
    with pytest.raises(ConfigError, match='expected an object'):
        parse_section(TrainConfig, {'train': 5}, 'train')


def test_settings_from_environment(monkeypatch):
    """FSTRN_* variables configure the process."""
    monkeypatch.setenv('FSTRN_THREADS', '4')
    monkeypatch.setenv('FSTRN_LOG_LEVEL', 'debug')
    settings = Settings()

    assert settings.threads == 4
    assert settings.log_level == 'debug'


def test_configure_logging_does_not_stack_handlers():
    """Reconfiguring replaces the handler."""
    configure_logging('warning')
    logger = configure_logging('debug')

    assert len(logger.handlers) == 1
    assert logger.level == logging.DEBUG


def test_reports():
    """Success and error payloads share one shape."""
    assert create_report(volumes=8) == {'success': True, 'volumes': 8}
    error = create_error_report('FormatError', 'bad', offset=12)
    assert error == {'success': False, 'error': 'FormatError', 'message': 'bad', 'offset': 12}


def test_json_safe_replaces_non_finite(tmp_path):
    """Infinite PSNR survives strict JSON as a string."""
    payload = {'psnr': [math.inf, 1.5], 'nested': {'x': -math.inf}}
    path = write_json(tmp_path / 'out.json', payload)

    assert json_safe(payload) == {'psnr': ['inf', 1.5], 'nested': {'x': '-inf'}}
    assert json.loads(path.read_text())['psnr'][0] == 'inf'


def test_file_digest_of_directory(tmp_path):
    """A directory digest changes when any file changes."""
    (tmp_path / 'a.txt').write_text('one')
    before = file_digest(tmp_path)
    (tmp_path / 'a.txt').write_text('two')

    assert file_digest(tmp_path) != before
    assert len(before) == 64
