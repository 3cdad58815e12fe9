"""Tests for environment-driven settings."""

import pytest
from pydantic import ValidationError

from epirk.config import Settings


def test_defaults():
    """Defaults without any environment overrides."""
    settings = Settings(_env_file=None)
    assert settings.APP_NAME == "epirk"
    assert settings.KRYLOV_M_MAX == 128
    assert settings.CONTROLLER_MIN_FACTOR < 1.0 < settings.CONTROLLER_MAX_FACTOR


def test_environment_overrides(monkeypatch):
    """Environment variables override defaults and are normalized."""
    monkeypatch.setenv("LOG_LEVEL", "debug")
    monkeypatch.setenv("LOG_FORMAT", "TEXT")
    monkeypatch.setenv("EPIRK_THREADS", "0")
    monkeypatch.setenv("DEFAULT_KRYLOV_TOL", "1e-8")
    settings = Settings(_env_file=None)
    assert settings.LOG_LEVEL == "DEBUG"
    assert settings.LOG_FORMAT == "text"
    assert settings.EPIRK_THREADS == 1
    assert settings.DEFAULT_KRYLOV_TOL == 1e-8


@pytest.mark.parametrize("key, value", [("LOG_LEVEL", "loud"), ("LOG_FORMAT", "xml")])
def test_invalid_values(monkeypatch, key, value):
    monkeypatch.setenv(key, value)
    with pytest.raises(ValidationError):
        Settings(_env_file=None)
