"""Tests for the command-line entry point."""

import json
import logging

import pytest
from pydantic import ValidationError

from epirk.main import (
    EXIT_ACCEPTANCE,
    EXIT_INVALID,
    EXIT_OK,
    JsonFormatter,
    build_parser,
    config_from_args,
    main,
)
from epirk.schemas.experiment import ExperimentMode


@pytest.fixture(autouse=True)
def restore_package_logger():
    """main() installs its own handler; put the package logger back afterwards."""
    package_logger = logging.getLogger("epirk")
    handlers = list(package_logger.handlers)
    yield
    package_logger.handlers = handlers
    package_logger.propagate = True
    package_logger.setLevel(logging.NOTSET)


def test_list(capsys):
    """The listing names every method and problem."""
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "EPIRK5s3: stiff order 5" in out
    assert "gray_scott_2d" in out


def test_check_order_prints_json(capsys, tmp_path):
    """check_order prints a JSON summary and writes the report file."""
    report = tmp_path / "report.json"
    code = main(["--mode", "check_order", "--method", "EPIRK5s3", "--report-json", str(report)])
    assert code == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["certified_order"] == 5
    assert json.loads(report.read_text(encoding="utf-8")) == printed


def test_check_order_with_exprb_rule_set(capsys):
    code = main(["--mode", "check_order", "--method", "EXPRB53s3", "--rule-set", "exprb"])
    assert code == EXIT_OK
    assert json.loads(capsys.readouterr().out)["rule_set"] == "exprb"


def test_missing_sweep_is_invalid(capsys):
    """A fixed sweep without step sizes exits with the invalid-input code."""
    assert main(["--mode", "fixed_sweep"]) == EXIT_INVALID
    assert "h_list" in capsys.readouterr().err


def test_unknown_method_is_invalid(capsys):
    assert main(["--mode", "check_order", "--method", "RK4"]) == EXIT_INVALID


def test_slope_outside_band_is_acceptance_failure(capsys):
    """An impossible slope band turns a finished sweep into exit code 2."""
    argv = (
        "--mode fixed_sweep --problem linear_diffusion_1d --n 10 "
        "--h-list 0.05 0.025 --expect-slope 9 10"
    ).split()
    assert main(argv) == EXIT_ACCEPTANCE


def test_config_file_merges_with_flags(tmp_path):
    """Flags override values from the configuration file."""
    path = tmp_path / "experiment.json"
    path.write_text(
        json.dumps({"mode": "fixed_sweep", "h_list": [0.1, 0.05], "n": 16}), encoding="utf-8"
    )
    args = build_parser().parse_args(
        ["--config", str(path), "--n", "24", "--problem-option", "consistent_forcing=true"]
    )
    config = config_from_args(args)
    assert config.mode == ExperimentMode.FIXED_SWEEP
    assert config.n == 24
    assert config.h_list == [0.1, 0.05]
    assert config.problem_options == {"consistent_forcing": True}


def test_bad_problem_option(capsys):
    assert main(["--mode", "check_order", "--problem-option", "oops"]) == EXIT_INVALID


def test_json_formatter_includes_extra_fields():
    """Fields passed through extra= land in the JSON object."""
    record = logging.makeLogRecord(
        {"name": "epirk.test", "levelname": "INFO", "msg": "run end", "matvecs": 42}
    )
    payload = json.loads(JsonFormatter().format(record))
    assert payload["message"] == "run end"
    assert payload["matvecs"] == 42
    assert payload["logger"] == "epirk.test"


def test_config_file_is_validated_on_its_own(tmp_path):
    """A bad value in the file is rejected even when a flag would replace it."""
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps({"n": 0}), encoding="utf-8")
    args = build_parser().parse_args(["--config", str(path), "--n", "24"])
    with pytest.raises(ValidationError):
        config_from_args(args)
    assert main(["--config", str(path), "--n", "24"]) == EXIT_INVALID


def test_config_file_keeps_unset_defaults_overridable(tmp_path):
    """Only keys written in the file take precedence over schema defaults."""
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps({"mode": "check_order"}), encoding="utf-8")
    args = build_parser().parse_args(["--config", str(path), "--method", "EPIRK5s3"])
    config = config_from_args(args)
    assert config.mode == ExperimentMode.CHECK_ORDER
    assert config.method == "EPIRK5s3"
