"""Tests for the experiment harness and its configuration schema."""

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from epirk.exceptions import InvalidArgumentError
from epirk.schemas.experiment import ExperimentConfig, ExperimentMode, ReferenceKind
from epirk.schemas.report import SweepRow
from epirk.schemes.builtin import builtin
from epirk.schemes.tableau_file import dump_tableau
from epirk.services import experiments


def _sweep_config(**overrides):
    values = {
        "problem": "semilinear_parabolic_1d",
        "n": 20,
        "problem_options": {"consistent_forcing": True},
        "method": "EPIRK4s3A",
        "mode": ExperimentMode.FIXED_SWEEP,
        "h_list": [0.1, 0.05, 0.025],
        "krylov_tol": 1e-12,
    }
    values.update(overrides)
    return ExperimentConfig(**values)


def test_fit_slope_recovers_power_law():
    """A clean h^4 error curve has slope 4."""
    steps = [0.1, 0.05, 0.025, 0.0125]
    assert experiments.fit_slope(steps, [3.0 * h**4 for h in steps]) == pytest.approx(4.0)


def test_fit_slope_skips_unusable_points():
    """Zero or non-finite errors are dropped; fewer than two points give None."""
    assert experiments.fit_slope([0.1, 0.05], [1e-3, 0.0]) is None
    assert experiments.fit_slope([0.1, 0.05, 0.025], [1e-2, np.nan, 1e-4]) == pytest.approx(
        np.log(100.0) / np.log(4.0)
    )


def test_write_csv(tmp_path):
    """Rows are written with a header in the given order."""
    rows = [
        SweepRow(h=0.1, error=1e-4, matvecs=40, projections=20, wall_s=0.01),
        SweepRow(h=0.05, error=6e-6, matvecs=80, projections=40, wall_s=0.02),
    ]
    path = tmp_path / "out" / "sweep.csv"
    experiments.write_csv(rows, str(path))
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["h", "error", "matvecs", "projections", "wall_s"]
    assert frame["h"].tolist() == [0.1, 0.05]
    assert experiments.write_csv(rows, None).shape == (2, 5)


def test_run_convergence_on_semilinear_problem(tmp_path):
    """EPIRK4s3A converges at close to fourth order against the exact solution."""
    out = tmp_path / "convergence.csv"
    summary = experiments.run_convergence(_sweep_config(out=str(out)))
    errors = [row.error for row in summary.rows]
    assert summary.reference == "exact"
    assert errors[0] > errors[1] > errors[2]
    assert 3.0 <= summary.slope <= 5.5
    assert len(pd.read_csv(out)) == 3


@pytest.mark.parametrize("name", ["EPIRK5s3", "EXPRB53s3"])
def test_fifth_order_schemes_converge_at_fifth_order(name):
    """Step sizes kept above the rounding floor give slopes near five."""
    config = _sweep_config(n=200, method=name, h_list=[0.2, 0.1, 0.05, 0.025])
    summary = experiments.run_convergence(config)
    assert 4.6 <= summary.slope <= 5.4


def test_exact_reference_requires_exact_solution():
    """Asking for an exact reference on a problem without one fails."""
    config = _sweep_config(problem="adr_2d", n=6, problem_options={}, reference=ReferenceKind.EXACT)
    with pytest.raises(InvalidArgumentError):
        experiments.run_convergence(config)


def test_run_strategy_compare():
    """All strategies agree and keep their projection counts."""
    config = ExperimentConfig(
        problem="allen_cahn_2d",
        n=6,
        t_end=0.1,
        mode=ExperimentMode.STRATEGY_COMPARE,
        h_list=[0.05],
    )
    summary = experiments.run_strategy_compare(config)
    by_strategy = {row.strategy: row for row in summary.rows}
    assert set(by_strategy) == {"vertical", "horizontal", "mixed"}
    assert by_strategy["mixed"].projections_per_step == 2
    assert by_strategy["vertical"].projections_per_step == 3
    assert all(row.max_difference < 1e-8 for row in summary.rows)
    assert summary.notes == []


def test_run_order_reduction_reports_control_slope():
    """The non-homogeneous sweep runs next to its homogeneous control."""
    config = ExperimentConfig(
        problem="allen_cahn_2d_nonhomog",
        n=5,
        t_end=0.2,
        mode=ExperimentMode.ORDER_REDUCTION,
        h_list=[0.1, 0.05],
        reference=ReferenceKind.SELF,
    )
    summary = experiments.run_order_reduction(config)
    assert summary.problem == "allen_cahn_2d_nonhomog"
    assert summary.reference.startswith("self")
    assert summary.slope is not None
    assert summary.control_slope is not None
    assert summary.notes[0].startswith("reduction below declared order")


def test_run_adaptive_sweep():
    """Tighter tolerances take more steps; the estimator slope is fitted."""
    config = ExperimentConfig(
        problem="semilinear_parabolic_1d",
        n=10,
        problem_options={"consistent_forcing": True},
        t_end=0.2,
        mode=ExperimentMode.ADAPTIVE_SWEEP,
        tol_list=[1e-4, 1e-7],
    )
    summary = experiments.run_adaptive_sweep(config)
    loose, tight = summary.rows
    assert tight.steps >= loose.steps
    assert summary.reference == "exact"
    assert summary.estimator_slope is not None


def test_adaptive_tolerance_ladder_tracks_error():
    """Each tenfold tighter tolerance lowers the error, which stays within 100 x tol."""
    config = ExperimentConfig(
        problem="semilinear_parabolic_1d",
        n=20,
        problem_options={"consistent_forcing": True},
        t_end=0.5,
        mode=ExperimentMode.ADAPTIVE_SWEEP,
        tol_list=[1e-3, 1e-4, 1e-5, 1e-6],
    )
    summary = experiments.run_adaptive_sweep(config)
    errors = [row.error for row in summary.rows]
    assert all(looser > tighter for looser, tighter in zip(errors, errors[1:]))
    assert all(row.error <= 100.0 * row.tol for row in summary.rows)


def test_run_single_adaptive():
    """A single run with a tolerance list goes through the adaptive driver."""
    config = ExperimentConfig(problem="allen_cahn_2d", n=6, t_end=0.05, tol_list=[1e-5])
    report = experiments.run_single(config)
    assert report.completed
    assert report.atol == 1e-5
    assert report.h is None


def test_check_order_writes_condition_table(tmp_path):
    """The order report includes the embedded stage and a CSV of residuals."""
    out = tmp_path / "conditions.csv"
    config = ExperimentConfig(mode=ExperimentMode.CHECK_ORDER, out=str(out))
    summary = experiments.check_order(config)
    assert summary.certified_order == 4
    assert summary.embedded_certified_order == 3
    frame = pd.read_csv(out)
    assert "C1" in frame["label"].tolist()


def test_load_method_from_tableau_file(tmp_path):
    """A tableau file takes precedence over the method name."""
    path = tmp_path / "custom.tab"
    path.write_text(dump_tableau(builtin("EPIRK4s3B")), encoding="utf-8")
    config = ExperimentConfig(mode=ExperimentMode.CHECK_ORDER, tableau_file=str(path))
    method = experiments.load_method(config)
    assert method.psi == builtin("EPIRK4s3B").psi


@pytest.mark.parametrize(
    "overrides",
    [
        {"h_list": [0.05, 0.1]},
        {"h_list": [0.1, -0.05]},
        {"h_list": []},
        {"jacobian": "broyden"},
        {"row_evaluation": "exact"},
        {"n": 0},
    ],
)
def test_config_validation(overrides):
    """Malformed sweeps and unknown options are rejected at load time."""
    with pytest.raises(ValidationError):
        _sweep_config(**overrides)


def test_adaptive_sweep_needs_tolerances():
    with pytest.raises(ValidationError):
        ExperimentConfig(mode=ExperimentMode.ADAPTIVE_SWEEP)


def test_config_from_file(tmp_path):
    """JSON configuration files round through the schema."""
    path = tmp_path / "experiment.json"
    path.write_text(
        '{"mode": "fixed_sweep", "h_list": [0.2, 0.1], "strategy": "vertical"}',
        encoding="utf-8",
    )
    config = ExperimentConfig.from_file(path)
    assert config.mode == ExperimentMode.FIXED_SWEEP
    assert config.strategy.value == "vertical"
    assert config.method == "EPIRK4s3A"
