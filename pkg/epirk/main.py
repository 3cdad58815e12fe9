"""Command-line entry point for the experiment harness."""

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel, ValidationError

from epirk.config import settings
from epirk.exceptions import (
    AcceptanceFailureError,
    EpirkError,
    IntegrationError,
    KrylovBudgetExceededError,
    NumericFailureError,
    StiffnessFailureError,
)
from epirk.models.method import summarize
from epirk.problems import problem_names
from epirk.schemas.experiment import ExperimentConfig, ExperimentMode
from epirk.schemes.builtin import BUILTIN_NAMES, builtin
from epirk.services import experiments

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ACCEPTANCE = 2
EXIT_NUMERIC = 3

# Attributes every LogRecord has; anything else came in through ``extra=``
_RECORD_FIELDS = set(vars(logging.makeLogRecord({}))) | {"message", "asctime"}


class JsonFormatter(logging.Formatter):
    """One JSON object per record, including ``extra=`` fields."""

    def format(self, record: logging.LogRecord) -> str:
        payload: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for key, value in vars(record).items():
            if key not in _RECORD_FIELDS:
                payload[key] = value
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str)


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    """Install a stderr handler on the package logger."""
    package_logger = logging.getLogger("epirk")
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    if (fmt or settings.LOG_FORMAT) == "json":
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    package_logger.addHandler(handler)
    package_logger.setLevel((level or settings.LOG_LEVEL).upper())
    package_logger.propagate = False


def _option_value(text: str) -> Any:
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def _problem_options(pairs: Sequence[str]) -> Dict[str, Any]:
    options = {}
    for pair in pairs:
        if "=" not in pair:
            raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        options[key.strip()] = _option_value(value.strip())
    return options


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epirk",
        description="EPIRK exponential integrators: convergence, strategy and order studies",
    )
    parser.add_argument("command", nargs="?", choices=["run", "list"], default="run")
    parser.add_argument("--config", help="JSON experiment configuration file")
    parser.add_argument("--problem", help=f"one of: {', '.join(problem_names())}")
    parser.add_argument("--n", type=int, help="grid points per side (2D) or nodes (1D)")
    parser.add_argument(
        "--problem-option",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="extra problem argument, e.g. consistent_forcing=true",
    )
    parser.add_argument("--method", help=f"built-in method: {', '.join(BUILTIN_NAMES)}")
    parser.add_argument("--tableau-file", help="tableau text file instead of --method")
    parser.add_argument("--strategy", choices=["vertical", "horizontal", "mixed"])
    parser.add_argument("--mode", choices=[m.value for m in ExperimentMode])
    parser.add_argument("--h-list", type=float, nargs="+", help="decreasing step sizes")
    parser.add_argument("--tol-list", type=float, nargs="+", help="decreasing tolerances")
    parser.add_argument("--krylov-tol", type=float)
    parser.add_argument("--t-end", type=float)
    parser.add_argument("--h-ref", type=float, help="step of the self-reference run")
    parser.add_argument("--reference", choices=["auto", "exact", "self"])
    parser.add_argument("--jacobian", choices=["analytic", "fd"])
    parser.add_argument("--row-evaluation", choices=["combination", "rewrite"])
    parser.add_argument("--rule-set", choices=["epirk", "exprb"], default="epirk")
    parser.add_argument(
        "--expect-slope",
        type=float,
        nargs=2,
        metavar=("LOW", "HIGH"),
        help="acceptance band for the fitted slope",
    )
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="CSV output path")
    parser.add_argument("--report-json", help="JSON report output path")
    parser.add_argument("--log-level")
    parser.add_argument("--log-format", choices=["json", "text"])
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Merge a config file (if any) with command-line flags; flags win."""
    base: Dict[str, Any] = {}
    if args.config:
        base = ExperimentConfig.from_file(args.config).model_dump(exclude_unset=True)
    flags = {
        "problem": args.problem,
        "n": args.n,
        "method": args.method,
        "tableau_file": args.tableau_file,
        "strategy": args.strategy,
        "mode": args.mode,
        "h_list": args.h_list,
        "tol_list": args.tol_list,
        "krylov_tol": args.krylov_tol,
        "t_end": args.t_end,
        "h_ref": args.h_ref,
        "reference": args.reference,
        "jacobian": args.jacobian,
        "row_evaluation": args.row_evaluation,
        "seed": args.seed,
        "out": args.out,
        "report_json": args.report_json,
    }
    base.update({key: value for key, value in flags.items() if value is not None})
    if args.problem_option:
        options = dict(base.get("problem_options", {}))
        options.update(_problem_options(args.problem_option))
        base["problem_options"] = options
    return ExperimentConfig.model_validate(base)


def _listing() -> str:
    lines = ["methods:"]
    for name in BUILTIN_NAMES:
        s = summarize(builtin(name))
        embedded = ", embedded estimator" if s.has_embedded else ""
        lines.append(f"  {s.name}: stiff order {s.stiff_order}, {s.strategy_hint}{embedded}")
    lines.append("problems:")
    lines += [f"  {name}" for name in problem_names()]
    return "\n".join(lines)


def _emit(result: BaseModel, config: ExperimentConfig) -> None:
    text = result.model_dump_json(indent=2)
    if config.report_json:
        Path(config.report_json).parent.mkdir(parents=True, exist_ok=True)
        Path(config.report_json).write_text(text + "\n", encoding="utf-8")
    print(text)


def _check_slope(slope: Optional[float], band: Optional[List[float]]) -> None:
    if band is None:
        return
    low, high = band
    if slope is None or not low <= slope <= high:
        raise AcceptanceFailureError(f"fitted slope {slope} outside [{low}, {high}]")


def run(
    config: ExperimentConfig, rule_set: str = "epirk", band: Optional[List[float]] = None
) -> None:
    """Dispatch one experiment and print its JSON result."""
    logger.info("experiment start", extra={"mode": config.mode.value, "problem": config.problem})
    if config.mode == ExperimentMode.CHECK_ORDER:
        summary = experiments.check_order(config, rule_set=rule_set)
        _emit(summary, config)
        if summary.certified_order < summary.declared_order:
            raise AcceptanceFailureError(
                f"{summary.method}: certified order {summary.certified_order} "
                f"below declared {summary.declared_order}"
            )
        return
    if config.mode == ExperimentMode.SINGLE_RUN:
        _emit(experiments.run_single(config), config)
        return

    runners = {
        ExperimentMode.FIXED_SWEEP: experiments.run_convergence,
        ExperimentMode.STRATEGY_COMPARE: experiments.run_strategy_compare,
        ExperimentMode.ORDER_REDUCTION: experiments.run_order_reduction,
        ExperimentMode.ADAPTIVE_SWEEP: experiments.run_adaptive_sweep,
    }
    summary = runners[config.mode](config)
    _emit(summary, config)
    if config.mode in (ExperimentMode.FIXED_SWEEP, ExperimentMode.ORDER_REDUCTION):
        _check_slope(summary.slope, band)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level, args.log_format)

    if args.command == "list":
        print(_listing())
        return EXIT_OK
    try:
        config = config_from_args(args)
        run(config, rule_set=args.rule_set, band=args.expect_slope)
    except AcceptanceFailureError as exc:
        print(f"acceptance failure: {exc}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except (
        NumericFailureError,
        KrylovBudgetExceededError,
        StiffnessFailureError,
        IntegrationError,
    ) as exc:
        logger.error("numeric failure", extra={"error": str(exc)})
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EpirkError, ValidationError, argparse.ArgumentTypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
