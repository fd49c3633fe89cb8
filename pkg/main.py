# main.py
"""
collapse-lab 명령행 진입점.

    python main.py analytic --model c2 --p 0.4 --lambda 1 --r 1
    python main.py simulate --model c2 --p 0.4 --lambda 1 --r 1 --n 100000 --seed 42
    python main.py sweep --kind critical --model c2 --r 1 --p 0.1:0.9:9 -o c.csv
    python main.py validate

종료 코드: 0 정상, 1 사용법/파라미터 오류, 2 수치 또는 입출력 실패, 3 검증 실패.
"""

import argparse
import logging
import sys
import time
from fractions import Fraction
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from config import settings
from core import analytic, offspring, simulate, sweep, validation
from core.schemas import Model, ModelParams, RunReport, SimConfig, SweepAxis, round_sig
from utils.error_handler import CollapseLabError, ConvergenceError, ParameterDomainError
from utils.logger import setup_logger
from utils.table_writer import TableWriter

logger = logging.getLogger(__name__)

FLAG_NAMES = {"p": "--p", "r": "--r", "lam": "--lambda", "lambda": "--lambda", "m": "--m"}


class CliParser(argparse.ArgumentParser):
    """사용법 오류를 종료 코드 1로 보고하는 파서."""

    def error(self, message: str):
        raise ParameterDomainError(message)


# ---------------------------------------------------------------------------
# 인자 해석
# ---------------------------------------------------------------------------

def parse_axis(text: str, name: str) -> SweepAxis:
    """'min:max:steps' (선형 격자) 또는 'a:b' (정수 범위)."""
    parts = text.split(":")
    try:
        if len(parts) == 3:
            return SweepAxis(name=name, min=float(parts[0]), max=float(parts[1]), steps=int(parts[2]))
        if len(parts) == 2:
            return SweepAxis.integer_range(name, int(parts[0]), int(parts[1]))
    except (ValueError, ValidationError) as e:
        raise ParameterDomainError(f"invalid axis for --{name}: {text!r} ({e})") from e
    raise ParameterDomainError(f"invalid axis for --{name}: {text!r} (expected min:max:steps or a:b)")


def build_params(p: Optional[float], r: Optional[float], lam: Optional[float], m: Optional[int]) -> ModelParams:
    for flag, value in (("--p", p), ("--lambda", lam), ("--r", r)):
        if value is None:
            raise ParameterDomainError(f"{flag} is required")
    try:
        return ModelParams(p=p, r=r, lam=lam, m=m)
    except ValidationError as e:
        first = e.errors()[0]
        field = str(first["loc"][0]) if first.get("loc") else "?"
        flag = FLAG_NAMES.get(field, field)
        raise ParameterDomainError(f"invalid value for {flag}: {first['msg']}") from e


def _check_model_degree(model: Model, m: Optional[int]) -> None:
    if model == Model.C3 and m is None:
        raise ParameterDomainError("--m is required for --model c3")
    if model != Model.C3 and m is not None:
        raise ParameterDomainError(f"--m only applies to --model c3, got --model {model.value}")


def _rounded(data: Any) -> Any:
    if isinstance(data, dict):
        return {key: _rounded(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [_rounded(value) for value in data]
    if isinstance(data, bool) or not isinstance(data, float):
        return data
    return round_sig(data)


def _params_echo(model: Model, params: ModelParams) -> Dict[str, Any]:
    echo = {"model": model.value, "p": params.p, "lambda": params.lam, "r": params.r}
    if params.m is not None:
        echo["m"] = params.m
    return echo


def _p_rounding_note(p: float) -> Optional[str]:
    """p 가 간단한 분수를 반올림한 값으로 보이면 그 차이를 알려 주는 문구."""
    nearest = Fraction(p).limit_denominator(settings.P_NOTE_MAX_DENOMINATOR)
    gap = p - float(nearest)
    if gap == 0.0 or abs(gap) > settings.P_NOTE_TOL:
        return None
    return f"p={p!r} is {nearest} rounded (difference {gap:.3g}); results are exact for p as given"


# ---------------------------------------------------------------------------
# 명령
# ---------------------------------------------------------------------------

def cmd_analytic(args: argparse.Namespace) -> RunReport:
    model = Model(args.model)
    _check_model_degree(model, args.m)
    params = build_params(args.p, args.r, args.lam, args.m)

    estimate = analytic.extinction_probability(model, params, tol=args.tol)
    results: Dict[str, Any] = {
        "extinction_probability": estimate.probability,
        "method": estimate.method.value,
        "survives": analytic.survives(model, params),
        "mean_offspring": None if model == Model.C1 else offspring.mean_offspring(model, params),
    }
    diagnostics: Dict[str, Any] = {"iterations": estimate.iterations, "tol": args.tol}
    note = _p_rounding_note(params.p)
    if note is not None:
        logger.info(note)
        diagnostics["p_note"] = note
    if estimate.reference is not None:
        diagnostics["closed_form"] = estimate.reference
    if model == Model.C1:
        diagnostics["drift_threshold"] = analytic.drift_threshold_C1(params)
    if args.critical:
        rate = analytic.critical_lambda(model, params.p, params.r, params.m)
        results["critical_lambda"] = rate.value
        diagnostics["critical_solver"] = rate.solver.value
    echo = _params_echo(model, params)
    echo["p_input"] = repr(args.p)
    return RunReport(command="analytic", params=echo, results=results, diagnostics=diagnostics)


def _sim_config(args: argparse.Namespace) -> SimConfig:
    try:
        return SimConfig(
            replicates=args.n,
            base_seed=args.seed,
            generation_cap=args.gen_cap,
            population_cap=args.pop_cap,
            step_cap=args.step_cap,
        )
    except ValidationError as e:
        first = e.errors()[0]
        field = str(first["loc"][0]) if first.get("loc") else "?"
        raise ParameterDomainError(f"invalid simulation setting {field}: {first['msg']}") from e


def cmd_simulate(args: argparse.Namespace) -> RunReport:
    model = Model(args.model)
    _check_model_degree(model, args.m)
    params = build_params(args.p, args.r, args.lam, args.m)
    config = _sim_config(args)

    estimate = simulate.estimate_extinction(model, params, config)
    results = {
        "estimate": estimate.probability,
        "ci_half_width": estimate.ci_half_width,
        "censored_fraction": estimate.censored_fraction,
        "escaped_fraction": estimate.escaped_fraction,
        "mean_extinction_steps": estimate.mean_extinction_steps,
        "analytic_reference": estimate.reference,
    }
    diagnostics = {
        "replicates": config.replicates,
        "generation_cap": config.generation_cap,
        "population_cap": config.population_cap,
        "step_cap": config.step_cap,
        "escape_tolerance": config.escape_tolerance,
        "reliable": estimate.censored_fraction <= settings.UNRELIABLE_CENSORED_FRACTION,
    }
    return RunReport(
        command="simulate",
        params=_params_echo(model, params),
        results=results,
        seed=config.base_seed,
        diagnostics=diagnostics,
    )


def cmd_sweep(args: argparse.Namespace) -> RunReport:
    if args.p is None:
        raise ParameterDomainError("--p axis is required")
    p_axis = parse_axis(args.p, "p")
    r = 1.0 if args.r is None else args.r
    if not 0.0 <= r <= 1.0:
        raise ParameterDomainError(f"invalid value for --r: {r} (expected 0 <= r <= 1)")

    if args.kind == "strategy":
        if args.m is None:
            raise ParameterDomainError("--m a:b is required for --kind strategy")
        table = sweep.strategy_comparison(parse_axis(args.m, "m"), p_axis, r=r)
    else:
        if args.model is None:
            raise ParameterDomainError(f"--model is required for --kind {args.kind}")
        model = Model(args.model)
        m = _parse_degree(args.m)
        _check_model_degree(model, m)
        if args.kind == "critical":
            table = sweep.critical_curve_table(model, r, p_axis, m=m)
        else:
            if args.lam is None:
                raise ParameterDomainError("--lambda axis is required for --kind phase")
            table = sweep.phase_grid(
                model, r, p_axis, parse_axis(args.lam, "lambda"), m=m, with_extinction=args.with_extinction
            )

    path = TableWriter().save_table(table, args.out)
    params = {"kind": args.kind, "model": args.model, "r": r, "m": args.m, "p": args.p, "lambda": args.lam}
    results = {"rows": len(table.cells), "label_counts": table.label_counts(), "output": path}
    return RunReport(command="sweep", params=params, results=results, diagnostics=table.metadata)


def _parse_degree(text: Optional[str]) -> Optional[int]:
    if text is None:
        return None
    try:
        return int(text)
    except ValueError as e:
        raise ParameterDomainError(f"invalid value for --m: {text!r}") from e


def cmd_validate(args: argparse.Namespace) -> RunReport:
    results = validation.run_checks(args.checks)
    print(validation.format_table(results), file=sys.stderr if args.json else sys.stdout)
    validation.ensure_passed(results)
    report = RunReport(
        command="validate",
        results={result.name: result.passed for result in results},
        diagnostics={result.name: result.detail for result in results},
    )
    report.diagnostics["passed"] = sum(result.passed for result in results)
    report.diagnostics["total"] = len(results)
    return report


COMMANDS = {
    "analytic": cmd_analytic,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------------------
# 파서
# ---------------------------------------------------------------------------

def _add_model_args(parser: argparse.ArgumentParser, required_model: bool = True) -> None:
    parser.add_argument("--model", choices=[model.value for model in Model], required=required_model)
    parser.add_argument("--p", type=float, help="survival probability per exposure, 0 < p < 1")
    parser.add_argument("--lambda", dest="lam", type=float, help="birth rate, > 0")
    parser.add_argument("--r", type=float, help="geometric-effect weight, 0 <= r <= 1")
    parser.add_argument("--m", type=int, help="graph degree (c3 only)")


def build_parser() -> CliParser:
    parser = CliParser(prog="collapse-lab", description="Extinction analysis for populations under collapses")
    parser.add_argument("--json", action="store_true", help="print the run report as JSON")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.APP_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    analytic_parser = subparsers.add_parser("analytic", help="closed-form / fixed-point extinction probability")
    _add_model_args(analytic_parser)
    analytic_parser.add_argument("--tol", type=float, default=settings.FIXED_POINT_TOL)
    analytic_parser.add_argument("--critical", action="store_true", help="also report the critical birth rate")

    simulate_parser = subparsers.add_parser("simulate", help="Monte Carlo extinction estimate")
    _add_model_args(simulate_parser)
    simulate_parser.add_argument("--n", type=int, default=settings.DEFAULT_REPLICATES, help="replicates")
    simulate_parser.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    simulate_parser.add_argument("--gen-cap", type=int, default=settings.DEFAULT_GENERATION_CAP)
    simulate_parser.add_argument("--pop-cap", type=int, default=settings.DEFAULT_POPULATION_CAP)
    simulate_parser.add_argument("--step-cap", type=int, default=settings.DEFAULT_STEP_CAP)

    sweep_parser = subparsers.add_parser("sweep", help="parameter grids written as CSV")
    sweep_parser.add_argument("--kind", choices=["phase", "critical", "strategy"], required=True)
    sweep_parser.add_argument("--model", choices=[model.value for model in Model])
    sweep_parser.add_argument("--p", help="p axis min:max:steps")
    sweep_parser.add_argument("--lambda", dest="lam", help="lambda axis min:max:steps (phase)")
    sweep_parser.add_argument("--r", type=float, help="geometric-effect weight (default 1)")
    sweep_parser.add_argument("--m", help="graph degree, or a:b range for --kind strategy")
    sweep_parser.add_argument("--with-extinction", action="store_true", help="phase cells carry extinction probability")
    sweep_parser.add_argument("-o", "--out", help="output path (.csv, or .xlsx for Excel)")

    validate_parser = subparsers.add_parser("validate", help="run the built-in cross-check suite")
    validate_parser.add_argument("--checks", nargs="*", choices=validation.check_names(), help="subset of checks")

    return parser


def _print_human(report: RunReport) -> None:
    if report.command == "validate":
        print(f"{report.diagnostics['passed']}/{report.diagnostics['total']} checks passed")
        return
    if report.command == "analytic":
        rho = report.results["extinction_probability"]
        print(f"rho = {rho}")
        if "p_note" in report.diagnostics:
            print(f"note: {report.diagnostics['p_note']}")
    elif report.command == "simulate":
        results = report.results
        print(f"estimate = {results['estimate']} +/- {results['ci_half_width']}")
        print(f"censored_fraction = {results['censored_fraction']}")
        if results["analytic_reference"] is not None:
            print(f"analytic = {results['analytic_reference']}")
    for key, value in report.results.items():
        if report.command == "analytic" and key == "extinction_probability":
            continue
        if report.command == "simulate" and key in ("estimate", "ci_half_width", "censored_fraction", "analytic_reference"):
            continue
        print(f"{key} = {value}")


def run(argv: Optional[List[str]] = None) -> int:
    """명령을 실행하고 종료 코드를 반환합니다."""
    try:
        args = build_parser().parse_args(argv)
    except ParameterDomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return ParameterDomainError.exit_code

    setup_logger("DEBUG" if args.verbose else None)
    started = time.perf_counter()
    try:
        report = COMMANDS[args.command](args)
    except CollapseLabError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    report.results = _rounded(report.results)
    report.params = _rounded(report.params)
    report.diagnostics = _rounded(report.diagnostics)
    report.wall_time = round(time.perf_counter() - started, 6)

    if args.json:
        print(report.model_dump_json(indent=2))
    else:
        _print_human(report)

    if args.command == "simulate" and not report.diagnostics.get("reliable", True):
        logger.error(
            f"censored fraction {report.results['censored_fraction']} exceeds "
            f"{settings.UNRELIABLE_CENSORED_FRACTION}; estimate is unreliable"
        )
        return ConvergenceError.exit_code
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
