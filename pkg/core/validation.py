"""
내장 교차 검증 스위트.

닫힌 형태, 수치 해법, 소규모 몬테카를로, 사건 수준 오라클을 서로 대조하는 이름 붙은 검사들을
실행하고 통과/실패 표를 만듭니다. 하나라도 실패하면 ValidationFailure 로 보고합니다.
"""

import logging
import math
import time
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from config import settings
from core import analytic, offspring, simulate, sweep
from core.schemas import Model, ModelParams, SimConfig, SweepAxis
from utils.error_handler import CollapseLabError, ValidationFailure

logger = logging.getLogger(__name__)

GOLDEN_TOL = 1e-10
CRITICAL_TOL = 1e-9
LARGE_DEGREE_GAP = 1e-2
PGF_UNIT_TOL = 1e-12
MC_SIGMAS = 4.0
MC_MAX_CENSORED = 0.02
ORACLE_TV = 0.01

VALIDATION_SEED = 20240611
MC_REPLICATES = 100000
MC_TIME_BUDGET = 60.0  # 세 사례 합계 (초)
ORACLE_SAMPLES = 100000

P_GRID = [round(0.1 * k, 10) for k in range(1, 10)]
LAMBDA_GRID = [0.25, 1.0, 4.0]
R_GRID = [0.0, 0.5, 1.0]


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""
    elapsed: float = 0.0


CheckFn = Callable[[], Tuple[bool, str]]
_REGISTRY: Dict[str, CheckFn] = {}


def check(name: str) -> Callable[[CheckFn], CheckFn]:
    def register(func: CheckFn) -> CheckFn:
        _REGISTRY[name] = func
        return func

    return register


def check_names() -> List[str]:
    return list(_REGISTRY)


def _worst(deviations: List[float]) -> float:
    return max(deviations) if deviations else 0.0


# ---------------------------------------------------------------------------
# 소멸 확률 골든 값
# ---------------------------------------------------------------------------

def c2_example_closed_form(r: float) -> float:
    """p = 2/5, lambda = 1 에서의 구간별 닫힌 형태."""
    if r <= 7.0 / 12.0:
        return 1.0
    return (12.0 * r + 49.0 - math.sqrt(144.0 * r * r + 1176.0 * r + 49.0)) / 28.0


def c3_example_closed_form(r: float) -> float:
    """p = 2/3, lambda = 1, m = 3 에서의 닫힌 형태."""
    root = math.sqrt(22.0 * (14000.0 + 9375.0 * r + 792.0 * r * r))
    return (-440.0 - 132.0 * r + root) / (2.0 * (80.0 + 63.0 * r))


@check("example-2.4-golden")
def _c2_golden() -> Tuple[bool, str]:
    deviations = []
    for k in range(11):
        r = k / 10.0
        params = ModelParams.build(p=0.4, r=r, lam=1.0)
        deviations.append(abs(analytic.extinction_C2(params).probability - c2_example_closed_form(r)))
    worst = _worst(deviations)
    return worst < GOLDEN_TOL, f"max |diff| = {worst:.3g} over 11 values of r"


@check("example-2.8-golden")
def _c3_golden() -> Tuple[bool, str]:
    deviations = []
    for r in (0.0, 0.25, 0.5, 0.75, 1.0):
        params = ModelParams.build(p=2.0 / 3.0, r=r, lam=1.0, m=3)
        deviations.append(abs(analytic.extinction_C3(params).probability - c3_example_closed_form(r)))
    worst = _worst(deviations)
    return worst < GOLDEN_TOL, f"max |diff| = {worst:.3g} over 5 values of r"


@check("c2-closed-form-endpoints")
def _c2_endpoints() -> Tuple[bool, str]:
    deviations = []
    for p in P_GRID:
        for lam in LAMBDA_GRID:
            q = 1.0 - p
            pure_binomial = min(q / (lam * p), 1.0)
            pure_geometric = min(q * (lam + 1.0) / (lam * (1.0 + lam * p)), 1.0)
            binomial = analytic.extinction_C2(ModelParams.build(p=p, r=0.0, lam=lam)).probability
            geometric = analytic.extinction_C2(ModelParams.build(p=p, r=1.0, lam=lam)).probability
            deviations.append(abs(binomial - pure_binomial))
            deviations.append(abs(geometric - pure_geometric))
    worst = _worst(deviations)
    return worst < GOLDEN_TOL, f"max |diff| = {worst:.3g} over {len(deviations)} comparisons"


@check("c1-closed-form")
def _c1_closed_form() -> Tuple[bool, str]:
    failures = 0
    for p in P_GRID:
        for lam in LAMBDA_GRID:
            for r in R_GRID:
                params = ModelParams.build(p=p, r=r, lam=lam)
                rho = analytic.extinction_C1(params).probability
                expected = 1.0 if r < 1.0 else min((1.0 - p) / (lam * p), 1.0)
                alive = analytic.survives_C1(params)
                if abs(rho - expected) > GOLDEN_TOL or alive != (rho < 1.0 - settings.SURVIVAL_MARGIN):
                    failures += 1
    return failures == 0, f"{failures} mismatches"


@check("survival-matches-fixed-point")
def _survival_consistency() -> Tuple[bool, str]:
    mismatches = []
    cases = 0
    for p in P_GRID:
        for lam in LAMBDA_GRID:
            for r in R_GRID:
                settings_list = [(Model.C2, None)] + [(Model.C3, m) for m in range(1, 9)]
                for model, m in settings_list:
                    params = ModelParams.build(p=p, r=r, lam=lam, m=m)
                    rho = analytic.extinction_probability(model, params).probability
                    cases += 1
                    if analytic.survives(model, params) != (rho < 1.0 - settings.SURVIVAL_MARGIN):
                        mismatches.append(f"{model.value}(p={p}, lambda={lam}, r={r}, m={m})")
    detail = f"{len(mismatches)} of {cases} disagree"
    if mismatches:
        detail += f": {', '.join(mismatches[:3])}"
    return not mismatches, detail


@check("extinction-ordering")
def _extinction_ordering() -> Tuple[bool, str]:
    violations = 0
    for p in P_GRID:
        for lam in LAMBDA_GRID:
            params = ModelParams.build(p=p, r=0.5, lam=lam)
            gap = analytic.binomial_vs_geometric_gap(params)
            if gap < -GOLDEN_TOL or (p > 1.0 / (1.0 + lam + lam * lam) and not gap > 0.0):
                violations += 1
            for r in R_GRID:
                if analytic.dispersion_gain(params.replace(r=r)) < -GOLDEN_TOL:
                    violations += 1
    return violations == 0, f"{violations} ordering violations"


# ---------------------------------------------------------------------------
# 임계 출생률
# ---------------------------------------------------------------------------

@check("critical-closed-forms")
def _critical_closed_forms() -> Tuple[bool, str]:
    deviations = []
    for p in P_GRID:
        cases = [(Model.C1, None), (Model.C2, None)] + [(Model.C3, m) for m in range(2, 9)]
        for model, m in cases:
            solved = analytic.critical_lambda(model, p, 1.0, m).as_float()
            expected = analytic.critical_lambda_closed_form_r1(model, p, m).as_float()
            deviations.append(abs(solved - expected))
    worst = _worst(deviations)
    return worst < CRITICAL_TOL, f"max |diff| = {worst:.3g} over {len(deviations)} rates"


@check("critical-ordering")
def _critical_ordering() -> Tuple[bool, str]:
    violations = []
    for p in (0.1, 0.3, 0.5, 0.7, 0.9):
        for r in R_GRID:
            previous = analytic.critical_lambda(Model.C3, p, r, 2).as_float()
            floor = analytic.critical_lambda(Model.C2, p, r).as_float()
            if not floor > 0.0:
                violations.append(f"lambda2 <= 0 at p={p}, r={r}")
            for m in range(3, 11):
                current = analytic.critical_lambda(Model.C3, p, r, m).as_float()
                if not (floor < current < previous):
                    violations.append(f"p={p}, r={r}, m={m}")
                previous = current
            if not analytic.critical_lambda(Model.C3, p, r, 1).is_infinite:
                violations.append(f"m=1 finite at p={p}, r={r}")
    return not violations, f"{len(violations)} violations" + (f": {violations[0]}" if violations else "")


@check("critical-monotonicity")
def _critical_monotonicity() -> Tuple[bool, str]:
    violations = []
    cases = [(Model.C1, None), (Model.C2, None)] + [(Model.C3, m) for m in range(2, 6)]
    for model, m in cases:
        for r in R_GRID:
            rates = [analytic.critical_lambda(model, p, r, m).as_float() for p in P_GRID]
            if any(later > earlier + CRITICAL_TOL for earlier, later in zip(rates, rates[1:])):
                violations.append(f"{model.value} m={m} r={r} increases in p")
        for p in P_GRID:
            rates = [analytic.critical_lambda(model, p, r, m).as_float() for r in R_GRID]
            if any(later > earlier + CRITICAL_TOL for earlier, later in zip(rates, rates[1:])):
                violations.append(f"{model.value} m={m} p={p} increases in r")
    return not violations, f"{len(violations)} violations" + (f": {violations[0]}" if violations else "")


@check("critical-large-degree-limit")
def _large_degree_limit() -> Tuple[bool, str]:
    gaps = []
    for p in (0.1, 0.3, 0.5, 0.7, 0.9):
        for r in R_GRID:
            large = analytic.critical_lambda(Model.C3, p, r, 1000).as_float()
            gaps.append(large - analytic.critical_lambda(Model.C2, p, r).as_float())
    worst = _worst(gaps)
    return 0.0 < min(gaps) and worst < LARGE_DEGREE_GAP, f"max gap = {worst:.3g}"


@check("strategy-boundary")
def _strategy_boundary() -> Tuple[bool, str]:
    p_axis = SweepAxis(name="p", min=0.001, max=0.999, steps=999)
    table = sweep.strategy_comparison(SweepAxis.integer_range("m", 3, 10), p_axis, r=1.0)
    step = (p_axis.max - p_axis.min) / (p_axis.steps - 1)
    misses = []
    for m, found in sweep.strategy_boundary(table).items():
        expected = sweep.expected_strategy_boundary(m)
        if found is None or abs(found - expected) > step + 1e-12:
            misses.append(f"m={m}: {found} vs {expected:.6f}")
    return not misses, f"{len(misses)} boundaries off by more than one step" + (f": {misses[0]}" if misses else "")


# ---------------------------------------------------------------------------
# PGF / drift
# ---------------------------------------------------------------------------

@check("pgf-validity")
def _pgf_validity() -> Tuple[bool, str]:
    problems = []
    for p in (0.1, 0.4, 2.0 / 3.0, 0.9):
        for lam in LAMBDA_GRID:
            for r in R_GRID:
                c2 = ModelParams.build(p=p, r=r, lam=lam)
                if abs(offspring.pgf_C2(1.0, c2) - 1.0) > PGF_UNIT_TOL:
                    problems.append(f"c2 pgf(1) at {c2}")
                for m in range(1, 9):
                    c3 = c2.replace(m=m)
                    coefficients = offspring.offspring_C3_coefficients(c3)
                    if np.any(coefficients < 0.0):
                        problems.append(f"negative coefficient at {c3}")
                    if abs(offspring.pgf_C3(1.0, c3) - 1.0) > PGF_UNIT_TOL:
                        problems.append(f"c3 pgf(1) at {c3}")
                    for s in (0.0, 0.3, 0.7, 1.0):
                        if abs(offspring.pgf_C3_theorem_form(s, c3) - offspring.pgf_C3(s, c3)) > GOLDEN_TOL:
                            problems.append(f"theorem form at s={s}, {c3}")
                            break
    return not problems, f"{len(problems)} problems" + (f": {problems[0]}" if problems else "")


@check("drift-bruteforce")
def _drift_bruteforce() -> Tuple[bool, str]:
    deviations = []
    threshold_failures = 0
    for p in (0.2, 0.5, 0.8):
        for lam in (0.5, 2.0):
            for r in R_GRID:
                params = ModelParams.build(p=p, r=r, lam=lam)
                for i in range(1, 101):
                    deviations.append(abs(analytic.drift_C1(i, params) - analytic.drift_C1_bruteforce(i, params)))
                if r < 1.0:
                    threshold = analytic.drift_threshold_C1(params)
                    if threshold is None or any(
                        analytic.drift_C1(i, params) >= 0.0 for i in range(threshold, 2 * threshold + 100)
                    ):
                        threshold_failures += 1
    worst = _worst(deviations)
    return worst < GOLDEN_TOL and threshold_failures == 0, (
        f"max |diff| = {worst:.3g}, {threshold_failures} threshold failures"
    )


# ---------------------------------------------------------------------------
# 몬테카를로
# ---------------------------------------------------------------------------

MC_CASES = [
    (Model.C2, ModelParams.build(p=0.4, r=1.0, lam=1.0)),
    (Model.C3, ModelParams.build(p=2.0 / 3.0, r=0.0, lam=1.0, m=3)),
    (Model.C1, ModelParams.build(p=0.5, r=1.0, lam=3.0)),
]


@check("monte-carlo-vs-analytic")
def _monte_carlo() -> Tuple[bool, str]:
    config = SimConfig(replicates=MC_REPLICATES, base_seed=VALIDATION_SEED)
    parts = []
    passed = True
    started = time.perf_counter()
    for model, params in MC_CASES:
        estimate = simulate.estimate_extinction(model, params, config)
        exact = analytic.extinction_probability(model, params).probability
        standard_error = math.sqrt(max(exact * (1.0 - exact), 1e-12) / config.replicates)
        ok = abs(estimate.probability - exact) <= MC_SIGMAS * standard_error
        ok = ok and estimate.censored_fraction < MC_MAX_CENSORED
        passed = passed and ok
        parts.append(f"{model.value}: {estimate.probability:.4f} vs {exact:.4f}")
    elapsed = time.perf_counter() - started
    parts.append(f"{config.replicates} replicates each in {elapsed:.1f}s")
    return passed and elapsed < MC_TIME_BUDGET, "; ".join(parts)


ORACLE_CASES = [
    (Model.C2, ModelParams.build(p=0.4, r=0.0, lam=1.0)),
    (Model.C2, ModelParams.build(p=0.4, r=0.5, lam=1.0)),
    (Model.C2, ModelParams.build(p=0.5, r=1.0, lam=2.0)),
    (Model.C3, ModelParams.build(p=2.0 / 3.0, r=0.0, lam=1.0, m=3)),
    (Model.C3, ModelParams.build(p=0.5, r=0.5, lam=2.0, m=5)),
    (Model.C3, ModelParams.build(p=2.0 / 3.0, r=1.0, lam=1.0, m=3)),
]


@check("oracle-total-variation")
def _oracle() -> Tuple[bool, str]:
    distances = [
        simulate.oracle_distance(model, params, ORACLE_SAMPLES, VALIDATION_SEED + index)
        for index, (model, params) in enumerate(ORACLE_CASES)
    ]
    worst = _worst(distances)
    return worst < ORACLE_TV, f"max TV distance = {worst:.4f} over {len(distances)} laws"


@check("determinism")
def _determinism() -> Tuple[bool, str]:
    model, params = MC_CASES[0]
    results = []
    for threads in (1, 4):
        config = SimConfig(replicates=5000, base_seed=VALIDATION_SEED, threads=threads)
        results.append(simulate.estimate_extinction(model, params, config).model_dump())
    p_axis = SweepAxis(name="p", min=0.1, max=0.9, steps=5)
    lambda_axis = SweepAxis(name="lambda", min=0.25, max=4.0, steps=5)
    tables = [
        sweep.phase_grid(Model.C2, 1.0, p_axis, lambda_axis, with_extinction=True, threads=threads).to_frame()
        for threads in (1, 4)
    ]
    same_sim = results[0] == results[1]
    same_sweep = tables[0].equals(tables[1])
    return same_sim and same_sweep, f"simulate identical: {same_sim}, sweep identical: {same_sweep}"


# ---------------------------------------------------------------------------
# 실행
# ---------------------------------------------------------------------------

def run_checks(names: Optional[List[str]] = None) -> List[CheckResult]:
    """
    등록된 검사를 순서대로 실행합니다. 검사 중 발생한 예외는 실패로 기록합니다.

    Args:
        names: 실행할 검사 이름 목록 (None이면 전부)

    Returns:
        CheckResult 목록
    """
    selected = names or check_names()
    unknown = [name for name in selected if name not in _REGISTRY]
    if unknown:
        raise ValueError(f"unknown checks: {', '.join(unknown)}")

    results = []
    for name in selected:
        started = time.perf_counter()
        try:
            passed, detail = _REGISTRY[name]()
        except (CollapseLabError, ArithmeticError, ValueError) as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        elapsed = time.perf_counter() - started
        level = logging.INFO if passed else logging.ERROR
        logger.log(level, f"[{'PASS' if passed else 'FAIL'}] {name} ({elapsed:.2f}s) {detail}")
        results.append(CheckResult(name=name, passed=passed, detail=detail, elapsed=elapsed))
    return results


def format_table(results: List[CheckResult]) -> str:
    width = max(len(result.name) for result in results)
    lines = [f"{'check':<{width}}  result  detail"]
    for result in results:
        lines.append(f"{result.name:<{width}}  {'pass' if result.passed else 'FAIL':<6}  {result.detail}")
    return "\n".join(lines)


def ensure_passed(results: List[CheckResult]) -> None:
    failed = [result.name for result in results if not result.passed]
    if failed:
        raise ValidationFailure(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
