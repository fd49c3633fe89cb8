"""
파라미터 격자 평가: (p, lambda) 상 다이어그램, 임계 곡선 테이블, 분산 전략 비교 지도.

셀 평가는 스레드 풀로 병렬 실행되지만 출력은 항상 행 우선 순서입니다. 실패한 셀은
스윕을 멈추지 않고 status='failed' 로 기록됩니다.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, TypeVar

from config import settings
from core.analytic import critical_lambda, critical_lambda_closed_form_r1, extinction_probability, survives
from core.offspring import mean_offspring
from core.schemas import CriticalRate, Model, ModelParams, SweepAxis, SweepCell, SweepTable
from utils.error_handler import CollapseLabError, ConvergenceError, ParameterDomainError, handle_errors

logger = logging.getLogger(__name__)

T = TypeVar("T")
U = TypeVar("U")

SURVIVAL = "survival"
EXTINCTION = "extinction"
DISPERSION_BETTER = "dispersion_better"
NO_DISPERSION_BETTER = "no_dispersion_better"
TIE = "tie"


def _ordered_map(func: Callable[[T], U], items: Sequence[T], threads: Optional[int] = None) -> List[U]:
    """items 에 func 를 병렬 적용하고 입력 순서대로 결과를 돌려줍니다."""
    workers = threads or settings.get_thread_count()
    if workers == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))


def _failed_cell(model: Model, p: float, r: float, m: Optional[int], lam: Optional[float] = None) -> SweepCell:
    return SweepCell(model=model, p=p, lam=lam, r=r, m=m, status="failed")


def _rate_value(rate: Optional[CriticalRate]):
    return None if rate is None else rate.value


def _check_axis(axis: SweepAxis, expected: str) -> None:
    if axis.name != expected:
        raise ParameterDomainError(f"expected a '{expected}' axis, got '{axis.name}'")


def _metadata(model: Optional[Model], **fixed) -> Dict[str, object]:
    return {
        "model": model.value if model else None,
        "fixed": fixed,
        "fixed_point_tol": settings.FIXED_POINT_TOL,
        "critical_xtol": settings.CRITICAL_XTOL,
        "survival_margin": settings.SURVIVAL_MARGIN,
        "version": settings.APP_VERSION,
    }


# ---------------------------------------------------------------------------
# 상 다이어그램
# ---------------------------------------------------------------------------

def phase_grid(model: Model, r: float, p_axis: SweepAxis, lambda_axis: SweepAxis,
               m: Optional[int] = None, with_extinction: bool = False,
               threads: Optional[int] = None) -> SweepTable:
    """
    (p, lambda) 격자의 각 셀에서 생존 여부를 판정합니다.

    행은 p, 열은 lambda 이며 각 셀에는 그 p 행의 임계 출생률이 함께 기록됩니다.

    Args:
        model: Model.C1, C2, C3
        r: 기하 효과 가중치 (고정)
        p_axis: 'p' 축
        lambda_axis: 'lambda' 축
        m: 그래프 차수 (C3 전용)
        with_extinction: True면 셀마다 소멸 확률도 계산
        threads: 워커 수 (None이면 설정값)

    Returns:
        kind='phase' SweepTable
    """
    _check_axis(p_axis, "p")
    _check_axis(lambda_axis, "lambda")
    if p_axis.steps < 2 or lambda_axis.steps < 2:
        raise ParameterDomainError("phase grid axes need at least 2 steps")
    if model == Model.C3 and m is None:
        raise ParameterDomainError("graph degree m is required for model c3")

    p_values = p_axis.values()
    lambda_values = lambda_axis.values()
    logger.info(f"Phase grid {model.value}: {len(p_values)} x {len(lambda_values)} cells (r={r}, m={m})")

    row_rate = handle_errors(CollapseLabError)(lambda p: critical_lambda(model, p, r, m))
    rates = _ordered_map(row_rate, p_values, threads)

    @handle_errors(CollapseLabError)
    def evaluate(task) -> SweepCell:
        p, lam, rate = task
        params = ModelParams.build(p=p, r=r, lam=lam, m=m)
        alive = survives(model, params)
        extinction = None
        if with_extinction:
            extinction = extinction_probability(model, params).probability
            if alive != (extinction < 1.0 - settings.SURVIVAL_MARGIN):
                raise ConvergenceError(
                    f"survival criterion and fixed point disagree at p={p}, lambda={lam} (rho={extinction!r})"
                )
        return SweepCell(
            model=model,
            p=p,
            lam=lam,
            r=r,
            m=m,
            mean_offspring=None if model == Model.C1 else mean_offspring(model, params),
            survives=alive,
            extinction_prob=extinction,
            critical_lambda=_rate_value(rate),
            label=SURVIVAL if alive else EXTINCTION,
        )

    tasks = [(p, lam, rate) for p, rate in zip(p_values, rates) for lam in lambda_values]
    results = _ordered_map(evaluate, tasks, threads)
    cells = [
        cell if cell is not None else _failed_cell(model, p, r, m, lam)
        for cell, (p, lam, _) in zip(results, tasks)
    ]
    return SweepTable(
        kind="phase",
        axes=[p_axis, lambda_axis],
        cells=cells,
        metadata=_metadata(model, r=r, m=m, with_extinction=with_extinction),
    )


def survival_switch_points(table: SweepTable) -> Dict[float, Optional[float]]:
    """
    상 다이어그램의 각 p 행에서 처음으로 생존이 나타나는 lambda.

    생존이 한 번 나타난 뒤 다시 소멸로 바뀌면 ValueError.
    """
    if table.kind != "phase":
        raise ValueError("switch points are defined for phase tables only")
    switches: Dict[float, Optional[float]] = {}
    width = table.axes[1].steps
    for start in range(0, len(table.cells), width):
        row = [cell for cell in table.cells[start:start + width] if cell.status == "ok"]
        if not row:
            continue
        first = None
        for cell in row:
            if cell.survives and first is None:
                first = cell.lam
            elif not cell.survives and first is not None:
                raise ValueError(f"survival is not monotone in lambda at p={cell.p}")
        switches[row[0].p] = first
    return switches


# ---------------------------------------------------------------------------
# 임계 곡선
# ---------------------------------------------------------------------------

def critical_curve_table(model: Model, r: float, p_axis: SweepAxis, m: Optional[int] = None,
                         threads: Optional[int] = None) -> SweepTable:
    """
    p 마다 lambda^i(p, r) 한 행. r = 1 이면 각 값을 닫힌 형태와 1e-9 이내로 대조합니다.
    """
    _check_axis(p_axis, "p")
    compare_closed_form = r == 1.0
    logger.info(f"Critical curve {model.value}: {p_axis.steps} rows (r={r}, m={m})")

    @handle_errors(CollapseLabError)
    def evaluate(p: float) -> SweepCell:
        rate = critical_lambda(model, p, r, m)
        if compare_closed_form:
            expected = critical_lambda_closed_form_r1(model, p, m)
            if expected.is_infinite != rate.is_infinite or (
                not rate.is_infinite and abs(rate.as_float() - expected.as_float()) > settings.CRITICAL_CHECK_TOL
            ):
                raise ConvergenceError(
                    f"critical rate {rate.value} disagrees with closed form {expected.value} at p={p}"
                )
        return SweepCell(
            model=model,
            p=p,
            r=r,
            m=m,
            critical_lambda=rate.value,
            label="infinite" if rate.is_infinite else "finite",
        )

    p_values = p_axis.values()
    results = _ordered_map(evaluate, p_values, threads)
    cells = [cell if cell is not None else _failed_cell(model, p, r, m) for cell, p in zip(results, p_values)]
    return SweepTable(
        kind="critical",
        axes=[p_axis],
        cells=cells,
        metadata=_metadata(model, r=r, m=m, closed_form_checked=compare_closed_form),
    )


# ---------------------------------------------------------------------------
# 분산 전략 비교
# ---------------------------------------------------------------------------

def compare_strategies(p: float, m: int, r: float = 1.0) -> str:
    """lambda^3(p, r, m) 와 lambda^1(p, r) 를 비교한 라벨 (임계값이 낮은 쪽이 유리)."""
    with_dispersion = critical_lambda(Model.C3, p, r, m)
    without = critical_lambda(Model.C1, p, r)
    if with_dispersion.is_infinite and without.is_infinite:
        return TIE
    diff = with_dispersion.as_float() - without.as_float()
    if abs(diff) <= settings.STRATEGY_TIE_TOL:
        return TIE
    return DISPERSION_BETTER if diff < 0 else NO_DISPERSION_BETTER


def strategy_comparison(m_axis: SweepAxis, p_axis: SweepAxis, r: float = 1.0,
                        threads: Optional[int] = None) -> SweepTable:
    """
    (m, p) 격자에서 그래프 위 분산이 분산 없는 전략보다 나은지 표시합니다.

    행은 m, 열은 p. 셀의 critical_lambda 는 lambda^3(p, r, m).
    """
    _check_axis(m_axis, "m")
    _check_axis(p_axis, "p")
    if not m_axis.integer or m_axis.min < 2:
        raise ParameterDomainError("strategy comparison needs an integer m axis with m >= 2")

    m_values = [int(v) for v in m_axis.values()]
    p_values = p_axis.values()
    logger.info(f"Strategy map: {len(m_values)} x {len(p_values)} cells (r={r})")

    @handle_errors(CollapseLabError)
    def evaluate(task) -> SweepCell:
        m, p = task
        return SweepCell(
            model=Model.C3,
            p=p,
            r=r,
            m=m,
            critical_lambda=critical_lambda(Model.C3, p, r, m).value,
            label=compare_strategies(p, m, r),
        )

    tasks = [(m, p) for m in m_values for p in p_values]
    results = _ordered_map(evaluate, tasks, threads)
    cells = [
        cell if cell is not None else _failed_cell(Model.C3, p, r, m)
        for cell, (m, p) in zip(results, tasks)
    ]
    return SweepTable(kind="strategy", axes=[m_axis, p_axis], cells=cells, metadata=_metadata(None, r=r))


def strategy_boundary(table: SweepTable) -> Dict[int, Optional[float]]:
    """
    각 m 행에서 라벨이 dispersion_better 에서 다른 값으로 처음 바뀌는 p.

    행 전체가 no_dispersion_better 이면 첫 p (경계가 격자 왼쪽 바깥), 전부
    dispersion_better 이면 None.
    """
    if table.kind != "strategy":
        raise ValueError("boundaries are defined for strategy tables only")
    boundary: Dict[int, Optional[float]] = {}
    width = table.axes[1].steps
    for start in range(0, len(table.cells), width):
        row = table.cells[start:start + width]
        found = None
        for cell in row:
            if cell.status == "ok" and cell.label != DISPERSION_BETTER:
                found = cell.p
                break
        boundary[row[0].m] = found
    return boundary


def expected_strategy_boundary(m: int) -> float:
    """r = 1 에서 두 임계 곡선이 교차하는 p = 1 - 1/(m-1)."""
    if m < 2:
        raise ParameterDomainError(f"m must be >= 2, got {m}")
    return 1.0 - 1.0 / (m - 1)


