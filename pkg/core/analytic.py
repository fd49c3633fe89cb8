"""
소멸 확률(닫힌 형태/고정점), 생존 판정, 임계 출생률 곡선, C1 Foster drift 진단.

생존 여부는 항상 닫힌 형태 평균으로 판정하고, 고정점 풀이는 소멸 확률 값에만 사용합니다.
"""

import logging
import math
from typing import Callable, List, Optional, Tuple

from scipy.optimize import bisect, brentq

from config import settings
from core.effects import mixed_collapse_pmf
from core.offspring import (
    PgfEvaluator,
    mean_C2,
    mean_C3,
    mean_curve_C2,
    mean_curve_C3,
)
from core.schemas import (
    INF,
    CriticalRate,
    EstimateMethod,
    ExtinctionEstimate,
    Model,
    ModelParams,
    RateSolver,
)
from utils.error_handler import ConvergenceError, ParameterDomainError, log_function_call

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# 생존 판정
# ---------------------------------------------------------------------------

def survives_C1(params: ModelParams) -> bool:
    """r < 1 이면 항상 소멸, r = 1 이면 lambda p > q 일 때만 생존."""
    return params.r == 1.0 and params.lam * params.p > params.q * (1.0 + settings.CRITICAL_MEAN_TOL)


def survives_C2(params: ModelParams) -> bool:
    return mean_C2(params) > 1.0 + settings.CRITICAL_MEAN_TOL


def survives_C3(params: ModelParams) -> bool:
    return mean_C3(params) > 1.0 + settings.CRITICAL_MEAN_TOL


def survives(model: Model, params: ModelParams) -> bool:
    if model == Model.C1:
        return survives_C1(params)
    if model == Model.C2:
        return survives_C2(params)
    return survives_C3(params)


# ---------------------------------------------------------------------------
# 최소 고정점
# ---------------------------------------------------------------------------

def _iterate(pgf: PgfEvaluator, start: float, tol: float, budget: int) -> Tuple[float, int, bool]:
    s = start
    for n in range(1, budget + 1):
        nxt = pgf(s)
        if not (-tol <= nxt <= 1.0 + settings.PGF_NORMALIZATION_TOL):
            raise ConvergenceError(f"PGF left [0, 1] during iteration (value {nxt!r}); malformed PGF")
        if abs(nxt - s) < tol:
            return nxt, n, True
        s = nxt
    return s, budget, False


def _bracket_deficit_root(excess: Callable[[float], float], guess: float) -> Tuple[float, float]:
    """
    excess(t) = D(t) - t 의 양의 근을 감싸는 [lower, upper] 를 찾습니다.

    excess 는 오목하고 excess(0) = 0, excess'(0) = mean - 1 > 0, excess(1) = -pgf(0) <= 0 이므로
    upper 는 1 쪽으로 두 배씩, lower 는 0 쪽으로 절반씩 옮기면 부호가 바뀝니다.
    """
    upper = min(guess, 1.0) if guess > 0.0 else 1.0
    while excess(upper) > 0.0:
        if upper >= 1.0:
            return 1.0, 1.0
        upper = min(2.0 * upper, 1.0)
    lower = upper
    for _ in range(settings.FIXED_POINT_BRACKET_MAX_HALVINGS):
        lower *= 0.5
        if excess(lower) > 0.0:
            return lower, upper
    raise ConvergenceError(f"no sign change of pgf(s) - s below s = {1.0 - upper!r}; malformed PGF")


def _solve_fixed_point(pgf: PgfEvaluator, tol: float) -> Tuple[float, int, str]:
    if abs(pgf(1.0) - 1.0) > settings.PGF_NORMALIZATION_TOL:
        raise ConvergenceError(f"PGF does not equal 1 at s=1 (got {pgf(1.0)!r}); malformed PGF")
    if pgf.mean <= 1.0 + settings.CRITICAL_MEAN_TOL:
        return 1.0, 0, "subcritical"

    s, iterations, converged = _iterate(pgf, 0.0, tol, settings.FIXED_POINT_STALL_ITER)
    strategy = "iteration"
    if not converged:
        logger.warning(
            f"fixed-point iteration stalled after {iterations} steps (mean={pgf.mean:.12g}); "
            f"switching to a bracketed root search on 1 - pgf(1 - t) = t"
        )
        strategy = "bracketed"

    def excess(t: float) -> float:
        return pgf.deficit(t) - t

    lower, upper = _bracket_deficit_root(excess, 1.0 - s)
    if lower == upper or excess(upper) == 0.0:
        gap = upper
    else:
        gap = brentq(excess, lower, upper, xtol=tol * lower, maxiter=500)
    s = 1.0 - gap
    logger.debug(f"least fixed point {s:.15g} via {strategy} after {iterations} iterations")
    return min(max(s, 0.0), 1.0), iterations, strategy


def smallest_fixed_point(pgf: PgfEvaluator, tol: float = settings.FIXED_POINT_TOL) -> float:
    """
    [0,1]에서 pgf(s) = s 의 가장 작은 해를 찾습니다.

    s0 = 0 에서 시작하는 반복은 최소 고정점으로 단조 수렴합니다. 반복값은 초기 추정으로만
    쓰고, t = 1 - s 에 대해 1 - pgf(1 - t) = t 의 양의 근을 brentq 로 구해 마무리합니다.
    임계 근처에서 반복이 멈추면 경고를 남기고 같은 방법으로 넘어갑니다.
    평균이 1 이하이면 1을 반환합니다.

    Args:
        pgf: PgfEvaluator
        tol: 반복 종료 허용 오차

    Returns:
        최소 고정점

    Raises:
        ConvergenceError: 정규화되지 않았거나 부호 변화가 없는 PGF
    """
    return _solve_fixed_point(pgf, tol)[0]


# ---------------------------------------------------------------------------
# 소멸 확률
# ---------------------------------------------------------------------------

def extinction_C1_closed_form(params: ModelParams) -> float:
    if not survives_C1(params):
        return 1.0
    return min(params.q / (params.lam * params.p), 1.0)


@log_function_call
def extinction_C1(params: ModelParams) -> ExtinctionEstimate:
    """분산 없는 과정: r < 1 이면 1, r = 1 이면 min{q/(lambda p), 1}."""
    return ExtinctionEstimate(
        probability=extinction_C1_closed_form(params),
        method=EstimateMethod.CLOSED_FORM,
    )


def extinction_C2_closed_form(params: ModelParams) -> Optional[float]:
    """r = 0, r = 1 에서만 존재하는 닫힌 형태."""
    lam, p, q = params.lam, params.p, params.q
    if params.r == 0.0:
        return min(q / (lam * p), 1.0)
    if params.r == 1.0:
        return min(q * (lam + 1.0) / (lam * (1.0 + lam * p)), 1.0)
    return None


@log_function_call
def extinction_C2(params: ModelParams, tol: float = settings.FIXED_POINT_TOL) -> ExtinctionEstimate:
    value, iterations, _ = _solve_fixed_point(PgfEvaluator.for_model(Model.C2, params), tol)
    reference = extinction_C2_closed_form(params)
    if reference is not None and abs(reference - value) > 1e-10:
        logger.warning(f"C2 fixed point {value:.15g} disagrees with closed form {reference:.15g} at {params}")
    return ExtinctionEstimate(
        probability=value,
        method=EstimateMethod.FIXED_POINT,
        iterations=iterations,
        reference=reference,
    )


@log_function_call
def extinction_C3(params: ModelParams, tol: float = settings.FIXED_POINT_TOL) -> ExtinctionEstimate:
    params.require_degree()
    value, iterations, _ = _solve_fixed_point(PgfEvaluator.for_model(Model.C3, params), tol)
    return ExtinctionEstimate(
        probability=value,
        method=EstimateMethod.FIXED_POINT,
        iterations=iterations,
    )


def extinction_probability(model: Model, params: ModelParams,
                           tol: float = settings.FIXED_POINT_TOL) -> ExtinctionEstimate:
    if model == Model.C1:
        return extinction_C1(params)
    if model == Model.C2:
        return extinction_C2(params, tol)
    return extinction_C3(params, tol)


def binomial_vs_geometric_gap(params: ModelParams) -> float:
    """rho_2(0) - rho_2(1) (>= 0: 이항 효과가 생존에 더 나쁨)."""
    return extinction_C2_closed_form(params.replace(r=0.0)) - extinction_C2_closed_form(params.replace(r=1.0))


def dispersion_gain(params: ModelParams) -> float:
    """rho_1(r) - rho_2(r) (>= 0: 공간 제약 없는 분산은 항상 유리)."""
    return extinction_C1_closed_form(params) - extinction_C2(params).probability


# ---------------------------------------------------------------------------
# 임계 출생률
# ---------------------------------------------------------------------------

def _mean_curve(model: Model, p: float, r: float, m: Optional[int]) -> Callable[[float], float]:
    if model == Model.C2:
        return lambda lam: mean_curve_C2(p, r, lam)
    return lambda lam: mean_curve_C3(p, r, lam, m)


def _validate_rate_args(model: Model, p: float, r: float, m: Optional[int]) -> None:
    if model == Model.C3 and m is None:
        raise ParameterDomainError("graph degree m is required for model c3")
    if model != Model.C3 and m is not None:
        raise ParameterDomainError(f"graph degree m only applies to model c3, got model {model.value}")
    ModelParams.build(p=p, r=r, lam=1.0, m=m)


@log_function_call
def critical_lambda(model: Model, p: float, r: float, m: Optional[int] = None) -> CriticalRate:
    """
    lambda^i(p, r) = inf{lambda : 생존 확률 > 0}.

    C2/C3 평균 곡선은 f(0) = p < 1 이고 lambda 에 대해 순증가하므로, lambda_hi 를 1 에서
    두 배씩 키워 f > 1 이 되는 상한을 잡은 뒤 이분법으로 f = 1 의 유일한 근을 찾습니다.

    Args:
        model: Model.C1, C2, C3
        p: 생존 확률
        r: 기하 효과 가중치
        m: 그래프 차수 (C3 전용)

    Returns:
        CriticalRate (무한대는 'inf' 마커)
    """
    _validate_rate_args(model, p, r, m)
    if model == Model.C1:
        value = (1.0 - p) / p if r == 1.0 else INF
        return CriticalRate(value=value, model=model, solver=RateSolver.CLOSED_FORM)
    if model == Model.C3 and m == 1:
        return CriticalRate(value=INF, model=model, solver=RateSolver.CLOSED_FORM)

    curve = _mean_curve(model, p, r, m)
    upper = settings.LAMBDA_BRACKET_START
    doublings = 0
    while curve(upper) <= 1.0:
        if doublings >= settings.LAMBDA_BRACKET_MAX_DOUBLINGS:
            raise ConvergenceError(f"could not bracket the critical rate for {model.value} p={p} r={r} m={m}")
        upper *= 2.0
        doublings += 1
    logger.debug(f"critical-rate bracket [0, {upper}] after {doublings} doublings")
    root = bisect(lambda lam: curve(lam) - 1.0, 0.0, upper, xtol=settings.CRITICAL_XTOL, maxiter=500)
    return CriticalRate(value=root, model=model, solver=RateSolver.BISECTION)


def critical_lambda_closed_form_r1(model: Model, p: float, m: Optional[int] = None) -> CriticalRate:
    """r = 1 (순수 기하 효과)에서의 세 임계값 닫힌 형태."""
    _validate_rate_args(model, p, 1.0, m)
    if model == Model.C1:
        value = (1.0 - p) / p
    elif model == Model.C2:
        value = math.sqrt(0.25 + (1.0 - p) / p) - 0.5
    elif m == 1:
        value = INF
    else:
        disc = (1.0 - m * p) ** 2 + 4.0 * m * (m - 1) * p * (1.0 - p)
        value = (1.0 - m * p + math.sqrt(disc)) / (2.0 * p * (m - 1))
    return CriticalRate(value=value, model=model, solver=RateSolver.CLOSED_FORM)


# ---------------------------------------------------------------------------
# C1 내장 사슬의 Foster drift
# ---------------------------------------------------------------------------

def drift_C1(i: int, params: ModelParams) -> float:
    """
    f(i) = i + 1 에 대한 내장 사슬의 한 단계 기대 변화량.

    (lambda - i(1-r)q)/(1+lambda) - r q (1 - q^i) / (p (1+lambda))
    """
    if i < 0:
        raise ParameterDomainError(f"state must be >= 0, got i={i}")
    lam, p, q, r = params.lam, params.p, params.q, params.r
    return (lam - i * (1.0 - r) * q) / (1.0 + lam) - r * q * (1.0 - q ** i) / (p * (1.0 + lam))


def drift_C1_bruteforce(i: int, params: ModelParams) -> float:
    """전이확률을 직접 합한 drift: lambda/(1+lambda) + sum_j (j-i) mu_ij / (1+lambda)."""
    if i < 1:
        raise ParameterDomainError(f"state must be >= 1, got i={i}")
    lam = params.lam
    collapse = math.fsum((j - i) * mixed_collapse_pmf(i, j, params) for j in range(i + 1))
    return (lam + collapse) / (1.0 + lam)


def _first_state_below(params: ModelParams, level: float) -> Optional[int]:
    """drift(i) <= level 이 되는 가장 작은 i (drift는 i에 대해 감소)."""
    lam, p, q, r = params.lam, params.p, params.q, params.r
    # r = 1 에서 drift 는 위에서 (lambda - q/p)/(1+lambda) 로 수렴
    if r == 1.0 and (lam - q / p) / (1.0 + lam) >= level:
        return None
    if drift_C1(0, params) <= level:
        return 0
    high = 1
    while drift_C1(high, params) > level:
        high *= 2
    low = high // 2
    while high - low > 1:
        mid = (low + high) // 2
        if drift_C1(mid, params) > level:
            low = mid
        else:
            high = mid
    return high


def drift_threshold_C1(params: ModelParams) -> Optional[int]:
    """이 상태 이후로 drift 가 항상 음수가 되는 첫 상태. r = 1 이고 lambda p >= q 이면 None."""
    lam, p, q, r = params.lam, params.p, params.q, params.r
    if r == 1.0 and lam * p >= q:
        return None
    return _first_state_below(params, -1e-300)


def foster_set(params: ModelParams, epsilon: float) -> Optional[List[int]]:
    """
    A = {i >= 0 : drift(i) > -epsilon}.

    유한하면 상태 목록을, 무한하면 None 을 반환합니다.
    """
    if epsilon <= 0.0:
        raise ParameterDomainError(f"epsilon must be > 0, got {epsilon}")
    first_outside = _first_state_below(params, -epsilon)
    if first_outside is None:
        return None
    return list(range(first_outside))
