"""
시드 결정적 몬테카를로: C1 내장 사슬, C2/C3 Galton-Watson 시뮬레이션, 사건 수준 생존자 샘플러(오라클),
그리고 소멸 확률 추정.

각 반복은 (base_seed, replicate_index)로 정해지는 독립 난수열을 쓰므로 스레드 수나 실행 순서와
무관하게 같은 결과를 냅니다. 집계는 정수 합계만 사용합니다.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional

import numpy as np

from config import settings
from core.analytic import extinction_probability
from core.effects import sample_mixed_collapse
from core.offspring import OffspringPmf, offspring_C3_coefficients, zero_offspring_probability
from core.schemas import EstimateMethod, ExtinctionEstimate, Model, ModelParams, RunOutcome, SimConfig
from utils.error_handler import CollapseLabError, ParameterDomainError, log_function_call
from utils.rng import ReplicateStream

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# 생존자/자손 샘플러
# ---------------------------------------------------------------------------

def sample_survivors(params: ModelParams, stream: ReplicateStream, size=None):
    """
    붕괴 직후 생존자 수 Z를 닫힌 형태(영과잉 기하분포)에서 직접 뽑습니다.

    P[Z=0] = q/(1+lambda p) 이고, Z >= 1 일 때 확률 r로 Z_G (비율 lambda/(1+lambda)),
    아니면 Z_B (비율 lambda p/(1+lambda p)) 의 1 이상 기하분포를 따릅니다.
    """
    lam, p = params.lam, params.p
    nonzero = stream.random(size) >= zero_offspring_probability(params)
    geometric = stream.random(size) < params.r
    from_geometric = stream.geometric(1.0 / (1.0 + lam), size)
    from_binomial = stream.geometric(1.0 / (1.0 + lam * p), size)
    survivors = np.where(nonzero, np.where(geometric, from_geometric, from_binomial), 0)
    if size is None:
        return int(survivors)
    return survivors


def sample_survivors_event_level(params: ModelParams, stream: ReplicateStream, size=None):
    """
    콜로니 수명 T ~ Exp(1), 그 동안의 출생 N ~ Poisson(lambda T) 를 뽑고
    i = N + 1 명에게 혼합 붕괴를 적용한 생존자 수를 반환합니다.

    닫힌 형태 샘플러와 다른 경로로 같은 분포를 만들어 교차 검증하는 오라클입니다.
    """
    lifetimes = stream.exponential(1.0, size)
    births = stream.poisson(params.lam * lifetimes, size)
    colony_sizes = np.asarray(births, dtype=np.int64) + 1
    if size is None:
        return sample_mixed_collapse(int(colony_sizes), params, stream)
    return sample_mixed_collapse(colony_sizes, params, stream)


def _occupied_slots(survivors: np.ndarray, m: int, stream: ReplicateStream) -> np.ndarray:
    """각 콜로니의 생존자를 m개 이웃 정점에 균등하게 던져 점유된 정점 수를 셉니다."""
    survivors = np.atleast_1d(np.asarray(survivors, dtype=np.int64))
    total = int(survivors.sum())
    if total == 0:
        return np.zeros(survivors.size, dtype=np.int64)
    owner = np.repeat(np.arange(survivors.size, dtype=np.int64), survivors)
    slots = stream.integers(0, m, size=total)
    occupied = np.unique(owner * m + slots)
    return np.bincount(occupied // m, minlength=survivors.size)


def sample_offspring(model: Model, params: ModelParams, stream: ReplicateStream,
                     size=None, event_level: bool = False):
    """
    한 콜로니(또는 size개 콜로니)가 만드는 새 콜로니 수.

    Args:
        model: Model.C2 (생존자 모두가 새 콜로니) 또는 Model.C3 (점유 정점 수)
        params: 모델 파라미터 (C3는 m 필요)
        stream: ReplicateStream
        size: 표본 수 (None이면 스칼라)
        event_level: True면 사건 수준 샘플러로 생존자 수를 뽑음

    Returns:
        새 콜로니 수 (정수 또는 배열)
    """
    if model == Model.C1:
        raise ParameterDomainError("model c1 has no colony offspring")
    draw = sample_survivors_event_level if event_level else sample_survivors
    survivors = draw(params, stream, size)
    if model == Model.C2:
        return survivors
    occupied = _occupied_slots(survivors, params.require_degree(), stream)
    if size is None:
        return int(occupied[0])
    return occupied


@dataclass(frozen=True)
class _GenerationLaw:
    """한 세대 합계를 직접 뽑는 데 필요한 상수 (C2: 영과잉 기하, C3: 자손 분포 전체)."""
    nonzero: float = 0.0
    geometric_success: float = 0.0
    binomial_success: float = 0.0
    probabilities: Optional[np.ndarray] = None
    counts: Optional[np.ndarray] = None


@lru_cache(maxsize=256)
def _generation_law(model: Model, params: ModelParams) -> Optional[_GenerationLaw]:
    if model == Model.C2:
        return _GenerationLaw(
            nonzero=1.0 - zero_offspring_probability(params),
            geometric_success=1.0 / (1.0 + params.lam),
            binomial_success=1.0 / (1.0 + params.lam * params.p),
        )
    if params.require_degree() > settings.MAX_PGF_DEGREE:
        return None
    law = offspring_C3_coefficients(params)
    return _GenerationLaw(probabilities=law / law.sum(), counts=np.arange(law.size))


def _generation_total(model: Model, params: ModelParams, colonies: int, stream: ReplicateStream) -> int:
    """
    colonies 개 콜로니가 만드는 다음 세대 콜로니 수의 합계.

    C2 는 0이 아닌 콜로니 수를 이항으로, 효과별 분할 후 1 이상 기하분포의 합을 k + NB(k) 로 뽑고
    C3 는 자손 분포의 다항 추출 한 번으로 뽑습니다. PER_COLONY_GENERATION_SIZE 이하 세대나
    자손 분포를 만들 수 없는 큰 m 은 콜로니별로 뽑아 더합니다.
    """
    law = _generation_law(model, params)
    if law is None or colonies <= settings.PER_COLONY_GENERATION_SIZE:
        return int(np.sum(sample_offspring(model, params, stream, size=colonies)))
    if law.probabilities is not None:
        return int(np.dot(stream.multinomial(colonies, law.probabilities), law.counts))
    nonzero = int(stream.binomial(colonies, law.nonzero))
    if nonzero == 0:
        return 0
    if params.r == 1.0:
        geometric = nonzero
    elif params.r == 0.0:
        geometric = 0
    else:
        geometric = int(stream.binomial(nonzero, params.r))
    binomial = nonzero - geometric
    total = nonzero
    if geometric:
        total += int(stream.negative_binomial(geometric, law.geometric_success))
    if binomial:
        total += int(stream.negative_binomial(binomial, law.binomial_success))
    return total


# ---------------------------------------------------------------------------
# 단일 반복
# ---------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _escape_population(model: Model, params: ModelParams, tolerance: float) -> Optional[int]:
    """rho^n < tolerance 가 되는 최소 개체(콜로니) 수 n. 소멸이 확실하면 None."""
    if tolerance <= 0.0:
        return None
    if model == Model.C3 and params.require_degree() > settings.MAX_PGF_DEGREE:
        return None
    try:
        rho = extinction_probability(model, params).probability
    except CollapseLabError as e:
        logger.warning(f"no analytic extinction probability for escape rule ({e}); runs end only at caps")
        return None
    if rho >= 1.0:
        return None
    if rho <= 0.0:
        return 1
    return max(1, math.ceil(math.log(tolerance) / math.log(rho)))


def _censored(steps: int, peak: int) -> RunOutcome:
    return RunOutcome(extinct=False, censored=True, generations_or_steps=steps, max_population=peak)


def run_C1(params: ModelParams, config: SimConfig, replicate_index: int) -> RunOutcome:
    """
    C1 내장 사슬을 상태 1에서 시뮬레이션합니다.

    매 단계 확률 lambda/(lambda+1)로 +1, 아니면 혼합 붕괴. 붕괴 전까지의 연속 출생 수는
    기하분포이므로 한 번에 뽑습니다 (단계 수는 그대로 셈).
    """
    stream = ReplicateStream.for_replicate(config.base_seed, replicate_index)
    rng = stream.generator
    escape = _escape_population(Model.C1, params, config.escape_tolerance)
    collapse_odds = 1.0 / (1.0 + params.lam)

    state, steps, peak = 1, 0, 1
    while True:
        births = int(rng.geometric(collapse_odds)) - 1
        if escape is not None and state + births >= escape:
            needed = escape - state
            if steps + needed > config.step_cap:
                return _censored(config.step_cap, state + (config.step_cap - steps))
            return RunOutcome(extinct=False, escaped=True, generations_or_steps=steps + needed,
                              max_population=escape)
        if state + births >= config.population_cap:
            needed = config.population_cap - state
            if steps + needed > config.step_cap:
                return _censored(config.step_cap, state + (config.step_cap - steps))
            return _censored(steps + needed, config.population_cap)
        if steps + births + 1 > config.step_cap:
            return _censored(config.step_cap, max(peak, state + (config.step_cap - steps)))

        state += births
        steps += births + 1
        peak = max(peak, state)
        state = sample_mixed_collapse(state, params, stream)
        if state == 0:
            return RunOutcome(extinct=True, generations_or_steps=steps, max_population=peak)


def run_branching(model: Model, params: ModelParams, config: SimConfig, replicate_index: int) -> RunOutcome:
    """C2/C3 콜로니 Galton-Watson 과정을 한 콜로니에서 시작해 세대별로 진행합니다."""
    if model == Model.C1:
        raise ParameterDomainError("use run_C1 for the process without dispersion")
    stream = ReplicateStream.for_replicate(config.base_seed, replicate_index)
    escape = _escape_population(model, params, config.escape_tolerance)

    colonies, generation, peak = 1, 0, 1
    while True:
        if colonies == 0:
            return RunOutcome(extinct=True, generations_or_steps=generation, max_population=peak)
        if escape is not None and colonies >= escape:
            return RunOutcome(extinct=False, escaped=True, generations_or_steps=generation, max_population=peak)
        if colonies >= config.population_cap or generation >= config.generation_cap:
            return _censored(generation, peak)
        colonies = _generation_total(model, params, colonies, stream)
        generation += 1
        peak = max(peak, colonies)


def run_replicate(model: Model, params: ModelParams, config: SimConfig, replicate_index: int) -> RunOutcome:
    if model == Model.C1:
        return run_C1(params, config, replicate_index)
    return run_branching(model, params, config, replicate_index)


# ---------------------------------------------------------------------------
# 집계
# ---------------------------------------------------------------------------

@dataclass
class _Tally:
    replicates: int = 0
    extinct: int = 0
    censored: int = 0
    escaped: int = 0
    extinct_steps: int = 0

    def add(self, outcome: RunOutcome) -> None:
        self.replicates += 1
        if outcome.extinct:
            self.extinct += 1
            self.extinct_steps += outcome.generations_or_steps
        elif outcome.censored:
            self.censored += 1
        elif outcome.escaped:
            self.escaped += 1

    def merge(self, other: "_Tally") -> "_Tally":
        return _Tally(
            replicates=self.replicates + other.replicates,
            extinct=self.extinct + other.extinct,
            censored=self.censored + other.censored,
            escaped=self.escaped + other.escaped,
            extinct_steps=self.extinct_steps + other.extinct_steps,
        )


def _run_chunk(model: Model, params: ModelParams, config: SimConfig, start: int, stop: int) -> _Tally:
    tally = _Tally()
    for index in range(start, stop):
        tally.add(run_replicate(model, params, config, index))
    return tally


def _chunks(total: int, chunk_size: int) -> List[range]:
    return [range(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


@log_function_call
def estimate_extinction(model: Model, params: ModelParams, config: SimConfig) -> ExtinctionEstimate:
    """
    반복 결과를 모아 소멸 확률을 추정합니다.

    검열된 반복은 생존으로 셉니다 (소멸 확률을 낮추는 방향의 편향이며 censored_fraction 으로 보고).

    Args:
        model: Model.C1, C2, C3
        params: 모델 파라미터
        config: SimConfig

    Returns:
        ExtinctionEstimate (method=monte_carlo, 95% 신뢰구간 반폭 포함)
    """
    if model == Model.C3:
        params.require_degree()
    threads = config.threads or settings.get_thread_count()
    chunks = _chunks(config.replicates, settings.REPLICATE_CHUNK_SIZE)
    logger.info(f"Running {config.replicates} replicates of {model.value} in {len(chunks)} chunks on {threads} threads")

    tally = _Tally()
    if threads == 1 or len(chunks) == 1:
        for chunk in chunks:
            tally = tally.merge(_run_chunk(model, params, config, chunk.start, chunk.stop))
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            futures = [
                executor.submit(_run_chunk, model, params, config, chunk.start, chunk.stop)
                for chunk in chunks
            ]
            for future in futures:
                tally = tally.merge(future.result())

    n = tally.replicates
    estimate = tally.extinct / n
    half_width = settings.CI_Z * math.sqrt(estimate * (1.0 - estimate) / n)
    censored_fraction = tally.censored / n
    if tally.censored:
        logger.warning(f"{tally.censored} of {n} replicates hit a cap and were counted as surviving")

    try:
        reference = extinction_probability(model, params).probability
    except CollapseLabError:
        reference = None

    return ExtinctionEstimate(
        probability=estimate,
        method=EstimateMethod.MONTE_CARLO,
        iterations=n,
        ci_half_width=half_width,
        censored_fraction=censored_fraction,
        escaped_fraction=tally.escaped / n,
        mean_extinction_steps=(tally.extinct_steps / tally.extinct) if tally.extinct else None,
        reference=reference,
    )


# ---------------------------------------------------------------------------
# 분포 오라클
# ---------------------------------------------------------------------------

def empirical_distribution(samples: np.ndarray) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.int64)
    return np.bincount(samples) / samples.size


def exact_offspring_law(model: Model, params: ModelParams) -> OffspringPmf:
    return OffspringPmf("mixed_C2" if model == Model.C2 else "C3", params)


def total_variation(empirical: np.ndarray, law: OffspringPmf) -> float:
    """경험 분포와 정확한 분포 사이의 총변동 거리 (닫힌 형태 꼬리 포함)."""
    span = max(len(empirical), law.truncation_point())
    exact = law.probabilities(span)
    padded = np.zeros(span)
    padded[:len(empirical)] = empirical
    return 0.5 * (float(np.abs(padded - exact).sum()) + law.tail_mass(span))


def oracle_distance(model: Model, params: ModelParams, samples: int, base_seed: int,
                    event_level: bool = True) -> float:
    """사건 수준(또는 직접) 샘플러의 경험 자손 분포와 닫힌 형태 분포의 총변동 거리."""
    stream = ReplicateStream(base_seed, (samples,))
    draws = sample_offspring(model, params, stream, size=samples, event_level=event_level)
    return total_variation(empirical_distribution(draws), exact_offspring_law(model, params))
