# core/effects.py
"""
크기 i인 콜로니에 작용하는 붕괴 효과 분포: 이항, 기하, 그리고 r-혼합.

붕괴율은 1로 고정되어 있으며 파라미터가 아닙니다. 빈 콜로니(i=0)에는 붕괴가 적용되지 않습니다.
"""

import math

import numpy as np
from scipy.stats import binom

from config import settings
from core.schemas import ModelParams
from utils.error_handler import ParameterDomainError


def _check_args(i: int, j: int, p: float) -> None:
    if i < 1:
        raise ParameterDomainError(f"colony size must be >= 1, got i={i}")
    if j < 0 or j > i:
        raise ParameterDomainError(f"survivor count must lie in [0, {i}], got j={j}")
    if not (0.0 < p < 1.0):
        raise ParameterDomainError(f"survival probability must lie in (0, 1), got p={p}")


def binomial_collapse_pmf(i: int, j: int, p: float) -> float:
    """
    동시 타격: 각 개체가 독립적으로 확률 p로 생존할 때 j명이 남을 확률.

    Args:
        i: 콜로니 크기 (>= 1)
        j: 생존자 수 (0 <= j <= i)
        p: 생존 확률

    Returns:
        C(i,j) p^j q^(i-j)
    """
    _check_args(i, j, p)
    q = 1.0 - p
    if i <= settings.PMF_DIRECT_PRODUCT_MAX_I:
        return math.comb(i, j) * p ** j * q ** (i - j)
    return float(np.exp(binom.logpmf(j, i, p)))


def geometric_collapse_pmf(i: int, j: int, p: float) -> float:
    """
    순차 타격: 첫 생존자가 나오는 순간 붕괴가 멈출 때 j명이 남을 확률.

    j=0이면 q^i, 1 <= j <= i이면 p q^(i-j).
    """
    _check_args(i, j, p)
    q = 1.0 - p
    if j == 0:
        if i <= settings.PMF_DIRECT_PRODUCT_MAX_I:
            return q ** i
        return math.exp(i * math.log(q))
    if i - j <= settings.PMF_DIRECT_PRODUCT_MAX_I:
        return p * q ** (i - j)
    return math.exp(math.log(p) + (i - j) * math.log(q))


def mixed_collapse_pmf(i: int, j: int, params: ModelParams) -> float:
    """mu_ij = r * mu^G_ij + (1 - r) * mu^B_ij"""
    r = params.r
    return r * geometric_collapse_pmf(i, j, params.p) + (1.0 - r) * binomial_collapse_pmf(i, j, params.p)


def collapse_distribution(i: int, params: ModelParams) -> np.ndarray:
    """j = 0..i 에 대한 혼합 붕괴 분포 전체."""
    return np.array([mixed_collapse_pmf(i, j, params) for j in range(i + 1)])


def sample_mixed_collapse(sizes, params: ModelParams, stream, size=None):
    """
    혼합 붕괴 효과를 적용한 생존자 수를 뽑습니다.

    기하 효과는 첫 생존 전까지의 실패 횟수 L을 뽑아 max(i - L, 0)으로,
    이항 효과는 Binomial(i, p)로 구현합니다. ``sizes``가 배열이면 원소별로 적용.

    Args:
        sizes: 콜로니 크기 (정수 또는 정수 배열, 모두 >= 1)
        params: 모델 파라미터
        stream: ReplicateStream
        size: 스칼라 sizes를 여러 번 뽑을 때의 표본 수

    Returns:
        생존자 수 (sizes와 같은 모양)
    """
    if size is None and isinstance(sizes, (int, np.integer)):
        if sizes < 1:
            raise ParameterDomainError("collapses only apply to nonempty colonies")
        rng = stream.generator
        if rng.random() < params.r:
            return max(int(sizes) - (int(rng.geometric(params.p)) - 1), 0)
        return int(rng.binomial(int(sizes), params.p))

    sizes = np.asarray(sizes, dtype=np.int64)
    if size is not None:
        sizes = np.broadcast_to(sizes, size)
    if np.any(sizes < 1):
        raise ParameterDomainError("collapses only apply to nonempty colonies")
    shape = sizes.shape
    geometric = stream.random(shape) < params.r
    failures = stream.geometric(params.p, shape) - 1
    sequential = np.maximum(sizes - failures, 0)
    simultaneous = stream.binomial(sizes, params.p, shape)
    return np.where(geometric, sequential, simultaneous)
