"""
C2, C3 보조 Galton-Watson 과정의 자손(새 콜로니 수) 분포, PGF, 평균.

Z_B / Z_G 는 이항 / 기하 효과 하에서 붕괴 직후 생존자 수이고, C2에서는 곧 새 콜로니 수입니다.
C3에서는 생존자들이 m개 이웃 정점에 무작위로 흩어지고 정점마다 하나만 콜로니를 만들기 때문에
자손 수는 점유된 정점 수이며, 전사 함수 개수 T(j,k)로 정확히 계산됩니다.
"""

import logging
import math
from fractions import Fraction
from functools import lru_cache
from typing import Callable, List, Optional, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from config import settings
from core.schemas import Model, ModelParams
from utils.error_handler import ParameterDomainError

logger = logging.getLogger(__name__)

OFFSPRING_KINDS = ("Z_B", "Z_G", "mixed_C2", "C3")


def _check_count(k: int) -> None:
    if k < 0:
        raise ParameterDomainError(f"offspring count must be >= 0, got k={k}")


def _check_s(s: float) -> None:
    if not (0.0 <= s <= 1.0):
        raise ParameterDomainError(f"PGF argument must lie in [0, 1], got s={s}")


def zero_offspring_probability(params: ModelParams) -> float:
    """P[Z = 0] = q / (1 + lambda p) (두 효과에서 동일)."""
    return params.q / (1.0 + params.lam * params.p)


# ---------------------------------------------------------------------------
# Z_B, Z_G (C2 자손 분포)
# ---------------------------------------------------------------------------

def pmf_Z_B(k: int, params: ModelParams) -> float:
    """이항 효과 하의 생존자 수 분포 (영과잉 기하분포)."""
    _check_count(k)
    lam, p = params.lam, params.p
    if k == 0:
        return zero_offspring_probability(params)
    ratio = lam * p / (1.0 + lam * p)
    return (1.0 + lam) / (lam * (1.0 + lam * p)) * ratio ** k


def pmf_Z_G(k: int, params: ModelParams) -> float:
    """기하 효과 하의 생존자 수 분포."""
    _check_count(k)
    lam, p = params.lam, params.p
    if k == 0:
        return zero_offspring_probability(params)
    ratio = lam / (1.0 + lam)
    return p / (1.0 + lam * p) * ratio ** (k - 1)


def pmf_Z(k: int, params: ModelParams) -> float:
    """붕괴 직후 생존자 수 Z의 분포: r * Z_G + (1 - r) * Z_B."""
    return params.r * pmf_Z_G(k, params) + (1.0 - params.r) * pmf_Z_B(k, params)


def tail_Z_B(k: int, params: ModelParams) -> float:
    """P[Z_B >= k] (닫힌 형태 기하 꼬리합)."""
    _check_count(k)
    if k == 0:
        return 1.0
    lam, p = params.lam, params.p
    return (1.0 + lam) / lam * (lam * p / (1.0 + lam * p)) ** k


def tail_Z_G(k: int, params: ModelParams) -> float:
    """P[Z_G >= k]"""
    _check_count(k)
    if k == 0:
        return 1.0
    lam, p = params.lam, params.p
    return p * (1.0 + lam) / (1.0 + lam * p) * (lam / (1.0 + lam)) ** (k - 1)


def pgf_Z_B(s: float, params: ModelParams) -> float:
    """phi_B(s) = [q + (lambda+1) p s / (1 + lambda p - lambda p s)] / (1 + lambda p)"""
    _check_s(s)
    lam, p, q = params.lam, params.p, params.q
    return (q + (lam + 1.0) * p * s / (1.0 + lam * p - lam * p * s)) / (1.0 + lam * p)


def pgf_Z_G(s: float, params: ModelParams) -> float:
    """phi_G(s) = [q + (lambda+1) p s / (1 + lambda - lambda s)] / (1 + lambda p)"""
    _check_s(s)
    lam, p, q = params.lam, params.p, params.q
    return (q + (lam + 1.0) * p * s / (1.0 + lam - lam * s)) / (1.0 + lam * p)


def pgf_C2(s: float, params: ModelParams) -> float:
    """
    C2 자손 수의 확률생성함수.

    Args:
        s: [0, 1] 범위의 인자
        params: 모델 파라미터

    Returns:
        (1/(1+lambda p)) [q + r(lambda+1)ps/(1+lambda-lambda s) + (1-r)(lambda+1)ps/(1+lambda p-lambda p s)]
    """
    _check_s(s)
    lam, p, q, r = params.lam, params.p, params.q, params.r
    geometric = r * (lam + 1.0) * p * s / (1.0 + lam - lam * s)
    binomial = (1.0 - r) * (lam + 1.0) * p * s / (1.0 + lam * p - lam * p * s)
    return (q + geometric + binomial) / (1.0 + lam * p)


def pgf_C2_derivative(s: float, params: ModelParams) -> float:
    _check_s(s)
    lam, p, r = params.lam, params.p, params.r
    geometric = r * (lam + 1.0) ** 2 * p / (1.0 + lam - lam * s) ** 2
    binomial = (1.0 - r) * (lam + 1.0) * p * (1.0 + lam * p) / (1.0 + lam * p - lam * p * s) ** 2
    return (geometric + binomial) / (1.0 + lam * p)


def pgf_C2_deficit(t: float, params: ModelParams) -> float:
    """
    D(t) = 1 - phi(1 - t), 1 근처에서 상쇄 없이 계산한 C2 PGF.

    (1 - P0) [r t (1+lambda)/(1+lambda t) + (1-r) t (1+lambda p)/(1+lambda p t)]
    """
    _check_s(t)
    lam, p, r = params.lam, params.p, params.r
    nonzero = p * (1.0 + lam) / (1.0 + lam * p)
    geometric = r * t * (1.0 + lam) / (1.0 + lam * t)
    binomial = (1.0 - r) * t * (1.0 + lam * p) / (1.0 + lam * p * t)
    return nonzero * (geometric + binomial)


def mean_curve_C2(p: float, r: float, lam: float) -> float:
    """f(lambda): lambda >= 0 에서 정의되는 C2 평균 곡선 (f(0) = p)."""
    return p * (lam + 1.0) ** 2 * r / (lam * p + 1.0) + p * (lam + 1.0) * (1.0 - r)


def mean_C2(params: ModelParams) -> float:
    """E[Z_1] = p(lambda+1)^2 r/(lambda p+1) + p(lambda+1)(1-r)"""
    return mean_curve_C2(params.p, params.r, params.lam)


# ---------------------------------------------------------------------------
# C3: 전사 함수 개수와 점유 정점 수 분포
# ---------------------------------------------------------------------------

def surjection_count(j: int, k: int) -> int:
    """j-원소 집합에서 k-원소 집합으로의 전사 함수 개수 (포함-배제, 정확한 정수)."""
    if j < 0 or k < 0:
        raise ParameterDomainError(f"set sizes must be >= 0, got j={j}, k={k}")
    if j < k:
        return 0
    return sum((-1) ** i * math.comb(k, i) * (k - i) ** j for i in range(k + 1))


def occupancy_pmf(j: int, k: int, m: int) -> float:
    """생존자 j명이 m개 정점에 흩어질 때 정확히 k개 정점이 점유될 확률."""
    if k > m or k > j:
        return 0.0
    return float(Fraction(math.comb(m, k) * surjection_count(j, k), m ** j))


def _check_degree(params: ModelParams) -> int:
    m = params.require_degree()
    if m > settings.MAX_PGF_DEGREE:
        raise ParameterDomainError(
            f"graph degree m={m} exceeds the PGF degree limit {settings.MAX_PGF_DEGREE}"
        )
    return m


@lru_cache(maxsize=4096)
def _exact_c3_terms(p: float, lam: float, m: int) -> Tuple[Fraction, Tuple[Fraction, ...], Tuple[Fraction, ...]]:
    """
    C3 계수의 정확한 유리수 계산.

    부동소수 입력을 정확한 유리수로 옮긴 뒤 교대 포함-배제 합을 유리수로 누적하고,
    마지막에 한 번만 부동소수로 변환합니다.

    Returns:
        (P[Z=0], (S_B(1..m)), (S_G(1..m)))
    """
    P = Fraction(p)
    L = Fraction(lam)
    Q = 1 - P
    LP = L * P
    zero = Q / (1 + LP)

    binomial_ratio = LP / (m * (LP + 1))
    geometric_ratio = L / (m * (1 + L))
    binomial_front = Fraction(m) * (1 + L) / L
    geometric_front = (1 + L) * P / (LP + 1)

    s_b: List[Fraction] = []
    s_g: List[Fraction] = []
    for k in range(1, m + 1):
        inner_b = Fraction(0)
        inner_g = Fraction(0)
        for i in range(k + 1):
            weight = (-1) ** i * math.comb(k, i) * (k - i) ** k
            if weight == 0:
                continue
            inner_b += Fraction(weight) / (m * (LP + 1) - LP * (k - i))
            inner_g += Fraction(weight) / (m * (1 + L) - L * (k - i))
        choose = math.comb(m, k)
        s_b.append(choose * binomial_front * binomial_ratio ** k * inner_b)
        s_g.append(choose * geometric_front * geometric_ratio ** (k - 1) * inner_g)
    return zero, tuple(s_b), tuple(s_g)


def offspring_C3_coefficients(params: ModelParams) -> np.ndarray:
    """k = 0..m 에 대한 C3 자손 분포 (= PGF 다항식 계수)."""
    m = _check_degree(params)
    zero, s_b, s_g = _exact_c3_terms(params.p, params.lam, m)
    r = Fraction(params.r)
    coeffs = [float(zero)]
    coeffs.extend(float(r * g + (1 - r) * b) for b, g in zip(s_b, s_g))
    return np.array(coeffs)


def pmf_offspring_C3(k: int, params: ModelParams) -> float:
    """
    C3에서 한 콜로니가 만드는 새 콜로니 수의 분포.

    Args:
        k: 0..m 범위의 자손 수
        params: m이 포함된 모델 파라미터

    Returns:
        k=0이면 q/(1+lambda p), 그 외에는 r * S_G(k) + (1-r) * S_B(k)
    """
    _check_count(k)
    m = _check_degree(params)
    if k > m:
        raise ParameterDomainError(f"C3 offspring cannot exceed m={m}, got k={k}")
    return float(offspring_C3_coefficients(params)[k])


def pgf_C3(s: float, params: ModelParams) -> float:
    """psi(s) = r psi_G(s) + (1-r) psi_B(s), 계수 다항식으로 평가."""
    _check_s(s)
    return float(Polynomial(offspring_C3_coefficients(params))(s))


def pgf_C3_derivative(s: float, params: ModelParams) -> float:
    _check_s(s)
    return float(Polynomial(offspring_C3_coefficients(params)).deriv()(s))


def pgf_C3_theorem_form(s: float, params: ModelParams, effect: str = "mixed") -> float:
    """
    psi_B, psi_G 를 j-색인 이중합 형태 그대로 부동소수로 평가합니다.

    정확한 계수(i-색인, 꼬리합 형태)와 독립적인 경로라서 두 색인 규약이 같은 다항식을
    주는지 수치로 확인하는 용도입니다. m <= 8 정도에서만 정밀도가 충분합니다.

    Args:
        s: [0, 1] 범위의 인자
        params: m이 포함된 모델 파라미터
        effect: "binomial", "geometric", "mixed" 중 하나
    """
    _check_s(s)
    m = _check_degree(params)
    lam, p, q = params.lam, params.p, params.q
    base = q / (1.0 + lam * p)

    binomial_sum = math.fsum(
        math.comb(m, k) * (-lam * p * s / (m * (1.0 + lam * p))) ** k
        * math.fsum(
            math.comb(k, j) * (-1) ** j * j ** k / (m * (1.0 + lam * p) - lam * p * j)
            for j in range(k + 1)
        )
        for k in range(1, m + 1)
    )
    psi_b = base + m * (1.0 + lam) / lam * binomial_sum

    geometric_sum = math.fsum(
        math.comb(m, k) * (-lam * s / (m * (1.0 + lam))) ** (k - 1)
        * math.fsum(
            math.comb(k, j) * (-1) ** (j - 1) * j ** k / (m * (1.0 + lam) - lam * j)
            for j in range(k + 1)
        )
        for k in range(1, m + 1)
    )
    psi_g = base + (1.0 + lam) * p * s / (lam * p + 1.0) * geometric_sum

    if effect == "binomial":
        return psi_b
    if effect == "geometric":
        return psi_g
    if effect == "mixed":
        return params.r * psi_g + (1.0 - params.r) * psi_b
    raise ParameterDomainError(f"unknown collapse effect {effect!r}")


def mean_curve_C3(p: float, r: float, lam: float, m: int) -> float:
    """f_m(lambda): C3 평균 곡선 (f_m(0) = p)."""
    geometric = m * p * (lam + 1.0) ** 2 * r / ((m + lam) * (lam * p + 1.0))
    binomial = m * p * (lam + 1.0) * (1.0 - r) / (m + lam * p)
    return geometric + binomial


def mean_C3(params: ModelParams) -> float:
    """E[Z_1] = mp(lambda+1)^2 r/((m+lambda)(lambda p+1)) + mp(lambda+1)(1-r)/(m+lambda p)"""
    return mean_curve_C3(params.p, params.r, params.lam, params.require_degree())


def mean_offspring(model: Model, params: ModelParams) -> float:
    if model == Model.C2:
        return mean_C2(params)
    if model == Model.C3:
        return mean_C3(params)
    raise ParameterDomainError(f"model {model.value} has no auxiliary branching process")


# ---------------------------------------------------------------------------
# 분포/PGF 객체
# ---------------------------------------------------------------------------

class OffspringPmf:
    """유한 지지(C3) 또는 기하 꼬리(Z_B, Z_G, mixed_C2)를 갖는 자손 분포."""

    def __init__(self, kind: str, params: ModelParams):
        if kind not in OFFSPRING_KINDS:
            raise ParameterDomainError(f"unknown offspring kind {kind!r}")
        self.kind = kind
        self.params = params
        self.support_bound: Optional[int] = _check_degree(params) if kind == "C3" else None
        self._coefficients = offspring_C3_coefficients(params) if kind == "C3" else None

    @property
    def bounded(self) -> bool:
        return self.support_bound is not None

    def mass(self, k: int) -> float:
        _check_count(k)
        if self.kind == "Z_B":
            return pmf_Z_B(k, self.params)
        if self.kind == "Z_G":
            return pmf_Z_G(k, self.params)
        if self.kind == "mixed_C2":
            return pmf_Z(k, self.params)
        if k > self.support_bound:
            return 0.0
        return float(self._coefficients[k])

    def tail_mass(self, k: int) -> float:
        """P[Z >= k]"""
        _check_count(k)
        if self.kind == "Z_B":
            return tail_Z_B(k, self.params)
        if self.kind == "Z_G":
            return tail_Z_G(k, self.params)
        if self.kind == "mixed_C2":
            r = self.params.r
            return r * tail_Z_G(k, self.params) + (1.0 - r) * tail_Z_B(k, self.params)
        if k > self.support_bound:
            return 0.0
        return math.fsum(self._coefficients[k:])

    def truncation_point(self, tol: float = settings.TAIL_MASS_TOL) -> int:
        """꼬리 질량 P[Z >= K] 가 tol 미만이 되는 가장 작은 K."""
        if self.bounded:
            return self.support_bound + 1
        lam, p = self.params.lam, self.params.p
        ratio = max(lam * p / (1.0 + lam * p), lam / (1.0 + lam))
        # 기하 꼬리라서 로그로 시작점을 잡고 필요하면 앞으로 민다
        k = max(1, int(math.log(tol) / math.log(ratio)))
        while k > 1 and self.tail_mass(k - 1) < tol:
            k -= 1
        while self.tail_mass(k) >= tol:
            k += 1
        return k

    def probabilities(self, upto: Optional[int] = None) -> np.ndarray:
        upto = self.truncation_point() if upto is None else upto
        return np.array([self.mass(k) for k in range(upto)])

    def total_mass(self) -> float:
        """지지 전체 질량 (기하 꼬리는 닫힌 형태 꼬리합으로 마감)."""
        cutoff = self.truncation_point()
        head = math.fsum(self.probabilities(cutoff))
        if self.bounded:
            return head
        return head + self.tail_mass(cutoff)

    def mean(self) -> float:
        if self.kind == "Z_B":
            return mean_C2(self.params.replace(r=0.0))
        if self.kind == "Z_G":
            return mean_C2(self.params.replace(r=1.0))
        if self.kind == "mixed_C2":
            return mean_C2(self.params)
        return mean_C3(self.params)

    def __repr__(self) -> str:
        return f"OffspringPmf(kind={self.kind!r}, params={self.params!r})"


def polynomial_deficit(coefficients: np.ndarray) -> Callable[[float], float]:
    """계수 c_k 로 주어진 PGF 의 D(t) = sum_k c_k (1 - (1-t)^k)."""
    coefficients = np.asarray(coefficients, dtype=float)
    degrees = np.arange(coefficients.size)

    def deficit(t: float) -> float:
        _check_s(t)
        if t == 1.0:
            return float(1.0 - coefficients[0])
        return float(np.dot(coefficients, -np.expm1(degrees * math.log1p(-t))))

    return deficit


class PgfEvaluator:
    """
    자손 수 PGF의 평가기.

    deficit(t) = 1 - pgf(1 - t) 는 임계 근처 고정점 풀이에 쓰입니다. 닫힌 형태가 없으면
    evaluate 로부터 계산합니다.

    Attributes:
        model: Model.C2 또는 Model.C3 (임의 함수로 만든 경우 None)
        params: 모델 파라미터
        mean: 닫힌 형태 평균 (= 도함수의 s=1 값)
    """

    def __init__(
        self,
        evaluate: Callable[[float], float],
        derivative: Optional[Callable[[float], float]],
        mean: float,
        model: Optional[Model] = None,
        params: Optional[ModelParams] = None,
        deficit: Optional[Callable[[float], float]] = None,
    ):
        self._evaluate = evaluate
        self._derivative = derivative
        self._deficit = deficit
        self.mean = mean
        self.model = model
        self.params = params

    @classmethod
    def for_model(cls, model: Model, params: ModelParams) -> "PgfEvaluator":
        if model == Model.C2:
            return cls(
                evaluate=lambda s: pgf_C2(s, params),
                derivative=lambda s: pgf_C2_derivative(s, params),
                mean=mean_C2(params),
                model=model,
                params=params,
                deficit=lambda t: pgf_C2_deficit(t, params),
            )
        if model == Model.C3:
            coefficients = offspring_C3_coefficients(params)
            poly = Polynomial(coefficients)
            slope = poly.deriv()
            return cls(
                evaluate=lambda s: float(poly(s)),
                derivative=lambda s: float(slope(s)),
                mean=mean_C3(params),
                model=model,
                params=params,
                deficit=polynomial_deficit(coefficients),
            )
        raise ParameterDomainError(f"model {model.value} has no offspring PGF")

    def evaluate(self, s: float) -> float:
        return self._evaluate(s)

    def __call__(self, s: float) -> float:
        return self._evaluate(s)

    def deficit(self, t: float) -> float:
        if self._deficit is None:
            return 1.0 - self._evaluate(1.0 - t)
        return self._deficit(t)

    @property
    def has_derivative(self) -> bool:
        return self._derivative is not None

    def derivative(self, s: float) -> float:
        if self._derivative is None:
            raise ParameterDomainError("this PGF has no derivative")
        return self._derivative(s)

    @property
    def derivative_at_1(self) -> float:
        return self.mean

    def is_valid_shape(self, points: int = 101, tol: float = 1e-12) -> bool:
        """[0,1] 격자에서 비감소성과 볼록성을 확인합니다."""
        grid = np.linspace(0.0, 1.0, points)
        values = np.array([self._evaluate(float(s)) for s in grid])
        first = np.diff(values)
        second = np.diff(first)
        return bool(np.all(first >= -tol) and np.all(second >= -tol))
