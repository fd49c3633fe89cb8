"""
파라미터, 추정치, 시뮬레이션 설정, 스윕 테이블을 위한 Pydantic 모델 정의.

모든 수치 모듈은 이 모듈의 모델을 주고받으며, 정의역 검증은 모델 생성 시점에 이루어집니다.
"""

import math
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import settings
from utils.error_handler import ParameterDomainError

INF = "inf"
RateValue = Union[float, Literal["inf"]]


class Model(str, Enum):
    """세 가지 붕괴 과정."""

    C1 = "c1"  # 분산 없음
    C2 = "c2"  # 공간 제약 없는 분산
    C3 = "c3"  # m-정규 그래프 위의 분산


class EstimateMethod(str, Enum):
    CLOSED_FORM = "closed_form"
    FIXED_POINT = "fixed_point"
    MONTE_CARLO = "monte_carlo"


class RateSolver(str, Enum):
    CLOSED_FORM = "closed_form"
    BISECTION = "bisection"


def round_sig(value: Optional[float], digits: int = settings.SIGNIFICANT_DIGITS) -> Union[float, str, None]:
    """보고서용 숫자를 유효숫자 12자리로 반올림합니다. 무한대는 문자열 'inf'."""
    if value is None:
        return None
    if isinstance(value, str):
        return value
    if math.isinf(value):
        return INF
    return float(f"{value:.{digits}g}")


class ModelParams(BaseModel):
    """붕괴 모델 파라미터 (p, r, lambda, m). 붕괴율은 1로 고정."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    p: float = Field(..., gt=0.0, lt=1.0, allow_inf_nan=False, description="노출 1회당 생존 확률")
    r: float = Field(..., ge=0.0, le=1.0, allow_inf_nan=False, description="기하 효과 혼합 가중치")
    lam: float = Field(..., gt=0.0, alias="lambda", allow_inf_nan=False, description="출생률")
    m: Optional[int] = Field(None, ge=1, description="그래프 차수 (C3 전용)")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @classmethod
    def build(cls, p: float, r: float, lam: float, m: Optional[int] = None) -> "ModelParams":
        """검증 오류를 ParameterDomainError로 변환하는 생성 헬퍼."""
        try:
            return cls(p=p, r=r, lam=lam, m=m)
        except ValidationError as e:
            fields = ", ".join(str(err["loc"][0]) for err in e.errors() if err.get("loc"))
            raise ParameterDomainError(f"invalid model parameters ({fields}): {e}") from e

    def replace(self, **changes: Any) -> "ModelParams":
        data = {"p": self.p, "r": self.r, "lam": self.lam, "m": self.m}
        data.update(changes)
        return ModelParams.build(**data)

    def require_degree(self) -> int:
        if self.m is None:
            raise ParameterDomainError("graph degree m is required for model c3")
        return self.m


class ExtinctionEstimate(BaseModel):
    """소멸 확률 추정치와 진단 정보."""

    probability: float = Field(..., ge=0.0, le=1.0)
    method: EstimateMethod
    iterations: int = Field(0, ge=0, description="고정점 반복 횟수 또는 MC 반복 수")
    ci_half_width: float = Field(0.0, ge=0.0)
    censored_fraction: float = Field(0.0, ge=0.0, le=1.0)
    escaped_fraction: float = Field(0.0, ge=0.0, le=1.0)
    mean_extinction_steps: Optional[float] = None
    reference: Optional[float] = Field(None, description="닫힌 형태 교차 검증 값")

    @model_validator(mode="after")
    def _deterministic_has_no_interval(self) -> "ExtinctionEstimate":
        if self.method != EstimateMethod.MONTE_CARLO and self.ci_half_width != 0.0:
            raise ValueError("ci_half_width must be 0 for deterministic methods")
        return self


class CriticalRate(BaseModel):
    """임계 출생률. 무한대는 문자열 마커 'inf'로 표현."""

    value: RateValue
    model: Model
    solver: RateSolver

    @field_validator("value")
    @classmethod
    def _positive_or_marker(cls, v: RateValue) -> RateValue:
        if isinstance(v, str):
            if v != INF:
                raise ValueError(f"unknown rate marker {v!r}")
            return v
        if not (v > 0.0) or math.isinf(v) or math.isnan(v):
            raise ValueError("finite critical rate must be > 0; use the 'inf' marker for infinity")
        return v

    @property
    def is_infinite(self) -> bool:
        return self.value == INF

    def as_float(self) -> float:
        return math.inf if self.is_infinite else float(self.value)


class SimConfig(BaseModel):
    """몬테카를로 설정. (base_seed, replicate_index)가 각 반복의 난수열을 결정."""

    model_config = ConfigDict(frozen=True)

    replicates: int = Field(settings.DEFAULT_REPLICATES, ge=1)
    generation_cap: int = Field(settings.DEFAULT_GENERATION_CAP, ge=1)
    population_cap: int = Field(settings.DEFAULT_POPULATION_CAP, ge=1)
    step_cap: int = Field(settings.DEFAULT_STEP_CAP, ge=1)
    base_seed: int = Field(settings.DEFAULT_SEED, ge=0, lt=2**64)
    escape_tolerance: float = Field(settings.ESCAPE_TOLERANCE, ge=0.0, lt=1.0)
    threads: Optional[int] = Field(None, ge=1)


class RunOutcome(BaseModel):
    """한 번의 반복 결과."""

    extinct: bool
    censored: bool = False
    escaped: bool = False
    generations_or_steps: int = Field(..., ge=0)
    max_population: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _consistent(self) -> "RunOutcome":
        if self.censored and self.extinct:
            raise ValueError("a censored run cannot be extinct")
        if self.escaped and (self.extinct or self.censored):
            raise ValueError("an escaped run is resolved as surviving")
        return self


class SweepAxis(BaseModel):
    """선형 격자 축 (끝점 포함)."""

    name: str
    min: float
    max: float
    steps: int = Field(..., ge=1)
    integer: bool = False

    @model_validator(mode="after")
    def _ordered(self) -> "SweepAxis":
        if self.max < self.min:
            raise ValueError(f"axis {self.name}: max < min")
        if self.integer and self.steps != int(self.max) - int(self.min) + 1:
            raise ValueError(f"axis {self.name}: integer axis must enumerate min..max")
        return self

    @classmethod
    def integer_range(cls, name: str, low: int, high: int) -> "SweepAxis":
        return cls(name=name, min=low, max=high, steps=high - low + 1, integer=True)

    def values(self) -> List[float]:
        if self.integer:
            return list(range(int(self.min), int(self.max) + 1))
        if self.steps == 1:
            return [float(self.min)]
        grid = np.linspace(self.min, self.max, self.steps)
        if self.name == "p":
            grid = np.clip(grid, settings.P_CLAMP, 1.0 - settings.P_CLAMP)
        return [float(v) for v in grid]


class SweepCell(BaseModel):
    """스윕 테이블의 한 셀 (CSV 한 행)."""

    model: Model
    p: float
    lam: Optional[float] = Field(None, alias="lambda")
    r: float
    m: Optional[int] = None
    mean_offspring: Optional[float] = None
    survives: Optional[bool] = None
    extinction_prob: Optional[float] = None
    critical_lambda: Optional[RateValue] = None
    label: Optional[str] = None
    status: Literal["ok", "failed"] = "ok"

    model_config = ConfigDict(populate_by_name=True)


class SweepTable(BaseModel):
    """두 축 격자 위의 셀 모음 (행 우선 순서)."""

    kind: Literal["phase", "critical", "strategy"]
    axes: List[SweepAxis]
    cells: List[SweepCell]
    metadata: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _shape_and_consistency(self) -> "SweepTable":
        expected = 1
        for axis in self.axes:
            expected *= axis.steps
        if expected != len(self.cells):
            raise ValueError(f"cell count {len(self.cells)} != product of axis steps {expected}")
        for cell in self.cells:
            if cell.survives is not None and cell.extinction_prob is not None:
                if cell.survives != (cell.extinction_prob < 1.0 - settings.SURVIVAL_MARGIN):
                    raise ValueError(f"inconsistent survival flag at p={cell.p}, lambda={cell.lam}")
        return self

    def label_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for cell in self.cells:
            key = cell.label if cell.status == "ok" else "failed"
            key = key or "unlabeled"
            counts[key] = counts.get(key, 0) + 1
        return counts

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for cell in self.cells:
            row = cell.model_dump(by_alias=True)
            row["model"] = cell.model.value
            critical = row["critical_lambda"]
            row["critical_lambda"] = math.inf if critical == INF else critical
            rows.append(row)
        frame = pd.DataFrame(rows, columns=settings.SWEEP_COLUMNS)
        frame["m"] = frame["m"].astype("Int64")
        frame["survives"] = frame["survives"].astype("boolean")
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, kind: str, axes: List[SweepAxis],
                   metadata: Optional[Dict[str, Any]] = None) -> "SweepTable":
        cells = []
        for record in frame.to_dict(orient="records"):
            cleaned = {k: (None if _is_missing(v) else v) for k, v in record.items()}
            critical = cleaned.get("critical_lambda")
            if critical is not None and math.isinf(float(critical)):
                cleaned["critical_lambda"] = INF
            elif critical is not None:
                cleaned["critical_lambda"] = float(critical)
            if cleaned.get("m") is not None:
                cleaned["m"] = int(cleaned["m"])
            if cleaned.get("survives") is not None:
                cleaned["survives"] = _as_bool(cleaned["survives"])
            cells.append(SweepCell(**cleaned))
        return cls(kind=kind, axes=axes, cells=cells, metadata=metadata or {})

    @classmethod
    def from_csv(cls, path: str, kind: str, axes: List[SweepAxis],
                 metadata: Optional[Dict[str, Any]] = None) -> "SweepTable":
        """to_csv 로 쓴 파일을 다시 읽습니다 ('inf' 는 float 무한대로 파싱됨)."""
        frame = pd.read_csv(path, dtype={"model": str, "label": str, "status": str})
        return cls.from_frame(frame, kind, axes, metadata)


def _is_missing(value: Any) -> bool:
    if value is None or value is pd.NA:
        return True
    try:
        return bool(pd.isna(value))
    except (TypeError, ValueError):
        return False


def _as_bool(value: Any) -> bool:
    if isinstance(value, str):
        return value.strip().lower() == "true"
    return bool(value)


class RunReport(BaseModel):
    """CLI 명령 한 번의 결과 보고서."""

    command: str
    params: Dict[str, Any] = Field(default_factory=dict)
    results: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    wall_time: float = 0.0
    version: str = settings.APP_VERSION
    diagnostics: Dict[str, Any] = Field(default_factory=dict)
