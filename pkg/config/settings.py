# config/settings.py
import os

APP_NAME = "collapse-lab"
APP_VERSION = "0.3.0"

# Numerical Configuration
PMF_DIRECT_PRODUCT_MAX_I = 50  # 이보다 큰 콜로니는 log 공간에서 계산
MAX_PGF_DEGREE = 64  # C3 PGF 차수(m) 상한 (이항계수/전사함수 개수 폭증 방지)
PMF_TOL = 1e-12
TAIL_MASS_TOL = 1e-13  # 무한 지지 PMF 절단 시 남는 꼬리 질량

FIXED_POINT_TOL = 1e-14
FIXED_POINT_STALL_ITER = 20000  # 임계 근처에서 반복이 느려지면 구간 근 찾기로 전환
FIXED_POINT_BRACKET_MAX_HALVINGS = 200  # t = 1 - s 구간 하한을 절반씩 줄이는 최대 횟수
PGF_NORMALIZATION_TOL = 1e-10

CRITICAL_XTOL = 1e-12
LAMBDA_BRACKET_START = 1.0
LAMBDA_BRACKET_MAX_DOUBLINGS = 60

SURVIVAL_MARGIN = 1e-9  # survival <=> extinction < 1 - SURVIVAL_MARGIN
CRITICAL_MEAN_TOL = 1e-12  # 평균이 1 + 이 값 이하이면 임계(소멸)로 취급
STRATEGY_TIE_TOL = 1e-9
CRITICAL_CHECK_TOL = 1e-9  # r = 1 닫힌 형태 대조 허용 오차
P_CLAMP = 1e-6  # p 축 끝점을 (0,1) 안쪽으로

# Simulation Configuration
DEFAULT_REPLICATES = 10000
DEFAULT_GENERATION_CAP = 10**4
DEFAULT_POPULATION_CAP = 10**7
DEFAULT_STEP_CAP = 10**7
DEFAULT_SEED = 20240611
ESCAPE_TOLERANCE = 1e-12  # rho**n 이 이 값보다 작으면 생존으로 확정
REPLICATE_CHUNK_SIZE = 2048
PER_COLONY_GENERATION_SIZE = 0  # 이 크기 이하 세대는 콜로니별로 추출 (0이면 항상 세대 합계)
UNRELIABLE_CENSORED_FRACTION = 0.5
CI_Z = 1.96

# Reporting
P_NOTE_MAX_DENOMINATOR = 12  # 이 분모 이하의 분수와 가까운 p 는 반올림 값으로 표시
P_NOTE_TOL = 1e-3

# Parallelism
THREADS_ENV_VAR = "COLLAPSE_LAB_THREADS"


def get_thread_count():
    """워커 스레드 수를 반환합니다 (환경 변수가 우선)."""
    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


# Output Configuration
OUTPUT_DIR = "outputs"
SIGNIFICANT_DIGITS = 12
CSV_FLOAT_FORMAT = "%.12g"
CSV_LINE_TERMINATOR = "\n"
SWEEP_COLUMNS = [
    "model",
    "p",
    "lambda",
    "r",
    "m",
    "mean_offspring",
    "survives",
    "extinction_prob",
    "critical_lambda",
    "label",
    "status",
]

# Logging Configuration
LOG_LEVEL = "INFO"  # DEBUG로 하면 고정점 반복 횟수 등 상세 로그 출력
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
