"""
예외 계층과 공통 오류 처리 데코레이터.

수치 모듈은 여기 정의된 예외만 던지고, CLI가 이를 종료 코드로 변환합니다.
"""

import functools
import logging
import traceback
from typing import Any, Callable, Optional, Tuple, Type, TypeVar, Union, cast

logger = logging.getLogger(__name__)

T = TypeVar("T")


class CollapseLabError(Exception):
    """모든 도메인 예외의 기반 클래스."""

    exit_code = 2


class ParameterDomainError(CollapseLabError, ValueError):
    """모델 파라미터나 인자가 정의역을 벗어난 경우."""

    exit_code = 1


class ConvergenceError(CollapseLabError):
    """고정점/근 찾기 전략이 모두 실패한 경우 (잘못된 PGF를 의미)."""

    exit_code = 2


class OutputWriteError(CollapseLabError):
    """CSV/JSON 출력 파일을 쓸 수 없는 경우."""

    exit_code = 2


class ValidationFailure(CollapseLabError):
    """내장 교차 검증 스위트에서 하나 이상의 검사가 실패한 경우."""

    exit_code = 3


def handle_errors(
    error_type: Union[Type[BaseException], Tuple[Type[BaseException], ...]] = CollapseLabError,
    default_return: Any = None,
    log_traceback: bool = False,
) -> Callable[[Callable[..., T]], Callable[..., Optional[T]]]:
    """
    지정한 예외를 로깅하고 기본값을 반환하도록 함수를 감싸는 데코레이터.

    Args:
        error_type: 잡아낼 예외 타입 (또는 튜플)
        default_return: 예외 발생 시 반환할 값. 호출 가능한 객체면 예외를 인자로 호출한 결과를 반환
        log_traceback: True면 스택 트레이스까지 로깅

    Returns:
        오류 처리가 추가된 데코레이터
    """
    def decorator(func: Callable[..., T]) -> Callable[..., Optional[T]]:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Optional[T]:
            try:
                return func(*args, **kwargs)
            except error_type as e:
                error_details = f"{type(e).__name__}: {e}"
                if log_traceback:
                    logger.error(f"{func.__name__} 실행 중 오류 발생: {error_details}\n{traceback.format_exc()}")
                else:
                    logger.error(f"{func.__name__} 실행 중 오류 발생: {error_details}")
                if callable(default_return):
                    return default_return(e)
                return default_return

        return cast(Callable[..., Optional[T]], wrapper)

    return decorator


def log_function_call(func: Callable[..., T]) -> Callable[..., T]:
    """함수 진입/종료를 DEBUG 레벨로 기록합니다."""
    func_logger = logging.getLogger(func.__module__)

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> T:
        if not func_logger.isEnabledFor(logging.DEBUG):
            return func(*args, **kwargs)
        func_logger.debug(f"-> {func.__name__} args={args} kwargs={kwargs}")
        result = func(*args, **kwargs)
        func_logger.debug(f"<- {func.__name__} = {result!r}")
        return result

    return wrapper
