"""
난수 스트림과 오류 처리 데코레이터 단위 테스트.
"""

import logging
import unittest

import numpy as np

from utils.error_handler import (
    CollapseLabError,
    ConvergenceError,
    OutputWriteError,
    ParameterDomainError,
    ValidationFailure,
    handle_errors,
    log_function_call,
)
from utils.rng import ReplicateStream


class TestReplicateStream(unittest.TestCase):
    """ReplicateStream 테스트."""

    def test_same_key_same_numbers(self):
        first = ReplicateStream.for_replicate(42, 7).random(10)
        second = ReplicateStream.for_replicate(42, 7).random(10)
        np.testing.assert_array_equal(first, second)

    def test_keys_are_independent_of_order(self):
        forward = [ReplicateStream.for_replicate(42, i).random() for i in range(5)]
        backward = [ReplicateStream.for_replicate(42, i).random() for i in reversed(range(5))]
        self.assertEqual(forward, list(reversed(backward)))
        self.assertEqual(len(set(forward)), 5)

    def test_seed_changes_stream(self):
        self.assertNotEqual(ReplicateStream(1).random(), ReplicateStream(2).random())
        stream = ReplicateStream.for_replicate(3, 4)
        self.assertEqual((stream.base_seed, stream.key), (3, (4,)))


class TestErrorHandling(unittest.TestCase):
    """예외 계층과 데코레이터 테스트."""

    def test_exit_codes(self):
        self.assertEqual(ParameterDomainError.exit_code, 1)
        self.assertEqual(ConvergenceError.exit_code, 2)
        self.assertEqual(OutputWriteError.exit_code, 2)
        self.assertEqual(ValidationFailure.exit_code, 3)
        self.assertTrue(issubclass(ParameterDomainError, ValueError))

    def test_handle_errors_returns_default(self):
        @handle_errors(CollapseLabError, default_return=-1)
        def failing():
            raise ConvergenceError("stalled")

        with self.assertLogs("utils.error_handler", level="ERROR") as logs:
            self.assertEqual(failing(), -1)
        self.assertIn("stalled", logs.output[0])

    def test_handle_errors_callable_default(self):
        @handle_errors(ParameterDomainError, default_return=lambda e: str(e))
        def failing():
            raise ParameterDomainError("p out of range")

        with self.assertLogs("utils.error_handler", level="ERROR"):
            self.assertEqual(failing(), "p out of range")

    def test_other_errors_propagate(self):
        @handle_errors(ParameterDomainError)
        def failing():
            raise ConvergenceError("boom")

        with self.assertRaises(ConvergenceError):
            failing()

    def test_log_function_call(self):
        @log_function_call
        def add(a, b):
            return a + b

        logger = logging.getLogger(__name__)
        previous = logger.level
        logger.setLevel(logging.DEBUG)
        try:
            with self.assertLogs(__name__, level="DEBUG") as logs:
                self.assertEqual(add(2, 3), 5)
        finally:
            logger.setLevel(previous)
        self.assertEqual(len(logs.output), 2)


if __name__ == "__main__":
    unittest.main()
