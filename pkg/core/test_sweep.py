"""
파라미터 격자 스윕 단위 테스트.
"""

import math
import unittest
from unittest.mock import patch

from core import sweep
from core.schemas import INF, Model, SweepAxis
from utils.error_handler import ConvergenceError, ParameterDomainError


def p_axis(low, high, steps):
    return SweepAxis(name="p", min=low, max=high, steps=steps)


def lambda_axis(low, high, steps):
    return SweepAxis(name="lambda", min=low, max=high, steps=steps)


class TestPhaseGrid(unittest.TestCase):
    """상 다이어그램 테스트."""

    def test_cells_around_critical_curve(self):
        table = sweep.phase_grid(Model.C2, 1.0, p_axis(0.5, 0.6, 2), lambda_axis(0.5, 0.7, 3))
        cells = {(cell.p, round(cell.lam, 10)): cell for cell in table.cells}
        self.assertTrue(cells[(0.5, 0.7)].survives)
        self.assertFalse(cells[(0.5, 0.5)].survives)
        self.assertEqual(cells[(0.5, 0.7)].label, sweep.SURVIVAL)
        self.assertAlmostEqual(cells[(0.5, 0.5)].critical_lambda, 0.618034, delta=1e-6)

    def test_row_major_order(self):
        table = sweep.phase_grid(Model.C2, 0.5, p_axis(0.2, 0.8, 3), lambda_axis(1.0, 3.0, 4), threads=4)
        self.assertEqual(len(table.cells), 12)
        self.assertEqual([cell.p for cell in table.cells[:4]], [0.2] * 4)
        for cell, expected in zip(table.cells[:4], (1.0, 5.0 / 3.0, 7.0 / 3.0, 3.0)):
            self.assertAlmostEqual(cell.lam, expected, places=12)
        self.assertEqual([cell.p for cell in table.cells[-4:]], [0.8] * 4)

    def test_thread_count_does_not_change_results(self):
        tables = [
            sweep.phase_grid(Model.C3, 0.7, p_axis(0.3, 0.9, 4), lambda_axis(0.5, 4.0, 5), m=3,
                             with_extinction=True, threads=threads).model_dump()
            for threads in (1, 4)
        ]
        self.assertEqual(tables[0], tables[1])

    def test_c1_with_mixed_effects_never_survives(self):
        table = sweep.phase_grid(Model.C1, 0.5, p_axis(0.1, 0.9, 5), lambda_axis(0.5, 50.0, 5), with_extinction=True)
        self.assertEqual(table.label_counts(), {sweep.EXTINCTION: 25})
        self.assertTrue(all(cell.critical_lambda == INF for cell in table.cells))
        self.assertTrue(all(cell.mean_offspring is None for cell in table.cells))

    def test_monotone_columns_bracket_critical_rate(self):
        lambdas = lambda_axis(0.1, 5.0, 50)
        table = sweep.phase_grid(Model.C3, 0.5, p_axis(0.2, 0.9, 8), lambdas, m=4, with_extinction=True)
        step = (lambdas.max - lambdas.min) / (lambdas.steps - 1)
        for p, first in sweep.survival_switch_points(table).items():
            row = [cell for cell in table.cells if cell.p == p]
            critical = row[0].critical_lambda
            if first is None:
                self.assertTrue(critical == INF or critical >= lambdas.max - step)
                continue
            self.assertLessEqual(first - step, critical)
            self.assertLessEqual(critical, first)

    def test_failed_cells_do_not_abort(self):
        with patch("core.sweep.extinction_probability", side_effect=ConvergenceError("boom")):
            table = sweep.phase_grid(Model.C2, 1.0, p_axis(0.2, 0.8, 2), lambda_axis(1.0, 2.0, 2), with_extinction=True)
        self.assertEqual([cell.status for cell in table.cells], ["failed"] * 4)
        self.assertEqual(table.label_counts(), {"failed": 4})

    def test_invalid_requests(self):
        with self.assertRaises(ParameterDomainError):
            sweep.phase_grid(Model.C2, 1.0, p_axis(0.2, 0.8, 1), lambda_axis(1.0, 2.0, 2))
        with self.assertRaises(ParameterDomainError):
            sweep.phase_grid(Model.C2, 1.0, lambda_axis(0.2, 0.8, 2), p_axis(1.0, 2.0, 2))
        with self.assertRaises(ParameterDomainError):
            sweep.phase_grid(Model.C3, 1.0, p_axis(0.2, 0.8, 2), lambda_axis(1.0, 2.0, 2))


class TestCriticalCurve(unittest.TestCase):
    """임계 곡선 테이블 테스트."""

    def test_c2_rows(self):
        table = sweep.critical_curve_table(Model.C2, 1.0, p_axis(0.1, 0.9, 9))
        self.assertEqual(len(table.cells), 9)
        row = table.cells[4]
        self.assertAlmostEqual(row.p, 0.5)
        self.assertAlmostEqual(row.critical_lambda, 0.618034, delta=1e-6)
        self.assertTrue(table.metadata["fixed"]["closed_form_checked"])
        self.assertTrue(all(cell.status == "ok" for cell in table.cells))

    def test_crossing_identity(self):
        table = sweep.critical_curve_table(Model.C3, 1.0, p_axis(0.75, 0.75, 1), m=5)
        self.assertAlmostEqual(table.cells[0].critical_lambda, 1.0 / 3.0, delta=1e-9)

    def test_infinite_rows(self):
        table = sweep.critical_curve_table(Model.C1, 0.3, p_axis(0.1, 0.9, 3))
        self.assertTrue(all(cell.critical_lambda == INF for cell in table.cells))
        self.assertEqual(table.label_counts(), {"infinite": 3})

    def test_endpoints_are_clamped(self):
        table = sweep.critical_curve_table(Model.C2, 1.0, p_axis(0.0, 1.0, 3))
        self.assertEqual(table.cells[0].p, 1e-6)
        self.assertEqual(table.cells[-1].p, 1.0 - 1e-6)
        self.assertTrue(all(math.isfinite(cell.critical_lambda) for cell in table.cells))

    def test_closed_form_disagreement_marks_row_failed(self):
        with patch("core.sweep.critical_lambda_closed_form_r1") as closed_form:
            closed_form.return_value.is_infinite = False
            closed_form.return_value.as_float.return_value = 123.0
            closed_form.return_value.value = 123.0
            table = sweep.critical_curve_table(Model.C2, 1.0, p_axis(0.4, 0.6, 2))
        self.assertEqual([cell.status for cell in table.cells], ["failed", "failed"])


class TestStrategyComparison(unittest.TestCase):
    """분산 전략 비교 테스트."""

    def test_labels(self):
        self.assertEqual(sweep.compare_strategies(0.5, 5), sweep.DISPERSION_BETTER)
        self.assertEqual(sweep.compare_strategies(0.9, 5), sweep.NO_DISPERSION_BETTER)
        self.assertEqual(sweep.compare_strategies(0.75, 5), sweep.TIE)
        for p in (0.05, 0.5, 0.95):
            self.assertEqual(sweep.compare_strategies(p, 2), sweep.NO_DISPERSION_BETTER)

    def test_mixed_effects_favour_dispersion(self):
        self.assertEqual(sweep.compare_strategies(0.9, 5, r=0.5), sweep.DISPERSION_BETTER)

    def test_boundary_extraction(self):
        p_values = p_axis(0.01, 0.99, 99)
        table = sweep.strategy_comparison(SweepAxis.integer_range("m", 2, 10), p_values)
        self.assertEqual(len(table.cells), 9 * 99)
        step = (p_values.max - p_values.min) / (p_values.steps - 1)
        boundary = sweep.strategy_boundary(table)
        self.assertAlmostEqual(boundary[2], 0.01)
        for m in range(3, 11):
            with self.subTest(m=m):
                self.assertLessEqual(abs(boundary[m] - sweep.expected_strategy_boundary(m)), step + 1e-12)

    def test_requires_integer_degrees(self):
        with self.assertRaises(ParameterDomainError):
            sweep.strategy_comparison(SweepAxis(name="m", min=2, max=4, steps=5), p_axis(0.1, 0.9, 3))
        with self.assertRaises(ParameterDomainError):
            sweep.strategy_comparison(SweepAxis.integer_range("m", 1, 4), p_axis(0.1, 0.9, 3))


if __name__ == "__main__":
    unittest.main()
