"""
소멸 확률, 생존 판정, 임계 출생률, drift 단위 테스트.
"""

import math
import unittest
from unittest.mock import patch

from core import analytic
from core.offspring import PgfEvaluator, mean_C2, mean_C3, offspring_C3_coefficients
from core.schemas import INF, EstimateMethod, Model, ModelParams, RateSolver
from utils.error_handler import ConvergenceError, ParameterDomainError


def c2_example(r):
    if r <= 7.0 / 12.0:
        return 1.0
    return (12.0 * r + 49.0 - math.sqrt(144.0 * r * r + 1176.0 * r + 49.0)) / 28.0


class TestSurvival(unittest.TestCase):
    """생존 판정 테스트."""

    def test_c1(self):
        self.assertFalse(analytic.survives_C1(ModelParams.build(p=0.5, r=0.5, lam=100.0)))
        self.assertTrue(analytic.survives_C1(ModelParams.build(p=0.5, r=1.0, lam=3.0)))
        self.assertFalse(analytic.survives_C1(ModelParams.build(p=0.5, r=1.0, lam=1.0)))

    def test_c2(self):
        self.assertTrue(analytic.survives_C2(ModelParams.build(p=0.4, r=1.0, lam=1.0)))
        self.assertFalse(analytic.survives_C2(ModelParams.build(p=0.4, r=0.5, lam=1.0)))
        self.assertTrue(analytic.survives_C2(ModelParams.build(p=0.6, r=0.0, lam=1.0)))

    def test_c3(self):
        self.assertTrue(analytic.survives_C3(ModelParams.build(p=2.0 / 3.0, r=0.0, lam=1.0, m=3)))
        self.assertFalse(analytic.survives_C3(ModelParams.build(p=2.0 / 3.0, r=1.0, lam=1.0, m=1)))
        self.assertTrue(analytic.survives_C3(ModelParams.build(p=2.0 / 3.0, r=1.0, lam=1.0, m=3)))

    def test_exactly_critical_mean_is_extinction(self):
        params = ModelParams.build(p=0.5, r=0.0, lam=1.0)
        self.assertFalse(analytic.survives_C2(params))
        self.assertEqual(analytic.extinction_C2(params).probability, 1.0)


class TestExtinction(unittest.TestCase):
    """소멸 확률 테스트."""

    def test_c1_closed_form(self):
        cases = [((0.5, 0.5, 100.0), 1.0), ((0.5, 1.0, 3.0), 1.0 / 3.0), ((0.5, 1.0, 0.5), 1.0)]
        for (p, r, lam), expected in cases:
            with self.subTest(p=p, r=r, lam=lam):
                estimate = analytic.extinction_C1(ModelParams.build(p=p, r=r, lam=lam))
                self.assertAlmostEqual(estimate.probability, expected, places=15)
                self.assertEqual(estimate.method, EstimateMethod.CLOSED_FORM)
                self.assertEqual(estimate.ci_half_width, 0.0)

    def test_c2_values(self):
        self.assertEqual(analytic.extinction_C2(ModelParams.build(p=0.4, r=0.5, lam=1.0)).probability, 1.0)
        self.assertAlmostEqual(
            analytic.extinction_C2(ModelParams.build(p=0.4, r=1.0, lam=1.0)).probability, 6.0 / 7.0, delta=1e-12
        )
        self.assertAlmostEqual(
            analytic.extinction_C2(ModelParams.build(p=0.4, r=0.8, lam=1.0)).probability,
            (58.6 - math.sqrt(1081.96)) / 28.0,
            delta=1e-10,
        )
        self.assertAlmostEqual(
            analytic.extinction_C2(ModelParams.build(p=0.6, r=0.0, lam=1.0)).probability, 2.0 / 3.0, delta=1e-12
        )

    def test_c2_piecewise_closed_form(self):
        for k in range(11):
            r = k / 10.0
            with self.subTest(r=r):
                estimate = analytic.extinction_C2(ModelParams.build(p=0.4, r=r, lam=1.0))
                self.assertAlmostEqual(estimate.probability, c2_example(r), delta=1e-10)
                self.assertEqual(estimate.method, EstimateMethod.FIXED_POINT)

    def test_c2_reference_at_pure_effects(self):
        estimate = analytic.extinction_C2(ModelParams.build(p=0.3, r=0.0, lam=4.0))
        self.assertAlmostEqual(estimate.reference, 0.7 / 1.2, places=14)
        self.assertIsNone(analytic.extinction_C2(ModelParams.build(p=0.3, r=0.5, lam=4.0)).reference)

    def test_c3_values(self):
        self.assertAlmostEqual(
            analytic.extinction_C3(ModelParams.build(p=2.0 / 3.0, r=0.0, lam=1.0, m=3)).probability,
            (-440.0 + math.sqrt(308000.0)) / 160.0,
            delta=1e-10,
        )
        self.assertAlmostEqual(
            analytic.extinction_C3(ModelParams.build(p=2.0 / 3.0, r=1.0, lam=1.0, m=3)).probability,
            (-572.0 + math.sqrt(531674.0)) / 286.0,
            delta=1e-10,
        )
        self.assertEqual(analytic.extinction_C3(ModelParams.build(p=0.2, r=0.5, lam=0.1, m=3)).probability, 1.0)

    def test_dispatch(self):
        params = ModelParams.build(p=0.4, r=1.0, lam=1.0, m=3)
        self.assertEqual(
            analytic.extinction_probability(Model.C3, params).probability,
            analytic.extinction_C3(params).probability,
        )

    def test_orderings(self):
        for p in (0.2, 0.5, 0.8):
            for lam in (0.5, 2.0, 6.0):
                params = ModelParams.build(p=p, r=0.5, lam=lam)
                self.assertGreaterEqual(analytic.binomial_vs_geometric_gap(params), -1e-12)
                self.assertGreaterEqual(analytic.dispersion_gain(params), -1e-12)

    def test_geometric_effect_strictly_helps_above_threshold(self):
        for lam in (0.25, 0.5, 1.0, 2.0, 4.0):
            threshold = 1.0 / (1.0 + lam + lam * lam)
            for k in range(1, 20):
                p = 0.05 * k
                params = ModelParams.build(p=p, r=0.0, lam=lam)
                binomial = analytic.extinction_C2(params).probability
                geometric = analytic.extinction_C2(params.replace(r=1.0)).probability
                with self.subTest(lam=lam, p=p):
                    if p > threshold:
                        self.assertGreater(binomial - geometric, 1e-9)
                        self.assertGreater(analytic.binomial_vs_geometric_gap(params), 0.0)
                    else:
                        self.assertEqual(binomial, 1.0)
                        self.assertEqual(geometric, 1.0)


class TestFixedPoint(unittest.TestCase):
    """최소 고정점 풀이 테스트."""

    def test_quadratic_pgf(self):
        # 0.25 + 0.75 s^2 의 최소 고정점은 1/3
        pgf = PgfEvaluator(lambda s: 0.25 + 0.75 * s * s, lambda s: 1.5 * s, mean=1.5)
        self.assertAlmostEqual(analytic.smallest_fixed_point(pgf), 1.0 / 3.0, delta=1e-12)

    def test_subcritical_returns_one(self):
        pgf = PgfEvaluator(lambda s: 0.5 + 0.5 * s, None, mean=0.5)
        self.assertEqual(analytic.smallest_fixed_point(pgf), 1.0)

    def test_unnormalized_pgf_is_rejected(self):
        pgf = PgfEvaluator(lambda s: 0.1 + 0.5 * s * s, None, mean=1.0)
        with self.assertRaises(ConvergenceError):
            analytic.smallest_fixed_point(pgf)

    def test_stalled_iteration_switches_to_bracketed_search(self):
        params = ModelParams.build(p=0.4, r=0.9, lam=1.0)
        with patch("core.analytic.settings") as mock_settings:
            mock_settings.FIXED_POINT_STALL_ITER = 3
            mock_settings.FIXED_POINT_BRACKET_MAX_HALVINGS = 200
            mock_settings.PGF_NORMALIZATION_TOL = 1e-10
            mock_settings.CRITICAL_MEAN_TOL = 1e-12
            with self.assertLogs("core.analytic", level="WARNING") as logs:
                value = analytic.smallest_fixed_point(PgfEvaluator.for_model(Model.C2, params), tol=1e-14)
        self.assertIn("bracketed root search", logs.output[0])
        self.assertAlmostEqual(value, c2_example(0.9), delta=1e-10)

    def test_near_critical_c2_matches_closed_forms(self):
        # 평균이 1 + 1e-7 이 되도록 lambda 를 고름
        cases = [
            ModelParams.build(p=0.5, r=0.0, lam=1.0 + 2e-7),
            ModelParams.build(p=0.5, r=1.0, lam=analytic.critical_lambda(Model.C2, 0.5, 1.0).as_float() + 2e-7),
        ]
        for params in cases:
            with self.subTest(r=params.r, lam=params.lam):
                self.assertLess(mean_C2(params) - 1.0, 1e-6)
                self.assertGreater(mean_C2(params) - 1.0, 1e-9)
                value = analytic.extinction_C2(params).probability
                self.assertLess(value, 1.0)
                self.assertAlmostEqual(value, analytic.extinction_C2_closed_form(params), delta=1e-10)

    def test_near_critical_c2_exact_rational_case(self):
        params = ModelParams.build(p=0.5, r=0.0, lam=1.0 + 2e-7)
        self.assertAlmostEqual(analytic.extinction_C2(params).probability, 1.0 / (1.0 + 2e-7), delta=1e-12)

    def test_near_critical_c3_quadratic_law(self):
        # m = 2 에서 psi(s) = c0 + c1 s + c2 s^2 이므로 최소 고정점은 c0 / c2
        for p, r in [(0.5, 0.0), (0.5, 1.0), (0.7, 0.5)]:
            with self.subTest(p=p, r=r):
                rate = analytic.critical_lambda(Model.C3, p, r, 2).as_float()
                params = ModelParams.build(p=p, r=r, lam=rate * (1.0 + 1e-7), m=2)
                self.assertGreater(mean_C3(params) - 1.0, 1e-10)
                self.assertLess(mean_C3(params) - 1.0, 1e-5)
                c0, _, c2 = offspring_C3_coefficients(params)
                value = analytic.extinction_C3(params).probability
                self.assertLess(value, 1.0)
                self.assertAlmostEqual(value, c0 / c2, delta=1e-10)

    def test_near_critical_c3_higher_degree_is_a_fixed_point(self):
        for m in (3, 5, 8):
            with self.subTest(m=m):
                rate = analytic.critical_lambda(Model.C3, 0.6, 0.3, m).as_float()
                params = ModelParams.build(p=0.6, r=0.3, lam=rate * (1.0 + 1e-7), m=m)
                pgf = PgfEvaluator.for_model(Model.C3, params)
                value = analytic.extinction_C3(params).probability
                self.assertGreater(value, 0.0)
                self.assertLess(value, 1.0)
                gap = 1.0 - value
                self.assertLess(abs(pgf.deficit(gap) - gap), 1e-12 * gap)

    def test_zero_extinction_when_no_empty_offspring(self):
        pgf = PgfEvaluator(lambda s: s * s, lambda s: 2.0 * s, mean=2.0)
        self.assertEqual(analytic.smallest_fixed_point(pgf), 0.0)


class TestCriticalRates(unittest.TestCase):
    """임계 출생률 테스트."""

    def test_known_values(self):
        self.assertAlmostEqual(analytic.critical_lambda(Model.C2, 0.5, 1.0).as_float(), 0.618034, delta=1e-6)
        self.assertAlmostEqual(
            analytic.critical_lambda(Model.C3, 0.5, 1.0, 2).as_float(), math.sqrt(2.0), delta=1e-9
        )
        self.assertEqual(analytic.critical_lambda(Model.C3, 0.5, 1.0, 1).value, INF)
        self.assertEqual(analytic.critical_lambda(Model.C1, 0.5, 0.3).value, INF)

    def test_closed_forms(self):
        self.assertAlmostEqual(analytic.critical_lambda_closed_form_r1(Model.C1, 0.5).as_float(), 1.0)
        self.assertAlmostEqual(
            analytic.critical_lambda_closed_form_r1(Model.C3, 0.75, 5).as_float(), 1.0 / 3.0, delta=1e-12
        )
        self.assertAlmostEqual(analytic.critical_lambda_closed_form_r1(Model.C2, 0.8).as_float(), 0.207107, delta=1e-6)

    def test_bisection_matches_closed_forms(self):
        for p in (0.1, 0.3, 0.5, 0.7, 0.9):
            for model, m in [(Model.C2, None)] + [(Model.C3, m) for m in range(2, 9)]:
                with self.subTest(p=p, model=model, m=m):
                    solved = analytic.critical_lambda(model, p, 1.0, m)
                    self.assertEqual(solved.solver, RateSolver.BISECTION)
                    expected = analytic.critical_lambda_closed_form_r1(model, p, m).as_float()
                    self.assertAlmostEqual(solved.as_float(), expected, delta=1e-9)

    def test_ordering_and_large_degree_limit(self):
        for p in (0.2, 0.5, 0.8):
            for r in (0.0, 0.5, 1.0):
                floor = analytic.critical_lambda(Model.C2, p, r).as_float()
                rates = [analytic.critical_lambda(Model.C3, p, r, m).as_float() for m in range(2, 11)]
                self.assertTrue(all(floor < later < earlier for earlier, later in zip(rates, rates[1:])))

    def test_monotone_in_survival_probability(self):
        cases = [(Model.C1, None), (Model.C2, None)] + [(Model.C3, m) for m in range(2, 6)]
        grid = [0.05 * k for k in range(1, 20)]
        for model, m in cases:
            for r in (0.0, 0.3, 0.7, 1.0):
                rates = [analytic.critical_lambda(model, p, r, m).as_float() for p in grid]
                for p, earlier, later in zip(grid[1:], rates, rates[1:]):
                    with self.subTest(model=model, m=m, r=r, p=p):
                        self.assertLessEqual(later, earlier + 1e-9)

    def test_monotone_in_geometric_weight(self):
        # r 가 커질수록 (기하 효과 비중) 임계값은 내려감
        cases = [(Model.C1, None), (Model.C2, None)] + [(Model.C3, m) for m in range(2, 6)]
        weights = [0.1 * k for k in range(11)]
        for model, m in cases:
            for p in (0.1, 0.3, 0.5, 0.7, 0.9):
                rates = [analytic.critical_lambda(model, p, r, m).as_float() for r in weights]
                for r, earlier, later in zip(weights[1:], rates, rates[1:]):
                    with self.subTest(model=model, m=m, p=p, r=r):
                        self.assertLessEqual(later, earlier + 1e-9)
                gap = analytic.critical_lambda(Model.C3, p, r, 1000).as_float() - floor
                self.assertTrue(0.0 < gap < 1e-2)

    def test_degree_rules(self):
        with self.assertRaises(ParameterDomainError):
            analytic.critical_lambda(Model.C3, 0.5, 1.0)
        with self.assertRaises(ParameterDomainError):
            analytic.critical_lambda(Model.C2, 0.5, 1.0, 3)
        with self.assertRaises(ParameterDomainError):
            analytic.critical_lambda(Model.C2, 1.5, 1.0)

    def test_bracket_failure(self):
        with patch("core.analytic.settings") as mock_settings:
            mock_settings.LAMBDA_BRACKET_START = 1.0
            mock_settings.LAMBDA_BRACKET_MAX_DOUBLINGS = 2
            with self.assertRaises(ConvergenceError):
                analytic.critical_lambda(Model.C2, 0.01, 0.0)


class TestDrift(unittest.TestCase):
    """C1 내장 사슬 drift 테스트."""

    def test_examples(self):
        self.assertAlmostEqual(analytic.drift_C1(1, ModelParams.build(p=0.5, r=0.0, lam=1.0)), 0.25, places=15)
        self.assertAlmostEqual(analytic.drift_C1(1, ModelParams.build(p=0.5, r=1.0, lam=1.0)), 0.25, places=15)

    def test_matches_bruteforce(self):
        for p in (0.2, 0.5, 0.8):
            for lam in (0.5, 2.0):
                for r in (0.0, 0.5, 1.0):
                    params = ModelParams.build(p=p, r=r, lam=lam)
                    for i in (1, 2, 10, 49, 50, 51, 100):
                        with self.subTest(p=p, lam=lam, r=r, i=i):
                            self.assertAlmostEqual(
                                analytic.drift_C1(i, params), analytic.drift_C1_bruteforce(i, params), delta=1e-10
                            )

    def test_linear_slope_for_binomial_effect(self):
        params = ModelParams.build(p=0.3, r=0.0, lam=2.0)
        slope = analytic.drift_C1(11, params) - analytic.drift_C1(10, params)
        self.assertAlmostEqual(slope, -0.7 / 3.0, places=14)

    def test_threshold_and_foster_set(self):
        params = ModelParams.build(p=0.5, r=0.5, lam=4.0)
        threshold = analytic.drift_threshold_C1(params)
        self.assertIsNotNone(threshold)
        self.assertGreater(analytic.drift_C1(threshold - 1, params), 0.0)
        self.assertTrue(all(analytic.drift_C1(i, params) < 0.0 for i in range(threshold, threshold + 200)))
        states = analytic.foster_set(params, 0.01)
        self.assertEqual(states, list(range(len(states))))
        self.assertLessEqual(analytic.drift_C1(len(states), params), -0.01)

    def test_no_finite_set_when_supercritical(self):
        params = ModelParams.build(p=0.5, r=1.0, lam=3.0)
        self.assertIsNone(analytic.drift_threshold_C1(params))
        self.assertIsNone(analytic.foster_set(params, 0.01))
        self.assertIsNotNone(analytic.drift_threshold_C1(params.replace(lam=0.5)))

    def test_invalid_arguments(self):
        params = ModelParams.build(p=0.5, r=0.5, lam=1.0)
        with self.assertRaises(ParameterDomainError):
            analytic.drift_C1_bruteforce(0, params)
        with self.assertRaises(ParameterDomainError):
            analytic.foster_set(params, 0.0)


if __name__ == "__main__":
    unittest.main()
