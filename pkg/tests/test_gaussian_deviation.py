"""
Tests for multilinear Gaussian expressions.

Validates:
- Pairing enumeration against its closed-form count
- Exact moments against Gaussian identities and Monte Carlo
- Moment domination, the isometry bound and the tail shape
- Expression loading and the measurability witness
- The Monte Carlo check of h-kernel forms
"""

import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.models.deviation_models import MultilinearExpression
from src.models.dynamics_models import TimeGrid
from src.services.averaging_operators import build_H
from src.services.gaussian_deviation import (
    GaussianPolynomial,
    compute_M,
    enumerate_pairings,
    eval_F,
    isometry_ratio,
    isserlis_moment,
    kernel_deviation_check,
    l_norm,
    load_expressions,
    measurability_witness,
    moment,
    moment_domination,
    pairing_count,
    random_expression,
    sample_F,
    standard_gaussians,
    tail_check,
)
from src.services.spectral_core import project
from src.services.wick_calculus import make_context
from src.utils.exceptions import BudgetExceededException


class TestPairings:
    """Test suite for pairing structures."""

    @pytest.mark.parametrize("signs", [[1], [1, -1], [1, 1, -1, -1], [1, -1, 1, -1, 1], [-1, -1, -1]])
    def test_count_matches_closed_form(self, signs):
        assert len(enumerate_pairings(signs)) == pairing_count(signs)

    def test_two_by_two(self):
        assert pairing_count([1, 1, -1, -1]) == 7

    def test_empty_pairing_first(self):
        structures = enumerate_pairings([1, -1, 1])
        assert structures[0].pairs == []
        assert structures[0].free == [1, 2, 3]
        assert all(s.n == 3 for s in structures)

    def test_arity_budget(self):
        with pytest.raises(BudgetExceededException, match="pairing budget"):
            enumerate_pairings([1, -1] * 5)

    def test_over_pairing_flags(self):
        structure = enumerate_pairings([1, -1, 1])[1]
        assert structure.pairs == [(1, 2)]
        assert structure.is_over_paired([(0, 0), (0, 0), (0, 0)]) == {(1, 2): True}
        assert structure.is_over_paired([(0, 0), (0, 0), (1, 0)]) == {(1, 2): False}


class TestMoments:
    """Test suite for exact Gaussian moments."""

    def test_isserlis(self):
        assert isserlis_moment([(2, 2), (1, 1)]) == 2
        assert isserlis_moment([(3, 3)]) == 6
        assert isserlis_moment([(1, 0)]) == 0

    def test_degree_budget(self):
        with pytest.raises(BudgetExceededException):
            isserlis_moment([(10, 10)])

    def test_linear_expression(self):
        a = np.array([1.0, 2.0 - 1.0j, 0.5j])
        expr = MultilinearExpression(support=[(0, 0), (1, 0), (0, 1)], signs=[1], coefficients=a)
        s = float(np.sum(np.abs(a) ** 2))
        assert moment(expr, 1) == pytest.approx(s)
        assert moment(expr, 2) == pytest.approx(2.0 * s * s)
        assert compute_M(expr) == pytest.approx(s)

    def test_polynomial_expectation_matches_moment(self):
        expr = random_expression(2, 3, seed=4)
        poly = GaussianPolynomial.from_expression(expr)
        value = (poly * poly.conjugate()).expectation()
        assert value.real == pytest.approx(moment(expr, 1))
        assert abs(value.imag) < 1e-10

    def test_monte_carlo_second_moment(self):
        expr = random_expression(1, 4, seed=8)
        values = sample_F(expr, 40000, seed=1)
        assert np.mean(values ** 2) == pytest.approx(moment(expr, 1), rel=0.05)

    def test_batch_evaluation(self):
        expr = random_expression(2, 3, seed=2)
        g = standard_gaussians(np.random.default_rng(0), (5, 3))
        batch = eval_F(expr, g)
        for row, value in zip(g, batch):
            assert eval_F(expr, row) == pytest.approx(value)


class TestDomination:
    """Test suite for moment domination and the isometry bound."""

    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("d", [1, 2])
    def test_F_dominated_by_G(self, seed, d):
        expr = random_expression(2, 3, seed=seed)
        F, G = moment_domination(expr, d)
        assert F <= G * (1.0 + 1e-9)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_isometry_ratio(self, n):
        for seed in range(3):
            expr = random_expression(n, 3, seed=seed)
            assert 0.0 < isometry_ratio(expr) <= math.factorial(n) * 2 ** n

    def test_moment_budget(self):
        expr = random_expression(3, 2, seed=0)
        with pytest.raises(BudgetExceededException):
            moment(expr, 4)


class TestTails:
    """Test suite for the Monte Carlo tail check."""

    def test_needs_many_trials(self):
        with pytest.raises(ValueError, match="10\\^4"):
            tail_check(random_expression(1, 3, seed=0), trials=500)

    def test_gaussian_tail_shape(self):
        report = tail_check(random_expression(1, 4, seed=6), trials=10000, seed=2)
        assert report.monotone
        assert report.exceedance[0] > report.exceedance[-1]
        assert report.slope is not None
        assert report.slope_ok is True
        assert report.expected_slope == pytest.approx(1.0)


class TestExpressions:
    """Test suite for expression construction and loading."""

    def test_random_expression(self):
        expr = random_expression(2, 5, seed=0, signs=[1, -1])
        assert expr.coefficients.shape == (5, 5)
        assert expr.signs == [1, -1]
        assert len(set(expr.support)) == 5

    def test_support_too_large(self):
        with pytest.raises(ValueError, match="sampling box"):
            random_expression(1, 50, seed=0, radius=3)

    def test_duplicate_support(self):
        with pytest.raises(ValidationError):
            MultilinearExpression(support=[(0, 0), (0, 0)], signs=[1], coefficients=np.ones(2))

    def test_load_from_json(self, tmp_path):
        np.save(tmp_path / "a.npy", np.eye(2))
        specs = [
            {"support": [[0, 0], [1, 0]], "signs": [1, -1], "coefficients_file": "a.npy"},
            {"support": [[0, 1]], "signs": [1], "coefficients": {"real": [2.0], "imag": [1.0]}},
        ]
        path = tmp_path / "expressions.json"
        path.write_text(json.dumps(specs), encoding="utf-8")
        loaded = load_expressions(path)
        assert len(loaded) == 2
        np.testing.assert_allclose(loaded[0].coefficients, np.eye(2))
        assert loaded[1].coefficients[0] == 2.0 + 1.0j

    def test_l_norm_of_constant(self):
        lam = np.linspace(-5.0, 5.0, 101)
        a = np.ones((1, 101))
        assert l_norm(a, lam) == pytest.approx(math.sqrt(0.1 * 101), rel=1e-4)


class TestMeasurability:
    """Test suite for the high-mode redraw witness."""

    def test_low_mode_builder(self, field4):
        assert measurability_witness(lambda f: project(f, 2).coeffs, field4, 2, seed=3)

    def test_full_builder(self, field4):
        assert not measurability_witness(lambda f: f.coeffs, field4, 2, seed=3)


class TestKernelDeviation:
    """Test suite for the Monte Carlo check of h-kernel forms."""

    @pytest.fixture(scope="class")
    def kernel(self):
        grid = TimeGrid(half_width=0.25, points=16)
        return build_H(2, 0.5, None, make_context(1, 2), m_star=0.0, grid=grid)

    def test_rows(self, kernel):
        rows = kernel_deviation_check(kernel, [1, -1], trials=5, seed=2)
        assert [row.trial for row in rows] == list(range(5))
        for row in rows:
            assert row.bound > 0
            assert row.ratio == pytest.approx(row.value / row.bound)

    def test_seeded(self, kernel):
        first = kernel_deviation_check(kernel, [1], trials=3, seed=4)
        second = kernel_deviation_check(kernel, [1], trials=3, seed=4)
        assert [row.value for row in first] == [row.value for row in second]

    def test_arity_limit(self, kernel):
        with pytest.raises(ValueError, match="supports"):
            kernel_deviation_check(kernel, [1, 1, 1], trials=1)

    def test_coefficient_shape(self, kernel):
        with pytest.raises(ValueError, match="must have shape"):
            kernel_deviation_check(kernel, [1], trials=1, a=np.zeros((2, 2)))
