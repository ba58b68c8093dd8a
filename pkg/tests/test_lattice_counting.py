"""
Tests for the exact lattice counts.

Validates:
- Divisor enumeration in Z and Z[i] against trial division
- The triple set S and the sets S1, S2 against brute force
- Pairing detection, hypothesis checks and the enumeration budget
- Right sides of the counting bounds
"""

import itertools

import numpy as np
import pytest
from pydantic import ValidationError

from src.config import settings
from src.models.counting_models import CountingInstance, LatticeTuple
from src.services.lattice_counting import (
    count_S,
    count_S123,
    count_S_bound,
    counting_batch,
    disc_points,
    divisor_count_box,
    gaussian_divisors,
    has_pairing,
    integer_divisors,
    naive_gaussian_divisors,
    naive_integer_divisors,
    random_instances,
    rhs_bound,
    weighted_sum_E,
)
from src.utils.exceptions import BudgetExceededException, InvalidInstanceException


def brute_force_S1(instance: CountingInstance) -> int:
    """Count S1 by looping over every tuple of box points."""
    discs = [[tuple(int(v) for v in p) for p in disc_points(c, N)] for c, N in zip(instance.box_centers, instance.sizes)]
    count = 0
    for ks in itertools.product(*discs):
        k = tuple(sum(s * x[i] for s, x in zip(instance.signs, ks)) - instance.d[i] for i in range(2))
        sigma = sum(s * (x[0] ** 2 + x[1] ** 2) for s, x in zip(instance.signs, ks)) - (k[0] ** 2 + k[1] ** 2)
        if sigma != instance.alpha:
            continue
        if has_pairing(LatticeTuple(k=k, ks=list(ks)), instance.signs):
            continue
        count += 1
    return count


class TestDivisors:
    """Test suite for divisor enumeration."""

    @pytest.mark.parametrize("m", [1, -7, 12, 360, 1001])
    def test_integer_divisors_match_trial_division(self, m):
        assert integer_divisors(m) == naive_integer_divisors(m)

    @pytest.mark.parametrize("m", [2, 5, 12, (3, 4), (7, 1), 65])
    def test_gaussian_divisors_match_trial_division(self, m):
        assert gaussian_divisors(m) == naive_gaussian_divisors(m)

    def test_gaussian_divisor_counts(self):
        assert len(gaussian_divisors(5)) == 16
        assert len(gaussian_divisors(3)) == 8

    def test_box_count(self):
        assert divisor_count_box(12, 0, 100, 0, 100, ring="Z") == 12
        assert divisor_count_box(12, 0, 1, 0, 100, ring="Z") == 2
        assert divisor_count_box(5, 0, 100, 0, 100, ring="Z[i]") == 16

    def test_zero_has_no_finite_divisor_set(self):
        with pytest.raises(InvalidInstanceException):
            integer_divisors(0)
        with pytest.raises(InvalidInstanceException):
            gaussian_divisors(0)

    def test_unknown_ring(self):
        with pytest.raises(ValueError, match="unknown ring"):
            divisor_count_box(6, 0, 10, 0, 10, ring="Q")


class TestPairings:
    """Test suite for pairing detection."""

    def test_opposite_signs_pair(self):
        assert has_pairing([(1, 0), (1, 0)], [1, -1])

    def test_equal_signs_do_not_pair(self):
        assert not has_pairing([(1, 0), (1, 0)], [1, 1])

    def test_output_mode_pairs_with_plus_sign(self):
        tup = LatticeTuple(k=(2, 1), ks=[(2, 1), (0, 0)])
        assert has_pairing(tup, [1, 1])
        assert not has_pairing(tup, [-1, 1])

    def test_linear_constraint(self):
        instance = CountingInstance(signs=[1, -1], sizes=[2, 2], d=(1, 0))
        assert LatticeTuple(k=(0, 1), ks=[(1, 1), (0, 0)]).satisfies_linear(instance)
        assert not LatticeTuple(k=(1, 1), ks=[(1, 1), (0, 0)]).satisfies_linear(instance)


class TestTripleSet:
    """Test suite for the basic counting set S."""

    def brute_force(self, N1, N2, N3, signs, a, b, c, d, alpha):
        i1, i2, i3 = signs
        count = 0
        for y in disc_points(b, N2):
            for z in disc_points(c, N3):
                x = i1 * (np.asarray(d) - i2 * y - i3 * z)
                if np.sum((x - np.asarray(a)) ** 2) > N1 * N1:
                    continue
                if i1 * (x @ x) + i2 * (y @ y) + i3 * (z @ z) != alpha:
                    continue
                if has_pairing([tuple(x), tuple(y), tuple(z)], signs):
                    continue
                count += 1
        return count

    @pytest.mark.parametrize("signs", [(1, 1, 1), (1, -1, 1), (-1, 1, 1), (1, 1, -1)])
    @pytest.mark.parametrize("alpha", [0, 2, 5])
    def test_matches_brute_force(self, signs, alpha):
        args = (4, 4, 2, signs, (1, 0), (0, 1), (0, 0), (1, 1), alpha)
        assert count_S(*args) == self.brute_force(*args)

    def test_sizes_must_decrease(self):
        with pytest.raises(InvalidInstanceException, match="decrease"):
            count_S(1, 4, 8, (1, 1, 1), (0, 0), (0, 0), (0, 0), (0, 0), 0)

    def test_bound_shape_depends_on_first_signs(self):
        assert count_S_bound(4.0, 2.0, (1, -1, 1), theta=0.0) == pytest.approx(8.0)
        assert count_S_bound(4.0, 2.0, (1, 1, -1), theta=0.0) == pytest.approx(4.0)
        assert count_S_bound(4.0, 2.0, (1, -1, 1), theta=0.5) == pytest.approx(16.0)


class TestSetCounts:
    """Test suite for S1, S2, S3 and their plus variants."""

    @pytest.fixture
    def small(self):
        return CountingInstance(signs=[1, -1, 1], sizes=[2, 2, 1], centers=[(0, 0), (1, 0), (0, 1)], alpha=2.0)

    def test_S1_matches_brute_force(self, small):
        assert count_S123(small, "S1") == brute_force_S1(small)

    def test_random_S1_match_brute_force(self):
        for instance in random_instances(6, seed=3, n=3, max_size=2):
            assert count_S123(instance, "S1") == brute_force_S1(instance)

    def test_order_does_not_matter(self, small):
        counts = {count_S123(small, "S1", order=order) for order in itertools.permutations(range(3))}
        assert len(counts) == 1

    def test_pairings_only_add(self, small):
        assert count_S123(small, "S1", exclude_pairings=False) >= count_S123(small, "S1")

    def test_plus_is_a_subset(self):
        for instance in random_instances(4, seed=5, n=3, max_size=2, plus=True):
            assert count_S123(instance, "S1", plus=True) <= count_S123(instance, "S1")

    def test_plus_needs_index_set(self, small):
        with pytest.raises(InvalidInstanceException, match="non-empty"):
            count_S123(small, "S1", plus=True)

    def test_weighted_sum_dominates_count(self, small):
        assert weighted_sum_E(small, "S1") >= count_S123(small, "S1")

    def test_S2_and_S3_run(self):
        for which in ("S2", "S3"):
            for instance in random_instances(3, seed=11, n=2, max_size=2, which=which):
                assert count_S123(instance, which) >= 0

    def test_bad_order(self, small):
        with pytest.raises(ValueError, match="permutation"):
            count_S123(small, "S1", order=[0, 0, 1])


class TestHypotheses:
    """Test suite for instance validation and the budget guard."""

    def test_non_dyadic_size(self):
        instance = CountingInstance(signs=[1, 1], sizes=[3, 2])
        with pytest.raises(InvalidInstanceException, match="dyadic"):
            count_S123(instance)

    def test_pair_block_signs(self):
        instance = CountingInstance(signs=[1, 1], sizes=[4, 4], p=1, R=[2.0])
        with pytest.raises(InvalidInstanceException, match="opposite"):
            count_S123(instance)

    def test_pair_width(self):
        instance = CountingInstance(signs=[1, -1], sizes=[4, 4], p=1, R=[100.0])
        with pytest.raises(InvalidInstanceException, match="exceeds"):
            count_S123(instance)

    def test_shape_validation(self):
        with pytest.raises(ValidationError):
            CountingInstance(signs=[1, 1], sizes=[2])
        with pytest.raises(ValidationError):
            CountingInstance(signs=[1, 2], sizes=[2, 2])

    def test_budget_guard(self, monkeypatch):
        monkeypatch.setattr(settings, "enumeration_budget", 10.0)
        instance = CountingInstance(signs=[1, 1], sizes=[4, 4])
        with pytest.raises(BudgetExceededException, match="budget"):
            count_S123(instance)

    def test_random_instances_need_room_for_pairs(self):
        with pytest.raises(ValueError, match="2p"):
            random_instances(1, seed=0, n=3, p=2)


class TestBounds:
    """Test suite for the right sides of the counting bounds."""

    def test_generic_S1_bound(self):
        instance = CountingInstance(signs=[1, 1], sizes=[4, 2])
        assert rhs_bound(instance, "S1") == pytest.approx(64.0 / 8.0)

    def test_stronger_S1_bound_for_minus_sign(self):
        instance = CountingInstance(signs=[-1, 1], sizes=[4, 2])
        assert rhs_bound(instance, "S1") == pytest.approx(64.0 / 16.0)
        assert rhs_bound(instance, "S1", variant="generic") == pytest.approx(64.0 / 8.0)

    def test_batch_rows(self):
        instances = random_instances(5, seed=2, n=3, max_size=4)
        rows = counting_batch(instances, "S1", weighted=True)
        assert len(rows) == 5
        for row, instance in zip(rows, instances):
            assert row.count == count_S123(instance, "S1")
            assert row.ratio == pytest.approx(row.count / row.rhs)
            assert row.weighted >= row.count
