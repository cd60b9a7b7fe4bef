import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cncfl.assignment import SENTINEL, bottleneck_assign, brute_force_assign, hungarian_assign
from cncfl.errors import InvalidInputError


def permutation_of(assign, n):
    return sorted(assign) == list(range(n)) and sorted(assign.values()) == list(range(n))


def test_hungarian_small_examples():
    assert hungarian_assign([[1, 2], [2, 1]]) == ({0: 0, 1: 1}, 2.0)
    assert hungarian_assign([[0, 9], [9, 0]])[1] == 0.0
    assert hungarian_assign([[4.5]]) == ({0: 0}, 4.5)
    assert hungarian_assign(np.zeros((0, 0))) == ({}, 0.0)


def test_bottleneck_small_examples():
    assert bottleneck_assign([[1, 2], [2, 1]])[1] == 1.0
    assert bottleneck_assign([[5, 1], [1, 5]]) == ({0: 1, 1: 0}, 1.0)


def test_ties_resolve_to_lexicographically_smallest():
    assert hungarian_assign(np.ones((3, 3)))[0] == {0: 0, 1: 1, 2: 2}
    assert bottleneck_assign(np.ones((3, 3)))[0] == {0: 0, 1: 1, 2: 2}
    # Two optima with total 2: (0, 1) and (1, 0); the smaller column vector wins.
    assert hungarian_assign([[1, 1], [1, 1]])[0] == {0: 0, 1: 1}


def test_hungarian_matches_brute_force_on_random_6x6(rng):
    for _ in range(200):
        c = rng.random((6, 6))
        assert hungarian_assign(c) == brute_force_assign(c, "sum")


def test_bottleneck_matches_brute_force_on_random_5x5(rng):
    for _ in range(200):
        c = rng.random((5, 5))
        assert bottleneck_assign(c) == brute_force_assign(c, "max")


def test_exhaustive_binary_3x3_sweep():
    for bits in itertools.product((0.0, 1.0), repeat=9):
        c = np.array(bits).reshape(3, 3)
        assert hungarian_assign(c) == brute_force_assign(c, "sum")
        assert bottleneck_assign(c) == brute_force_assign(c, "max")


def test_one_by_one_matches():
    assert brute_force_assign([[3.0]]) == hungarian_assign([[3.0]])


def test_sentinel_rows_are_padding():
    c = np.full((3, 3), SENTINEL)
    c[0] = [5.0, 1.0, 3.0]
    c[1] = [2.0, 8.0, 1.0]
    assign, total = hungarian_assign(c)
    assert total == 2.0
    assert (assign[0], assign[1]) == (1, 2)
    assert permutation_of(assign, 3)
    assert bottleneck_assign(c)[1] == 1.0


def test_input_validation():
    with pytest.raises(InvalidInputError):
        hungarian_assign(np.ones((2, 3)))
    with pytest.raises(InvalidInputError):
        bottleneck_assign([[1.0, -1.0], [0.0, 0.0]])
    with pytest.raises(InvalidInputError):
        brute_force_assign(np.ones((10, 10)))
    with pytest.raises(InvalidInputError):
        brute_force_assign(np.ones((2, 2)), "mean")


def test_larger_instance_against_brute_force(rng):
    c = rng.random((9, 9))
    assert hungarian_assign(c) == brute_force_assign(c, "sum")


# Tight-edge detection uses a 1e-11 relative tolerance, so entries come from a
# grid whose distinct totals are resolvable at that scale.
matrices = st.integers(1, 6).flatmap(
    lambda n: arrays(np.int64, (n, n), elements=st.integers(0, 1000)).map(lambda a: a / 10.0)
)


@settings(max_examples=80, deadline=None)
@given(matrices)
def test_solver_properties(c):
    n = c.shape[0]
    h_assign, h_total = hungarian_assign(c)
    b_assign, b_max = bottleneck_assign(c)
    assert permutation_of(h_assign, n) and permutation_of(b_assign, n)
    assert h_total == brute_force_assign(c, "sum")[1]
    assert b_max == brute_force_assign(c, "max")[1]
    # Bottleneck optimum never exceeds the largest entry of the sum optimum.
    assert b_max <= max(c[i, j] for i, j in h_assign.items())
    assert hungarian_assign(c) == (h_assign, h_total)
