import numpy as np
import pytest

from crossmatch.assignment import Assignment, brute_force_assign, hungarian_solve


def test_two_by_two_known():
    a = hungarian_solve([[1.0, 2.0], [2.0, 4.0]])
    assert a.pairs == ((0, 1), (1, 0))
    assert a.total_cost == 4.0


def test_cheap_diagonal():
    m = np.ones((4, 4))
    np.fill_diagonal(m, 0.0)
    a = hungarian_solve(m)
    assert a.pairs == ((0, 0), (1, 1), (2, 2), (3, 3))
    assert a.total_cost == 0.0


def test_rectangular_known():
    a = hungarian_solve([[5.0, 1.0, 9.0], [9.0, 5.0, 1.0]])
    assert a.pairs == ((0, 1), (1, 2))
    assert a.total_cost == 2.0


def test_empty_matrix():
    for shape in [(0, 0), (0, 3), (3, 0)]:
        a = hungarian_solve(np.zeros(shape))
        b = brute_force_assign(np.zeros(shape))
        assert a == Assignment(pairs=(), total_cost=0.0)
        assert b == Assignment(pairs=(), total_cost=0.0)


def test_one_by_one():
    assert brute_force_assign([[7.0]]) == Assignment(pairs=((0, 0),), total_cost=7.0)
    assert hungarian_solve([[7.0]]) == Assignment(pairs=((0, 0),), total_cost=7.0)


def test_brute_force_size_limit():
    with pytest.raises(ValueError):
        brute_force_assign(np.zeros((10, 10)))
    # rectangular matrices only bound the smaller dimension
    brute_force_assign(np.zeros((2, 30)))


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        hungarian_solve([[np.inf, 1.0], [1.0, 2.0]])


def _random_matrices(seed, count, max_dim=7, with_duplicates=True):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        r = int(rng.integers(1, max_dim + 1))
        c = int(rng.integers(1, max_dim + 1))
        kind = rng.integers(0, 3) if with_duplicates else 0
        if kind == 0:
            yield rng.uniform(-10, 10, (r, c))
        elif kind == 1:
            # heavy exact ties from a tiny dyadic value set
            yield rng.choice([0.0, 0.25, 0.5, 1.0, 2.0], size=(r, c))
        else:
            yield rng.integers(-3, 4, (r, c)).astype(np.float64)


def test_matches_brute_force_on_random_matrices():
    for m in _random_matrices(123, 500):
        a = hungarian_solve(m)
        b = brute_force_assign(m)
        assert a.total_cost == b.total_cost, m
        assert a.pairs == b.pairs, m


def test_pair_count_and_injectivity():
    for m in _random_matrices(5, 100):
        a = hungarian_solve(m)
        assert len(a.pairs) == min(m.shape)
        rows = [r for r, _ in a.pairs]
        cols = [c for _, c in a.pairs]
        assert len(set(rows)) == len(rows)
        assert len(set(cols)) == len(cols)


def test_row_constant_shift_keeps_pairing():
    rng = np.random.default_rng(9)
    for _ in range(50):
        m = rng.uniform(0, 10, (5, 5))
        base = hungarian_solve(m)
        shifted = m.copy()
        shifted[2] += 7.5
        after = hungarian_solve(shifted)
        assert after.pairs == base.pairs
        assert after.total_cost == pytest.approx(base.total_cost + 7.5)


def test_transpose_transposes_assignment():
    # continuous entries make the optimum unique with probability one
    for m in _random_matrices(77, 200, with_duplicates=False):
        a = hungarian_solve(m)
        at = hungarian_solve(m.T)
        assert sorted((c, r) for r, c in a.pairs) == sorted(at.pairs)


def test_deterministic_given_input():
    m = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
    first = hungarian_solve(m)
    for _ in range(5):
        assert hungarian_solve(m) == first
    # lexicographically smallest optimum: (0,0) forces (1,2),(2,1)
    assert first.pairs == ((0, 0), (1, 2), (2, 1))
