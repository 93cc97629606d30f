import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from numcore import (
    SeededRng, ShapeError, NonFiniteError, as_matrix, as_vector, matrix_from_flat,
    matvec, outer, rng_normal, rng_uniform, transpose_matvec,
)

finite = st.floats(min_value=-10, max_value=10, allow_nan=False, allow_infinity=False)


def test_matvec_examples():
    assert np.array_equal(matvec(np.eye(2), np.array([3.0, 4.0])), [3.0, 4.0])
    assert np.array_equal(matvec(np.zeros((3, 2)), np.array([5.0, -1.0])), [0.0, 0.0, 0.0])
    assert np.array_equal(matvec(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([1.0, 1.0])), [3.0, 7.0])


def test_matvec_shape_error_reports_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2,\)"):
        matvec(np.ones((2, 3)), np.ones(2))


def test_transpose_matvec_examples():
    assert np.array_equal(transpose_matvec(np.eye(2), np.array([5.0, 6.0])), [5.0, 6.0])
    assert np.array_equal(transpose_matvec(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([1.0, 0.0])), [1.0, 2.0])
    assert np.array_equal(transpose_matvec(np.zeros((2, 3)), np.array([1.0, 2.0])), np.zeros(3))
    with pytest.raises(ShapeError):
        transpose_matvec(np.ones((2, 3)), np.ones(3))


def test_outer_examples():
    assert np.array_equal(outer(np.array([1.0]), np.array([1.0])), [[1.0]])
    assert np.array_equal(outer(np.array([2.0, 3.0]), np.array([4.0])), [[8.0], [12.0]])
    assert np.array_equal(outer(np.zeros(2), np.array([1.0, 2.0, 3.0])), np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        outer(np.array([]), np.array([1.0]))


def test_containers_validate():
    assert as_vector([1, 2]).dtype == np.float64
    with pytest.raises(NonFiniteError):
        as_vector([1.0, np.nan])
    with pytest.raises(ShapeError):
        as_vector([])
    with pytest.raises(ShapeError):
        as_matrix([1.0, 2.0])
    m = matrix_from_flat(2, 3, range(6))
    assert m[1, 0] == 3.0
    with pytest.raises(ShapeError):
        matrix_from_flat(2, 2, range(5))


@given(arrays(np.float64, st.integers(1, 8), elements=finite))
def test_matvec_identity_property(x):
    assert np.array_equal(matvec(np.eye(x.size), x), x)


@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_transpose_matvec_matches_explicit_transpose(rows, cols, data):
    m = data.draw(arrays(np.float64, (rows, cols), elements=finite))
    y = data.draw(arrays(np.float64, rows, elements=finite))
    assert np.allclose(transpose_matvec(m, y), matvec(np.ascontiguousarray(m.T), y), rtol=1e-12, atol=1e-12)


@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_outer_associativity(n, k, data):
    a = data.draw(arrays(np.float64, n, elements=finite))
    b = data.draw(arrays(np.float64, k, elements=finite))
    c = data.draw(arrays(np.float64, k, elements=finite))
    assert np.allclose(matvec(outer(a, b), c), a * np.dot(b, c), rtol=1e-12, atol=1e-9)


def test_uniform_range_and_determinism():
    u = rng_uniform(SeededRng(7), 0.0, 1.0, 5)
    assert u.shape == (5,)
    assert np.all((u >= 0.0) & (u < 1.0))
    assert np.array_equal(u, rng_uniform(SeededRng(7), 0.0, 1.0, 5))
    assert not np.array_equal(rng_uniform(SeededRng(1), 0, 1, 10), rng_uniform(SeededRng(2), 0, 1, 10))


def test_uniform_rejects_empty_interval():
    with pytest.raises(ValueError):
        rng_uniform(SeededRng(0), 1.0, 1.0, 3)


def test_uniform_stays_below_hi_for_tiny_intervals():
    u = SeededRng(3).uniform(1.0, np.nextafter(1.0, 2.0), 1000)
    assert np.all(u < np.nextafter(1.0, 2.0))


def test_normal_degenerate_and_errors():
    assert np.array_equal(rng_normal(SeededRng(0), 7.0, 0.0, 3), [7.0, 7.0, 7.0])
    with pytest.raises(ValueError):
        rng_normal(SeededRng(0), 0.0, -1.0, 3)


def test_normal_statistics():
    z = rng_normal(SeededRng(12345), 0.0, 1.0, 100_000)
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.02


def test_normal_determinism_and_odd_lengths():
    assert np.array_equal(rng_normal(SeededRng(9), 1.0, 2.0, 11), rng_normal(SeededRng(9), 1.0, 2.0, 11))
    # the first draws of a pair stream do not depend on n
    assert np.array_equal(rng_normal(SeededRng(9), 0, 1, 3)[:2], rng_normal(SeededRng(9), 0, 1, 4)[:2])


def test_derived_streams_are_independent_and_reproducible():
    root = SeededRng(5)
    a = root.derive(1).random(4)
    b = root.derive(2).random(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, SeededRng(5, 1).random(4))
    # deriving does not advance the parent
    assert np.array_equal(root.random(4), SeededRng(5).random(4))


def test_root_stream_differs_from_derived_streams():
    root = SeededRng(20210301).random(6)
    assert not np.array_equal(root, SeededRng(20210301, 0).random(6))
    assert not np.array_equal(root, SeededRng(20210301).derive(0).random(6))
    # a large seed must not alias a small seed's derived stream
    assert not np.array_equal(SeededRng(5 + 2 ** 32).random(6), SeededRng(5, 1).random(6))
    assert not np.array_equal(SeededRng(5, 1).random(6), SeededRng(6, 0).random(6))
    with pytest.raises(ValueError):
        SeededRng(5, -1)


def test_permutation_is_a_permutation():
    perm = SeededRng(4).permutation(50)
    assert sorted(perm.tolist()) == list(range(50))
    assert np.array_equal(perm, SeededRng(4).permutation(50))


def test_seed_must_be_unsigned_64_bit():
    with pytest.raises(ValueError):
        SeededRng(-1)
    with pytest.raises(ValueError):
        SeededRng(2 ** 64)
    SeededRng(2 ** 64 - 1)
