import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from impact_game.errors import IllConditioned
from impact_game.linalg import exp_integral, mat_exp, solve_linear


def taylor_exp(A, terms=50):
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    return out


def test_exp_of_zero_is_identity():
    np.testing.assert_array_equal(mat_exp(np.zeros((2, 2)), 3.7), np.eye(2))


def test_exp_nilpotent():
    np.testing.assert_allclose(mat_exp(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0), [[1.0, 1.0], [0.0, 1.0]],
                               atol=1e-15)


def test_exp_diagonal_against_taylor():
    A = np.diag([1.0, -2.0])
    got = mat_exp(A, 1.0)
    np.testing.assert_allclose(got, np.diag([np.e, np.exp(-2.0)]), rtol=1e-12)
    np.testing.assert_allclose(got, taylor_exp(A), rtol=1e-12)


def test_exp_large_norm_against_scipy(rng):
    for _ in range(20):
        A = rng.normal(size=(8, 8)) * 3
        ref = scipy.linalg.expm(A)
        np.testing.assert_allclose(mat_exp(A), ref, rtol=1e-10, atol=1e-12 * np.abs(ref).max())


def test_exp_rejects_bad_input():
    with pytest.raises(ValueError):
        mat_exp(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        mat_exp(np.array([[np.nan]]))


def test_solve_linear_examples(rng):
    X, _ = solve_linear(np.eye(3), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(X, [1.0, 2.0, 3.0])
    X, cond = solve_linear(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
    np.testing.assert_allclose(X, [1.0, 1.0])
    assert cond == pytest.approx(2.0)
    A = rng.normal(size=(6, 6))
    Xtrue = rng.normal(size=(6, 2))
    X, _ = solve_linear(A, A @ Xtrue)
    np.testing.assert_allclose(X, Xtrue, atol=1e-10)


def test_solve_linear_singular():
    with pytest.raises(IllConditioned) as info:
        solve_linear(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))
    assert info.value.condition > 1e14 or not np.isfinite(info.value.condition)


def test_exp_integral_examples():
    np.testing.assert_allclose(exp_integral(np.zeros((2, 2)), np.array([1.0, 2.0]), 3.0), [3.0, 6.0])
    np.testing.assert_allclose(exp_integral(np.array([[1.0]]), np.array([1.0]), 1.0), [np.e - 1.0], rtol=1e-13)
    np.testing.assert_allclose(exp_integral(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([0.0, 1.0]), 1.0),
                               [0.5, 1.0], atol=1e-15)
    with pytest.raises(ValueError):
        exp_integral(np.eye(2), np.ones(3), 1.0)


square6 = arrays(np.float64, (6, 6), elements=st.floats(-1.0, 1.0, allow_nan=False))


@settings(max_examples=50, deadline=None)
@given(A=square6, s=st.floats(0.0, 1.0), u=st.floats(0.0, 1.0))
def test_semigroup(A, s, u):
    lhs = mat_exp(A, s + u)
    rhs = mat_exp(A, s) @ mat_exp(A, u)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * max(1.0, np.abs(lhs).max()))


@settings(max_examples=50, deadline=None)
@given(A=square6, t=st.floats(0.1, 2.0))
def test_exp_integral_matches_inverse_formula(A, t):
    A = A + 3.0 * np.eye(6)      # keep it comfortably invertible
    c = np.arange(6.0)
    got = exp_integral(A, c, t)
    ref = (mat_exp(A, t) - np.eye(6)) @ np.linalg.solve(A, c)
    np.testing.assert_allclose(got, ref, atol=1e-10 * max(1.0, np.abs(ref).max()))
