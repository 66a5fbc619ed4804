import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecrc import crc
from ecrc.errors import DataError, InvalidArgumentError, ShapeError

import oracles


def random_problem(seed, m=30, n=50, c=5, normalize=True):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(1, c + 1), n // c)
    d = crc.build_dictionary(rng.normal(size=(m, n)), labels, normalize=normalize)
    return d, rng.normal(size=m)


def test_identity_dictionary_projection():
    d = crc.build_dictionary(np.eye(2), [1, 2])
    np.testing.assert_allclose(crc.train(d, 1.0).matrix_p, 0.5 * np.eye(2), atol=1e-15)


def test_large_lambda_shrinks_operator():
    d, _ = random_problem(0)
    assert np.linalg.norm(crc.train(d, 1e12).matrix_p) < 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_projection_matches_linear_solve(seed):
    d, _ = random_problem(seed)
    op = crc.train(d, 1e-3)
    a = d.matrix_a
    rng = np.random.default_rng(100 + seed)
    y = rng.normal(size=30)
    expected = np.linalg.solve(a.T @ a + 1e-3 * np.eye(50), a.T @ y)
    got = crc.code(op, y)
    assert np.linalg.norm(got - expected) / np.linalg.norm(expected) < 1e-8


def test_normal_equations_identity():
    d, _ = random_problem(1)
    op = crc.train(d, 0.01)
    a = d.matrix_a
    assert np.max(np.abs((a.T @ a + 0.01 * np.eye(50)) @ op.matrix_p - a.T)) < 1e-6


@pytest.mark.parametrize("lam", [0.0, -1.0, np.inf, np.nan])
def test_train_rejects_bad_lambda(lam):
    d, _ = random_problem(2)
    with pytest.raises(InvalidArgumentError):
        crc.train(d, lam)


def test_non_finite_dictionary():
    a = np.ones((3, 2))
    a[0, 0] = np.nan
    with pytest.raises(DataError):
        crc.build_dictionary(a, [1, 2])


def test_empty_class_rejected():
    with pytest.raises(DataError):
        crc.build_dictionary(np.random.default_rng(0).normal(size=(3, 3)), [1, 3, 3])


def test_zero_query_codes_to_zero():
    d, _ = random_problem(3)
    assert np.all(crc.code(crc.train(d), np.zeros(30)) == 0)


def test_diagonal_system():
    d = crc.build_dictionary(np.eye(3), [1, 2, 3])
    alpha = crc.code(crc.train(d, 0.5), np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(alpha, [2 / 3, 0, 0], atol=1e-15)


def test_gradient_vanishes():
    for seed in range(5):
        d, y = random_problem(seed)
        y = crc.prepare_query(d, y)
        alpha = crc.code(crc.train(d, 1e-3), y)
        g = crc.gradient(d, alpha, y, 1e-3)
        assert np.max(np.abs(g)) < 1e-6 * (1 + np.max(np.abs(d.matrix_a.T @ y)))


def test_local_minimum_probe():
    d, y = random_problem(6)
    alpha = crc.code(crc.train(d, 1e-3), y)
    f0 = crc.objective(d, alpha, y, 1e-3)
    rng = np.random.default_rng(7)
    for _ in range(20):
        v = rng.normal(size=alpha.size)
        v /= np.linalg.norm(v)
        assert f0 <= crc.objective(d, alpha + 1e-3 * v, y, 1e-3)


def test_code_shape_mismatch():
    d, _ = random_problem(0)
    with pytest.raises(ShapeError):
        crc.code(crc.train(d), np.zeros(29))


def test_hand_computed_residuals():
    d = crc.build_dictionary(np.eye(2), [1, 2])
    y = np.array([1.0, 0.0])
    alpha = crc.code(crc.train(d, 0.5), y)
    profile = crc.residuals(d, alpha, y)
    np.testing.assert_allclose(profile.errors, [1 / 9, 1.0], atol=1e-15)
    assert profile.predicted == 1
    assert abs(profile.margin - 8 / 9) < 1e-15


def test_zero_coding_residuals():
    d, _ = random_problem(0)
    profile = crc.residuals(d, np.zeros(50), np.zeros(30))
    assert np.all(profile.errors == 0)
    assert profile.margin == 0
    assert profile.predicted == 1


def test_residuals_match_masked_reconstruction():
    rng = np.random.default_rng(8)
    labels = np.array([1, 2, 3, 1, 2, 3, 3, 1])
    d = crc.build_dictionary(rng.normal(size=(6, 8)), labels)
    y = crc.prepare_query(d, rng.normal(size=6))
    alpha = crc.code(crc.train(d, 0.1), y)
    expected = oracles.class_residuals(d.matrix_a, labels, alpha, y)
    np.testing.assert_allclose(crc.residuals(d, alpha, y).errors, expected, rtol=0, atol=1e-10)


def test_single_class_margin_undefined():
    d = crc.build_dictionary(np.eye(2), [1, 1])
    with pytest.raises(InvalidArgumentError):
        crc.residuals(d, np.zeros(2), np.zeros(2))


def test_classify_examples():
    assert crc.classify(crc.profile_from_errors([0.2, 0.5, 0.9])) == 1
    assert crc.classify(crc.profile_from_errors([0.5, 0.5])) == 1


def test_classify_matches_scan():
    rng = np.random.default_rng(9)
    for _ in range(100):
        e = rng.integers(0, 5, size=rng.integers(2, 8)).astype(float)
        assert crc.classify(crc.profile_from_errors(e)) == oracles.scan_argmin(list(e)) + 1


def test_partition_identity():
    d, y = random_problem(10, c=5)
    alpha = crc.code(crc.train(d), y)
    onehot = crc.class_indicator(d)
    parts = alpha[:, None] * onehot
    assert np.array_equal(parts.sum(axis=1), alpha)


def test_normalized_columns():
    d, _ = random_problem(11)
    norms = np.linalg.norm(d.matrix_a, axis=0)
    assert np.all(np.abs(norms - 1) <= 1e-10)


@pytest.mark.parametrize("normalize", [True, False])
def test_prediction_both_normalization_modes(normalize):
    rng = np.random.default_rng(12)
    centers = rng.normal(size=(3, 10))
    cols = np.concatenate([centers[j] + 0.05 * rng.normal(size=(4, 10)) for j in range(3)]).T
    d = crc.build_dictionary(cols, np.repeat([1, 2, 3], 4), normalize=normalize)
    op = crc.train(d, 1e-3)
    for j in range(3):
        y = crc.prepare_query(d, centers[j] + 0.05 * rng.normal(size=10))
        assert crc.residuals(d, crc.code(op, y), y).predicted == j + 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.01, 100.0))
def test_scale_equivariance(seed, scale):
    d, y = random_problem(seed, normalize=False)
    op = crc.train(d)
    a1, a2 = crc.code(op, y), crc.code(op, scale * y)
    np.testing.assert_allclose(a2, scale * a1, rtol=1e-12, atol=1e-14)
    p1, p2 = crc.residuals(d, a1, y), crc.residuals(d, a2, scale * y)
    np.testing.assert_allclose(p2.errors, scale ** 2 * p1.errors, rtol=1e-10)
    assert p1.predicted == p2.predicted or np.isclose(*np.partition(p1.errors, 1)[:2], rtol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), lam1=st.floats(1e-4, 10.0), factor=st.floats(1.001, 100.0))
def test_monotone_shrinkage(seed, lam1, factor):
    d, y = random_problem(seed)
    n1 = np.linalg.norm(crc.code(crc.train(d, lam1), y))
    n2 = np.linalg.norm(crc.code(crc.train(d, lam1 * factor), y))
    assert n2 <= n1 + 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_nonnegative_residuals(seed):
    d, y = random_problem(seed, c=5)
    profile = crc.residuals(d, crc.code(crc.train(d), y), y)
    assert np.all(profile.errors >= 0)
    assert profile.margin >= 0
    assert profile.errors[profile.predicted - 1] == profile.errors.min()
