import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecrc import crc
from ecrc.dataset import generate_synthetic
from ecrc.ensemble import (EnsembleConfig, channel_features, classify_batch, compute_weights, decide,
                           ensemble_classify, fuse_residuals, train_ensemble)
from ecrc.errors import DataError, InvalidArgumentError, ShapeError
from ecrc.features import LcnSpec
from ecrc.reduction import pca_transform


@pytest.fixture(scope="module")
def synthetic():
    return generate_synthetic(4, 4, 16, 16, noise=0.05, seed=1)


def small_config(**kw):
    base = dict(channels=3, pca_dim=6, lcn=LcnSpec(window=5), seed=0)
    base.update(kw)
    return EnsembleConfig(**base)


def test_weights_examples():
    np.testing.assert_allclose(compute_weights([1.0, 3.0]), [0.25, 0.75], atol=0)
    np.testing.assert_array_equal(compute_weights([5.0]), [1.0])
    np.testing.assert_array_equal(compute_weights([0.0, 0.0, 0.0, 0.0]), [0.25] * 4)


def test_weights_match_oracle_and_scale_free():
    rng = np.random.default_rng(0)
    for _ in range(50):
        d = rng.random(rng.integers(1, 20))
        w = compute_weights(d)
        expected = [v / sum(d) for v in d]
        assert np.max(np.abs(w - expected)) < 1e-14
        assert np.max(np.abs(compute_weights(7 * d) - w)) < 1e-14


@pytest.mark.parametrize("bad", [[-0.1, 1.0], [np.nan, 1.0], [np.inf], []])
def test_weights_reject_bad_margins(bad):
    with pytest.raises(InvalidArgumentError):
        compute_weights(bad)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=30))
def test_weights_sum_to_one(margins):
    w = compute_weights(margins)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) < 1e-12


def test_fuse_single_profile():
    p = crc.profile_from_errors([0.3, 0.1, 0.7])
    fused, label = fuse_residuals([1.0], [p])
    np.testing.assert_array_equal(fused, p.errors)
    assert label == p.predicted


def test_fuse_symmetric_tie():
    fused, label = fuse_residuals([0.5, 0.5], [crc.profile_from_errors([0.0, 2.0]),
                                               crc.profile_from_errors([2.0, 0.0])])
    np.testing.assert_array_equal(fused, [1.0, 1.0])
    assert label == 1


def test_fuse_matches_double_loop():
    rng = np.random.default_rng(1)
    errors = rng.random((8, 10))
    w = compute_weights(rng.random(8))
    fused, _ = fuse_residuals(w, [crc.profile_from_errors(e) for e in errors])
    expected = [sum(w[i] * errors[i, j] for i in range(8)) for j in range(10)]
    assert np.max(np.abs(fused - expected)) < 1e-12


def test_fuse_class_count_mismatch():
    with pytest.raises(ShapeError):
        fuse_residuals([0.5, 0.5], [crc.profile_from_errors([1.0, 2.0]),
                                    crc.profile_from_errors([1.0, 2.0, 3.0])])


def test_fusion_is_linear_and_argmin_scale_invariant():
    rng = np.random.default_rng(2)
    e1, e2, e3 = rng.random((3, 4, 6))
    w = compute_weights(rng.random(4))
    P = lambda E: [crc.profile_from_errors(e) for e in E]
    f1, _ = fuse_residuals(w, P(e1))
    f2, _ = fuse_residuals(w, P(e2))
    f12, _ = fuse_residuals(w, P(2.0 * e1 + 3.0 * e2))
    np.testing.assert_allclose(f12, 2.0 * f1 + 3.0 * f2, rtol=1e-12)
    _, a = fuse_residuals(w, P(e3))
    _, b = fuse_residuals(w, P(4.5 * e3))
    assert a == b


def test_unweighted_sums_errors():
    rng = np.random.default_rng(3)
    profiles = [crc.profile_from_errors(e) for e in rng.random((5, 4))]
    d = decide(profiles, "unweighted")
    np.testing.assert_array_equal(d.weights, np.ones(5))
    np.testing.assert_allclose(d.fused, np.sum([p.errors for p in profiles], axis=0), rtol=1e-15)
    with pytest.raises(InvalidArgumentError):
        decide(profiles, "average")


def test_train_bookkeeping():
    train, _ = generate_synthetic(2, 2, 16, 16, noise=0.05, seed=0)
    model = train_ensemble(train.images, train.labels, small_config(channels=2, pca_dim=2))
    assert model.channel_count == 2
    assert all(ch.dictionary.size == 4 for ch in model.channels)
    assert all(ch.dictionary.dim == 2 for ch in model.channels)


def test_train_rejects_single_class_and_gaps(synthetic):
    train, _ = synthetic
    with pytest.raises(DataError):
        train_ensemble(train.images[:4], np.ones(4, dtype=int), small_config(pca_dim=2))
    labels = train.labels.copy()
    labels[labels == 2] = 1
    with pytest.raises(DataError):
        train_ensemble(train.images, labels, small_config())


def test_training_is_deterministic(synthetic):
    train, test = synthetic
    m1 = train_ensemble(train.images, train.labels, small_config())
    m2 = train_ensemble(train.images, train.labels, small_config())
    d1 = classify_batch(m1, test.images)
    d2 = classify_batch(m2, test.images)
    assert [d.label for d in d1] == [d.label for d in d2]
    assert all(a.fused.tobytes() == b.fused.tobytes() for a, b in zip(d1, d2))


def test_channels_differ_but_labels_agree(synthetic):
    train, _ = synthetic
    model = train_ensemble(train.images, train.labels, small_config(channels=64))
    mats = [ch.dictionary.matrix_a for ch in model.channels]
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            assert not np.allclose(mats[i], mats[j])
    assert all(np.array_equal(ch.dictionary.labels, train.labels) for ch in model.channels)


def test_single_channel_equals_plain_crc(synthetic):
    train, test = synthetic
    model = train_ensemble(train.images, train.labels, small_config(channels=1))
    ch = model.channels[0]
    for image in test.images:
        feats = channel_features(model, image)[0]
        y = crc.prepare_query(ch.dictionary, pca_transform(ch.pca, feats[0]))
        plain = crc.residuals(ch.dictionary, crc.code(ch.operator, y), y)
        decision = ensemble_classify(model, image)
        assert decision.label == plain.predicted
        np.testing.assert_array_equal(decision.fused, plain.errors)


def test_training_image_probe_recovers_label():
    train, _ = generate_synthetic(5, 3, 20, 20, noise=0.0, seed=4)
    # noise-free: the three samples per class coincide, so PCA rank is c - 1
    model = train_ensemble(train.images, train.labels, small_config(channels=4, pca_dim=4))
    for image, label in zip(train.images, train.labels):
        decision = ensemble_classify(model, image)
        assert decision.label == label
        assert decision.fused[label - 1] < np.delete(decision.fused, label - 1).min()


def test_decision_weights_sum_to_one(synthetic):
    train, test = synthetic
    model = train_ensemble(train.images, train.labels, small_config(channels=5))
    for d in classify_batch(model, test.images):
        assert abs(d.weights.sum() - 1.0) < 1e-12
        assert np.all(d.weights >= 0)


def test_parallel_matches_serial(synthetic):
    train, test = synthetic
    model = train_ensemble(train.images, train.labels, small_config(channels=4), workers=3)
    serial = train_ensemble(train.images, train.labels, small_config(channels=4))
    a = classify_batch(model, test.images, workers=4)
    b = classify_batch(serial, test.images)
    assert all(x.fused.tobytes() == y.fused.tobytes() for x, y in zip(a, b))


def test_classify_wrong_extents(synthetic):
    train, _ = synthetic
    model = train_ensemble(train.images, train.labels, small_config())
    with pytest.raises(ShapeError):
        ensemble_classify(model, np.zeros((17, 16)))
