"""Ensemble of per-channel CRCs fused by residual-margin weights.

Each channel is one random kernel followed by its own PCA and CRC. For a
query, every channel produces a residual profile; a channel whose best class
stands well clear of the runner-up (large margin) is trusted more. Weights
are the margins normalized to sum to one, and the query goes to the class
with the smallest weighted sum of residuals.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import crc
from .errors import DataError, InvalidArgumentError, ShapeError
from .features import (DEFAULT_AMPLITUDE, DEFAULT_GAIN, DEFAULT_INNER_SCALE, LcnSpec,
                       PoolingSpec, extract_features, generate_filter_bank)
from .reduction import PcaModel, pca_fit, pca_transform

WEIGHTINGS = ("weighted", "unweighted")


@dataclass(frozen=True)
class EnsembleConfig:
    channels: int = 64
    filter_height: int = 5
    filter_width: int = 5
    filter_amplitude: float = DEFAULT_AMPLITUDE
    gain: float = DEFAULT_GAIN
    inner_scale: float = DEFAULT_INNER_SCALE
    lcn: LcnSpec = field(default_factory=LcnSpec)
    pooling: PoolingSpec = field(default_factory=PoolingSpec)
    pca_dim: int = 300
    lam: float = crc.DEFAULT_LAMBDA
    normalize: bool = True
    seed: int = 0


@dataclass(frozen=True, eq=False)
class Channel:
    index: int
    pca: PcaModel
    dictionary: crc.Dictionary
    operator: crc.ProjectionOperator


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    config: EnsembleConfig
    bank: object  # FilterBank
    channels: tuple
    image_shape: tuple
    class_names: tuple = ()
    metadata: dict = field(default_factory=dict)

    @property
    def channel_count(self):
        return len(self.channels)

    @property
    def class_count(self):
        return self.channels[0].dictionary.class_count


@dataclass(frozen=True, eq=False)
class Decision:
    label: int
    fused: np.ndarray
    weights: np.ndarray
    profiles: tuple

    @property
    def margins(self):
        return np.array([p.margin for p in self.profiles])


def compute_weights(margins):
    """Normalize nonnegative margins to sum to one; uniform if all are zero."""
    d = np.asarray(margins, dtype=np.float64)
    if d.ndim != 1 or d.size < 1:
        raise InvalidArgumentError("margins must be a non-empty vector")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise InvalidArgumentError(f"margins must be finite and nonnegative, got {d}")
    total = d.sum()
    if total == 0:
        return np.full(d.size, 1.0 / d.size)
    return d / total


def fuse_residuals(weights, profiles):
    """Weighted sum of per-channel error vectors and its argmin class."""
    weights = np.asarray(weights, dtype=np.float64)
    if len(profiles) == 0 or len({p.errors.shape for p in profiles}) != 1:
        raise ShapeError("need at least one profile, all with the same class count")
    errors = np.array([p.errors for p in profiles])
    if weights.shape != (errors.shape[0],):
        raise ShapeError(f"{weights.size} weights for {errors.shape[0]} profiles")
    fused = weights @ errors
    return fused, int(np.argmin(fused)) + 1


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _check_images(images, image_shape=None):
    stack = np.asarray(images, dtype=np.float64)
    if stack.ndim == 2:
        stack = stack[None]
    if stack.ndim != 3:
        raise ShapeError(f"expected a stack of 2-D images, got shape {stack.shape}")
    if image_shape is not None and stack.shape[1:] != tuple(image_shape):
        raise ShapeError(f"image extents {stack.shape[1:]} differ from trained extents {tuple(image_shape)}")
    return stack


def channel_features(model_or_bank, images, config=None, workers=1):
    """Feature vectors of every image on every channel, shape (n, k, D)."""
    if isinstance(model_or_bank, EnsembleModel):
        bank, config = model_or_bank.bank, model_or_bank.config
    else:
        bank = model_or_bank
    stack = _check_images(images)
    return np.array(_map(lambda im: extract_features(im, bank, config.lcn, config.pooling),
                         stack, workers))


def train_ensemble(images, labels, config, class_names=(), workers=1):
    """Generate the filter bank and fit PCA + CRC for every channel."""
    stack = _check_images(images)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (stack.shape[0],):
        raise ShapeError(f"{labels.size} labels for {stack.shape[0]} images")
    counts = np.bincount(labels, minlength=int(labels.max()) + 1)[1:]
    if labels.min() < 1 or counts.size < 2:
        raise DataError("training needs at least two classes labelled 1..c")
    if np.any(counts == 0):
        empty = (np.flatnonzero(counts == 0) + 1).tolist()
        raise DataError(f"classes {empty} have no training images")

    bank = generate_filter_bank(config.channels, config.filter_height, config.filter_width,
                                amplitude=config.filter_amplitude, gain=config.gain,
                                inner_scale=config.inner_scale, seed=config.seed)
    feats = channel_features(bank, stack, config, workers)

    def fit(i):
        pca = pca_fit(feats[:, i, :], config.pca_dim)
        reduced = pca_transform(pca, feats[:, i, :])
        dictionary = crc.build_dictionary(reduced.T, labels, normalize=config.normalize)
        return Channel(i, pca, dictionary, crc.train(dictionary, config.lam))

    channels = tuple(_map(fit, range(config.channels), workers))
    return EnsembleModel(config=config, bank=bank, channels=channels,
                         image_shape=tuple(stack.shape[1:]), class_names=tuple(class_names))


def channel_profiles(model, features):
    """Residual profile of each channel given that image's (k, D) features."""
    profiles = []
    for ch in model.channels:
        y = pca_transform(ch.pca, features[ch.index])
        y = crc.prepare_query(ch.dictionary, y)
        alpha = crc.code(ch.operator, y)
        profiles.append(crc.residuals(ch.dictionary, alpha, y))
    return tuple(profiles)


def decide(profiles, weighting="weighted"):
    if weighting == "weighted":
        weights = compute_weights([p.margin for p in profiles])
    elif weighting == "unweighted":
        weights = np.ones(len(profiles))
    else:
        raise InvalidArgumentError(f"weighting must be one of {WEIGHTINGS}, got {weighting!r}")
    fused, label = fuse_residuals(weights, profiles)
    return Decision(label=label, fused=fused, weights=weights, profiles=tuple(profiles))


def ensemble_classify(model, image, weighting="weighted"):
    image = _check_images(image, model.image_shape)[0]
    features = extract_features(image, model.bank, model.config.lcn, model.config.pooling)
    return decide(channel_profiles(model, features), weighting)


def classify_batch(model, images, weighting="weighted", workers=1):
    stack = _check_images(images, model.image_shape)
    return _map(lambda im: ensemble_classify(model, im, weighting), stack, workers)
