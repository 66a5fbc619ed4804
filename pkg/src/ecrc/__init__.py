"""Ensemble collaborative representation classification over random convolutional features."""

from .crc import build_dictionary, classify, code, residuals, train
from .ensemble import (EnsembleConfig, EnsembleModel, compute_weights, ensemble_classify,
                       fuse_residuals, train_ensemble)
from .features import (FilterBank, LcnSpec, PoolingSpec, extract_channel, extract_features,
                       filter_layer, generate_filter_bank, local_contrast_normalize, pool, rectify)
from .reduction import PcaModel, pca_fit, pca_transform

__version__ = "0.1.0"
