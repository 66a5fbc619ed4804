"""PCA reduction of flattened feature maps, fitted per channel."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, RankError, ShapeError


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray  # (m, D), rows orthonormal, descending variance

    @property
    def input_dim(self):
        return self.basis.shape[1]

    @property
    def output_dim(self):
        return self.basis.shape[0]


def _fix_signs(basis):
    # largest-magnitude entry of each direction made positive; first index wins ties
    pivots = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(basis.shape[0]), pivots])
    signs[signs == 0] = 1.0
    return basis * signs[:, None]


def pca_fit(samples, target_dim):
    """Fit the top ``target_dim`` principal directions of ``samples`` (n x D).

    Uses the SVD of the centered data, whose right singular vectors are the
    covariance eigenvectors in descending eigenvalue order.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"samples must be an n x D matrix, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise InvalidArgumentError(f"PCA needs at least 2 samples, got {n}")
    if not 1 <= target_dim <= min(d, n - 1):
        raise InvalidArgumentError(
            f"target dimension {target_dim} outside [1, min(D={d}, n-1={n - 1})]")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = s.max(initial=0.0) * max(n, d) * np.finfo(np.float64).eps
    rank = int(np.sum(s > tol))
    if target_dim > rank:
        raise RankError(
            f"requested {target_dim} components but the centered data has rank {rank}",
            achievable_rank=rank)
    basis = _fix_signs(vt[:target_dim])
    mean.setflags(write=False)
    basis.setflags(write=False)
    return PcaModel(mean=mean, basis=basis)


def pca_transform(model, vectors):
    """Project one D-vector, or rows of an (n, D) matrix, onto the basis."""
    v = np.asarray(vectors, dtype=np.float64)
    if v.shape[-1] != model.input_dim:
        raise ShapeError(f"expected length {model.input_dim}, got {v.shape[-1]}")
    return (v - model.mean) @ model.basis.T
