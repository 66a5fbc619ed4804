"""Collaborative representation classification (CRC).

A test vector y is coded over every training column at once with an l2
penalty,

    alpha = argmin ||y - A alpha||^2 + lam ||alpha||^2 = (A^T A + lam I)^-1 A^T y,

and assigned to the class whose columns alone reconstruct it best. The
matrix P = (A^T A + lam I)^-1 A^T does not depend on y, so it is formed once
at training time and each query costs one matrix-vector product.

Class labels are 1-based indices ``1..c``.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DataError, InvalidArgumentError, ShapeError

DEFAULT_LAMBDA = 1e-3


@dataclass(frozen=True, eq=False)
class Dictionary:
    matrix_a: np.ndarray  # (m, n), one training sample per column
    labels: np.ndarray  # (n,) ints in 1..c
    class_count: int
    normalized: bool

    @property
    def dim(self):
        return self.matrix_a.shape[0]

    @property
    def size(self):
        return self.matrix_a.shape[1]

    def class_mask(self, j):
        return self.labels == j


@dataclass(frozen=True, eq=False)
class ProjectionOperator:
    matrix_p: np.ndarray  # (n, m)
    lam: float


@dataclass(frozen=True, eq=False)
class ResidualProfile:
    """Per-class reconstruction errors of one query under one classifier."""

    errors: np.ndarray  # (c,), errors[j - 1] belongs to class j
    predicted: int
    margin: float  # second smallest minus smallest error


def _unit_columns(a):
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        bad = np.flatnonzero(norms == 0).tolist()
        raise DataError(f"cannot normalize all-zero dictionary columns {bad}")
    return a / norms


def build_dictionary(columns, labels, normalize=True):
    """Assemble a dictionary from an (m, n) matrix of training columns."""
    a = np.array(columns, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if a.ndim != 2 or labels.shape != (a.shape[1],):
        raise ShapeError(f"columns {a.shape} and labels {labels.shape} do not match")
    if a.shape[1] == 0:
        raise DataError("dictionary has no columns")
    if not np.all(np.isfinite(a)):
        raise DataError("dictionary contains non-finite entries")
    c = int(labels.max())
    if labels.min() < 1 or np.any(np.bincount(labels, minlength=c + 1)[1:] == 0):
        raise DataError(f"labels must cover every class in 1..{c} with at least one column")
    if normalize:
        a = _unit_columns(a)
    a.setflags(write=False)
    labels.setflags(write=False)
    return Dictionary(matrix_a=a, labels=labels, class_count=c, normalized=bool(normalize))


def prepare_query(dictionary, y):
    """Bring y into the same normalization as the dictionary columns."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (dictionary.dim,):
        raise ShapeError(f"query length {y.shape} does not match dictionary dimension {dictionary.dim}")
    if dictionary.normalized:
        norm = np.linalg.norm(y)
        if norm > 0:
            y = y / norm
    return y


def train(dictionary, lam=DEFAULT_LAMBDA):
    """Form P = (A^T A + lam I)^-1 A^T by a Cholesky solve."""
    if not (np.isfinite(lam) and lam > 0):
        raise InvalidArgumentError(f"lambda must be a positive finite number, got {lam}")
    a = dictionary.matrix_a
    gram = a.T @ a
    gram[np.diag_indices_from(gram)] += lam
    p = linalg.cho_solve(linalg.cho_factor(gram, lower=True), a.T)
    p.setflags(write=False)
    return ProjectionOperator(matrix_p=p, lam=float(lam))


def code(operator, y):
    """Coding coefficients of y (already prepared) over every training column."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (operator.matrix_p.shape[1],):
        raise ShapeError(f"query length {y.shape} does not match operator width {operator.matrix_p.shape[1]}")
    return operator.matrix_p @ y


def class_indicator(dictionary):
    """(n, c) 0/1 matrix; column j-1 selects the coefficients of class j."""
    onehot = np.zeros((dictionary.size, dictionary.class_count))
    onehot[np.arange(dictionary.size), dictionary.labels - 1] = 1.0
    return onehot


def residuals(dictionary, alpha, y):
    """Squared reconstruction error of y by each class's columns alone."""
    alpha = np.asarray(alpha, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if alpha.shape != (dictionary.size,):
        raise ShapeError(f"coding length {alpha.shape} does not match {dictionary.size} columns")
    if y.shape != (dictionary.dim,):
        raise ShapeError(f"query length {y.shape} does not match dictionary dimension {dictionary.dim}")
    if dictionary.class_count < 2:
        raise InvalidArgumentError("the residual margin needs at least two classes")
    # column j-1 of recon is A delta_j(alpha)
    recon = (dictionary.matrix_a * alpha) @ class_indicator(dictionary)
    errors = np.sum((y[:, None] - recon) ** 2, axis=0)
    return profile_from_errors(errors)


def profile_from_errors(errors):
    errors = np.asarray(errors, dtype=np.float64)
    if errors.ndim != 1 or errors.size < 2:
        raise InvalidArgumentError("a residual profile needs at least two class errors")
    best = int(np.argmin(errors))  # first minimum, so ties go to the smaller class
    smallest, second = np.partition(errors, 1)[:2]
    return ResidualProfile(errors=errors, predicted=best + 1, margin=float(second - smallest))


def classify(profile):
    return profile.predicted


def objective(dictionary, alpha, y, lam):
    r = y - dictionary.matrix_a @ alpha
    return float(r @ r + lam * alpha @ alpha)


def gradient(dictionary, alpha, y, lam):
    a = dictionary.matrix_a
    return 2.0 * a.T @ (a @ alpha - y) + 2.0 * lam * alpha
