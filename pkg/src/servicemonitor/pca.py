"""Principal component analysis on mean-centered feature matrices.

Fitting eigendecomposes the sample covariance (divisor n-1) through
whichever of the covariance (d x d) or Gram (n x n) matrix is smaller,
so wide matrices (d = state_count**2 can exceed the sample count)
stay tractable. Components are unit-norm, variance-descending rows;
the requested component count is clamped to the numerical rank. Each
component's largest-magnitude coordinate is flipped positive, which
removes eigenvector sign ambiguity and makes fits reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import InsufficientDataError, ShapeError
from .validation import as_float_matrix, check_finite


@dataclass
class PcaModel:
    mean: np.ndarray                # (d,)
    components: np.ndarray          # (k, d), orthonormal rows
    explained_variance: np.ndarray  # (k,), non-increasing
    k: int
    d: int


def _descending_eigh(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values, vectors = np.linalg.eigh(matrix)
    return values[::-1], vectors[:, ::-1]


def _numerical_rank(eigenvalues: np.ndarray, n: int, d: int) -> int:
    if eigenvalues.size == 0 or eigenvalues[0] <= 0:
        return 0
    tol = eigenvalues[0] * max(n, d) * np.finfo(np.float64).eps
    return int(np.count_nonzero(eigenvalues > tol))


def _fix_signs(components: np.ndarray) -> np.ndarray:
    for row in components:
        pivot = int(np.argmax(np.abs(row)))
        if row[pivot] < 0:
            row *= -1.0
    return components


def fit_pca(data, n_components: int) -> PcaModel:
    """Fit the top n_components directions of maximal variance."""
    X = as_float_matrix(data)
    check_finite(X)
    n, d = X.shape
    if n < 2:
        raise InsufficientDataError(f"PCA needs at least 2 samples, got {n}")
    if n_components < 1:
        raise ValueError(f"n_components must be >= 1, got {n_components}")

    mean = X.mean(axis=0)
    centered = X - mean

    if d <= n:
        cov = centered.T @ centered / (n - 1)
        values, vectors = _descending_eigh(cov)
        rank = _numerical_rank(values, n, d)
        k = min(n_components, rank)
        components = vectors[:, :k].T.copy()
    else:
        gram = centered @ centered.T / (n - 1)
        values, vectors = _descending_eigh(gram)
        rank = _numerical_rank(values, n, d)
        k = min(n_components, rank)
        # Right singular directions recovered from the Gram eigenvectors.
        components = (centered.T @ vectors[:, :k]).T
        norms = np.linalg.norm(components, axis=1, keepdims=True)
        components = components / norms

    components = _fix_signs(np.ascontiguousarray(components))
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=values[:k].copy(),
        k=k,
        d=d,
    )


def transform(model: PcaModel, data) -> np.ndarray:
    """Project rows onto the fitted components: (data - mean) @ components.T."""
    X = as_float_matrix(data)
    if X.shape[1] != model.d:
        raise ShapeError(f"data has {X.shape[1]} columns, model expects {model.d}")
    return (X - model.mean) @ model.components.T


class PrincipalComponents(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper around fit_pca/transform."""

    def __init__(self, n_components: int = 200):
        self.n_components = n_components

    def fit(self, X, y=None):
        self.model_ = fit_pca(X, self.n_components)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise NotFittedError("PrincipalComponents must be fitted before transform")
        return transform(self.model_, X)

    @property
    def components_(self) -> np.ndarray:
        return self.model_.components

    @property
    def explained_variance_(self) -> np.ndarray:
        return self.model_.explained_variance

    @property
    def mean_(self) -> np.ndarray:
        return self.model_.mean
