"""
PCA eigenspace via the snapshot (Gram-matrix) method.

With ``n`` training vectors of dimension ``d`` stacked as the mean-centred
columns of ``A``, the non-zero eigenpairs of the covariance ``A A^T / n``
are recovered from the ``n x n`` matrix ``A^T A / n``: if ``u`` is an
eigenvector of the latter, ``A u`` is one of the former with the same
eigenvalue. Covariance divides by ``n``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, KTooLarge, TooFewSamples

DEFAULT_K = 40
# eigenvalues at or below this fraction of the largest are treated as zero
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class Eigenspace:
    mean: np.ndarray
    basis: np.ndarray  # d x k, orthonormal columns
    eigenvalues: np.ndarray  # length k, non-increasing

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]


def flatten(img) -> np.ndarray:
    """Row-major flattening of an image into a raw feature vector."""
    return np.asarray(img, dtype=np.float64).reshape(-1).copy()


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry positive; argmax picks the lowest index on ties
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def fit_eigenspace(training: Sequence[np.ndarray], k: int = DEFAULT_K, clamp: bool = False) -> Eigenspace:
    """
    Fit the top-``k`` eigenspace of *training*.

    Parameters
    ----------
    training : sequence of 1-D arrays, or an ``n x d`` array
    k : number of components to keep
    clamp : when True, a ``k`` above ``n - 1`` is lowered with a warning
        instead of raising :class:`KTooLarge`.

    Components whose eigenvalue is numerically zero are dropped with a
    warning, so identical training vectors give ``k = 0``.
    """
    try:
        data = np.asarray(training, dtype=np.float64)
    except ValueError:
        raise DimensionMismatch("training vectors have different lengths") from None
    if data.ndim != 2:
        raise DimensionMismatch("training vectors have different lengths")
    n, d = data.shape
    if n < 2:
        raise TooFewSamples(f"need at least 2 training vectors, got {n}")
    limit = min(d, n - 1)
    if k < 0:
        raise KTooLarge(f"k must be non-negative, got {k}")
    if k > limit:
        if not clamp:
            raise KTooLarge(f"k={k} exceeds min(d, n - 1) = {limit}")
        warnings.warn(f"k={k} lowered to {limit} for {n} training vectors", stacklevel=2)
        k = limit

    mean = data.mean(axis=0)
    centred = data - mean  # n x d, rows are the columns of A
    gram = centred @ centred.T / n
    values, vectors = np.linalg.eigh(gram)
    order = np.argsort(-values, kind="stable")
    values, vectors = values[order], vectors[:, order]

    top = values[0] if values.size else 0.0
    rank = int(np.sum(values > RANK_RTOL * max(top, 0.0))) if top > 0 else 0
    if k > rank:
        warnings.warn(f"only {rank} non-zero eigenvalues; k lowered from {k}", stacklevel=2)
        k = rank

    basis = centred.T @ vectors[:, :k]
    norms = np.linalg.norm(basis, axis=0)
    basis = _fix_signs(basis / norms)
    eigenvalues = np.maximum(values[:k], 0.0)
    return Eigenspace(mean, basis, eigenvalues)


def project(es: Eigenspace, v) -> np.ndarray:
    """Coordinates of ``v - mean`` in the eigenbasis. Accepts one vector or rows."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != es.d:
        raise DimensionMismatch(f"vector length {v.shape[-1]} != eigenspace dimension {es.d}")
    return (v - es.mean) @ es.basis


def reconstruct(es: Eigenspace, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != es.k:
        raise DimensionMismatch(f"projection length {p.shape[-1]} != k={es.k}")
    return es.mean + p @ es.basis.T
