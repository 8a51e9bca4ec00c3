"""Real coordinates for Hermitian matrices.

An n x n Hermitian matrix is stored as a real vector of length n**2:
the n diagonal entries first, then for every pair i < j (row-major)
``sqrt(2) * Re(A_ij)`` followed by ``sqrt(2) * Im(A_ij)``.  With this
scaling ``trace(A @ B) == w_a @ w_b`` for Hermitian A and B.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import BadLength, NonHermitianInput

__all__ = [
    "HERMITIAN_RTOL",
    "map_to_coords",
    "map_from_coords",
    "rank_one_coords",
    "coords_dim",
]

HERMITIAN_RTOL = 1e-10
_SQRT2 = math.sqrt(2.0)


def coords_dim(length: int) -> int:
    """Matrix side n for a coordinate vector of length n**2."""
    n = math.isqrt(length)
    if n * n != length or n == 0:
        raise BadLength(f"coordinate length {length} is not a positive perfect square")
    return n


def _check_hermitian(A: np.ndarray) -> np.ndarray:
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise NonHermitianInput(f"expected square matrix, got shape {A.shape}")
    AH = np.conj(np.swapaxes(A, -1, -2))
    diff = np.linalg.norm(A - AH, axis=(-2, -1))
    scale = np.linalg.norm(A, axis=(-2, -1))
    if np.any(diff > HERMITIAN_RTOL * scale):
        worst = float(np.max(diff / np.where(scale > 0, scale, 1.0)))
        raise NonHermitianInput(f"matrix is not Hermitian (relative asymmetry {worst:.3e})")
    return 0.5 * (A + AH)


def map_to_coords(A) -> np.ndarray:
    """Coordinates of a Hermitian matrix (or a stack of them, last two axes).

    Inputs within tolerance are symmetrized first. Raises
    ``NonHermitianInput`` otherwise.
    """
    A = _check_hermitian(np.asarray(A))
    n = A.shape[-1]
    iu, ju = np.triu_indices(n, 1)
    out = np.empty(A.shape[:-2] + (n * n,))
    out[..., :n] = np.real(np.diagonal(A, axis1=-2, axis2=-1))
    off = A[..., iu, ju]
    out[..., n::2] = _SQRT2 * off.real
    out[..., n + 1::2] = _SQRT2 * off.imag
    return out


def map_from_coords(w) -> np.ndarray:
    """Inverse of :func:`map_to_coords`; output is exactly Hermitian."""
    w = np.asarray(w, dtype=float)
    n = coords_dim(w.shape[-1])
    iu, ju = np.triu_indices(n, 1)
    A = np.zeros(w.shape[:-1] + (n, n), dtype=complex)
    idx = np.arange(n)
    A[..., idx, idx] = w[..., :n]
    off = (w[..., n::2] + 1j * w[..., n + 1::2]) / _SQRT2
    A[..., iu, ju] = off
    A[..., ju, iu] = np.conj(off)
    return A


def rank_one_coords(X) -> np.ndarray:
    """Coordinates of ``x x^H`` for every column x of X, stacked as columns.

    X has shape (n, d); the result has shape (n**2, d). Skips building the
    n x n outer products.
    """
    X = np.asarray(X)
    n = X.shape[0]
    iu, ju = np.triu_indices(n, 1)
    out = np.empty((n * n, X.shape[1]))
    out[:n] = np.abs(X) ** 2
    off = X[iu] * np.conj(X[ju])
    out[n::2] = _SQRT2 * off.real
    out[n + 1::2] = _SQRT2 * off.imag
    return out
