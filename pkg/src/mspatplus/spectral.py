"""Eigenbasis of the neighbourhood matrix and the one-step spatial+ split.

Columns of the basis are ordered by DESCENDING eigenvalue, so the smoothest
(large-scale) eigenvectors are the trailing columns and the constant vector is
the very last one. Removing ``k`` large-scale components is then a suffix
slice of ``k + 1`` columns.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    FractionTooLarge,
    KOutOfRange,
    MultipleZeroEigenvalues,
    NotSymmetric,
    ValidationError,
)

ZERO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Orthonormal eigenvectors ``U`` (columns) and eigenvalues of Q."""

    U: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    ordering: str = "descending"

    @property
    def n(self):
        return self.U.shape[0]

    def reconstruct(self):
        return (self.U * self.eigenvalues) @ self.U.T


@dataclass(frozen=True, eq=False)
class CovariateSplit:
    """``X = Z + Z_star``; ``Z_star`` holds the ``k + 1`` removed columns."""

    Z: np.ndarray
    Z_star: np.ndarray
    k: int
    coefficients: np.ndarray

    @property
    def n_retained(self):
        return self.Z.shape[0] - (self.k + 1)


def _fix_signs(U):
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def eigendecompose(Q, atol=1e-10):
    """Spectral decomposition ``Q = U diag(eigenvalues) U'``.

    Eigenvalues are returned in descending order; the last column is exactly
    ``1/sqrt(n)`` and its eigenvalue exactly 0. Each other column is signed so
    its largest-magnitude entry is positive.

    Raises
    ------
    NotSymmetric
        If ``Q`` is not symmetric within ``atol`` (relative to its scale).
    MultipleZeroEigenvalues
        If more than one eigenvalue is numerically zero, i.e. the graph behind
        ``Q`` is disconnected.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionMismatch(f"Q must be square, got shape {Q.shape}")
    scale = max(1.0, float(np.abs(Q).max()))
    if not np.allclose(Q, Q.T, rtol=0.0, atol=atol * scale):
        raise NotSymmetric("Q is not symmetric")
    n = Q.shape[0]
    vals, vecs = np.linalg.eigh(0.5 * (Q + Q.T))
    vals, vecs = vals[::-1], vecs[:, ::-1]
    zero = np.abs(vals) <= ZERO_TOL * scale
    if zero.sum() > 1:
        raise MultipleZeroEigenvalues(f"{int(zero.sum())} zero eigenvalues; graph is disconnected")
    if not zero[-1]:
        raise ValidationError("Q has no zero eigenvalue; rows must sum to zero")
    U = _fix_signs(vecs)
    U[:, -1] = 1.0 / math.sqrt(n)
    vals = vals.copy()
    vals[-1] = 0.0
    U.setflags(write=False)
    vals.setflags(write=False)
    return SpectralBasis(U=U, eigenvalues=vals)


def project(X, basis):
    """Coefficients ``a = U'X`` of ``X`` in the eigenbasis."""
    X = np.asarray(X, dtype=float)
    if X.shape != (basis.n,):
        raise DimensionMismatch(f"X has shape {X.shape}, basis has n={basis.n}")
    return basis.U.T @ X


def split_covariate(X, basis, k):
    """Split ``X`` into retained small-scale part ``Z`` and removed ``Z_star``.

    ``Z_star`` spans the ``k + 1`` eigenvectors with the lowest eigenvalues
    (the constant vector included); ``Z`` spans the remaining ``n - (k + 1)``.
    """
    n = basis.n
    k = int(k)
    if not 0 <= k <= n - 2:
        raise KOutOfRange(f"k={k} outside [0, {n - 2}]")
    X = np.asarray(X, dtype=float)
    a = project(X, basis)
    m = n - (k + 1)
    Z = basis.U[:, :m] @ a[:m]
    return CovariateSplit(Z=Z, Z_star=X - Z, k=k, coefficients=a)


def k_from_fraction(n, fraction):
    """Number of large-scale eigenvectors for a removal fraction (half-up)."""
    fraction = float(fraction)
    if not 0.0 <= fraction < 1.0:
        raise FractionTooLarge(f"fraction {fraction} outside [0, 1)")
    # the epsilon absorbs representation error such as 0.07 * 70 = 4.9000000000000004
    k = int(math.floor(fraction * n + 0.5 + 1e-12))
    if k > n - 2:
        raise FractionTooLarge(f"fraction {fraction} of n={n} removes k={k} > n-2")
    return k


def model_name(n, k=None):
    """Table-style model name: ``M-Spatial`` or ``M-SpatPlus<n-(k+1)>``."""
    if k is None:
        return "M-Spatial"
    return f"M-SpatPlus{n - (int(k) + 1)}"


def k_from_model_name(name, n):
    """Inverse of :func:`model_name`; returns None for ``M-Spatial``."""
    if name == "M-Spatial":
        return None
    prefix = "M-SpatPlus"
    if not name.startswith(prefix):
        raise ValidationError(f"unknown model name {name!r}")
    try:
        retained = int(name[len(prefix):])
    except ValueError:
        raise ValidationError(f"unknown model name {name!r}") from None
    k = n - 1 - retained
    if not 0 <= k <= n - 2:
        raise KOutOfRange(f"{name} implies k={k} for n={n}")
    return k


def morans_i(x, W):
    """Moran's I of ``x`` under the binary weights ``W``."""
    z = np.asarray(x, dtype=float) - np.mean(x)
    s0 = W.sum()
    return float(len(z) / s0 * (z @ W @ z) / (z @ z))


def large_scale_subspace(basis, m):
    """The ``m`` smoothest non-constant eigenvectors (n x m)."""
    n = basis.n
    if not 1 <= m <= n - 1:
        raise KOutOfRange(f"subspace size {m} outside [1, {n - 1}]")
    return basis.U[:, n - 1 - m:n - 1]
