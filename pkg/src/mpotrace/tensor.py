"""Dense tensor kernels: contraction, truncated SVD, tridiagonal eigensolve.

Thin deterministic wrappers around numpy/LAPACK with the truncation and
tolerance conventions used by the MPO layer. All functions are pure; inputs
are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

# Singular values below RANK_TOL * sigma_max never count toward the rank of a
# matrix; keeps isometry checks clean in the presence of roundoff.
RANK_TOL = 1e-14


def contract(a, b, pairs):
    """Contract ``a`` and ``b`` over the given (axis_a, axis_b) pairs.

    No implicit conjugation is applied; the remaining axes of the result are
    ordered a-then-b.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    for i, j in pairs:
        if a.shape[i] != b.shape[j]:
            raise ValueError(
                f"paired axis extent mismatch: a.shape[{i}]={a.shape[i]} "
                f"vs b.shape[{j}]={b.shape[j]}"
            )
    ax_a = [p[0] for p in pairs]
    ax_b = [p[1] for p in pairs]
    return np.tensordot(a, b, axes=(ax_a, ax_b))


@dataclass(frozen=True)
class SvdResult:
    """Truncated singular value decomposition m ~ u @ diag(s) @ vh."""

    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray
    discarded_weight: float  # sum of squared discarded singular values


def truncated_svd(m, max_rank):
    """SVD of a matrix keeping at most ``max_rank`` singular triplets.

    Numerically zero singular values (below RANK_TOL * sigma_max) are dropped
    as well; at least one triplet is always kept so downstream bond extents
    stay >= 1.
    """
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError("truncated_svd expects a matrix")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but sturdier
        u, s, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
    if s[0] > 0.0:
        rank = int(np.count_nonzero(s > RANK_TOL * s[0]))
    else:
        rank = 0
    k = min(int(max_rank), max(rank, 1), s.size)
    discarded = float(np.sum(s[k:] ** 2))
    return SvdResult(u[:, :k], s[:k], vh[:k], discarded)


def symtridiag_eig(alpha, beta):
    """Eigendecomposition of a real symmetric tridiagonal matrix.

    ``alpha`` is the diagonal, ``beta`` the off-diagonal (one entry shorter).
    Returns eigenvalues ascending and the orthogonal eigenvector matrix with
    eigenvectors as columns.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if alpha.ndim != 1 or alpha.size == 0:
        raise ValueError("alpha must be a non-empty 1-d array")
    if beta.shape != (alpha.size - 1,):
        raise ValueError("beta must have length len(alpha) - 1")
    if alpha.size == 1:
        return alpha.copy(), np.ones((1, 1))
    return scipy.linalg.eigh_tridiagonal(alpha, beta)
