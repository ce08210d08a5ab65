"""Positive-definite linear algebra used by every Gaussian computation.

Factorizations route through LAPACK (``numpy.linalg`` / ``scipy.linalg``);
this module adds the policies around them: a geometric jitter ladder for
barely-PSD matrices and the nearest-PSD projection (symmetrize, then clip
negative eigenvalues at zero).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

LOG_2PI = np.log(2.0 * np.pi)


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky failed even at the maximum allowed jitter."""


def cholesky_safe(a: np.ndarray, max_jitter: float = 1e-6):
    """Lower-triangular Cholesky factor with an escalating diagonal jitter.

    Tries the plain factorization first, then jitters the diagonal starting
    at 1e-12 and growing tenfold up to ``max_jitter``.  Returns ``(L,
    jitter_used)`` so callers can report how much regularization was needed.

    Raises:
        NotPositiveDefiniteError: no jitter within the ladder succeeded.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"cholesky_safe expects a square matrix, got shape {a.shape}")
    try:
        return np.linalg.cholesky(a), 0.0
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(a.shape[0])
    jitter = 1e-12
    while jitter <= max_jitter * (1.0 + 1e-12):
        try:
            return np.linalg.cholesky(a + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NotPositiveDefiniteError(
        f"matrix of shape {a.shape} is not positive definite even with "
        f"jitter {max_jitter:g}"
    )


def nearest_psd(a: np.ndarray) -> np.ndarray:
    """Nearest (Frobenius) positive semidefinite matrix.

    Symmetrizes, then zeroes out negative eigenvalues.  Idempotent, and the
    identity on matrices that are already symmetric PSD.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"nearest_psd expects a square matrix, got shape {a.shape}")
    sym = 0.5 * (a + a.T)
    eigval, eigvec = np.linalg.eigh(sym)
    clipped = np.clip(eigval, 0.0, None)
    out = (eigvec * clipped) @ eigvec.T
    return 0.5 * (out + out.T)


def chol_logpdf(y: np.ndarray, mean: np.ndarray, cov: np.ndarray):
    """Gaussian log-density via Cholesky; returns ``(value, L)``.

    The factor is reused by callers that need solves against the same
    covariance (posterior updates, density gradients).  The covariance must
    be positive definite as given; no jitter is applied here.
    """
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            f"covariance of shape {cov.shape} is not positive definite"
        ) from exc
    diff = y - mean
    white = solve_triangular(chol, diff, lower=True)
    logdet = 2.0 * np.log(np.diagonal(chol)).sum()
    n = y.shape[0]
    value = -0.5 * (n * LOG_2PI + logdet + white @ white)
    return value, chol


def chol_solve(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve K x = b given the lower Cholesky factor of K."""
    return cho_solve((chol, True), b)
