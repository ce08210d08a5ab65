"""Exact Gaussian process computations on finite index sets.

``GaussianFDD`` is the finite-dimensional distribution every predictor in
this package emits: an index set, a mean vector, and a full covariance
matrix.  The posterior here conditions on noisy observations and returns the
noiseless-function covariance; callers that score noisy data add the noise
variance back onto the diagonal themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .kernels import KernelSpec, kernel_eval
from .linalg import chol_logpdf, chol_solve, cholesky_safe


@dataclass
class Dataset:
    """Paired observations (x, y); either side may be empty."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if self.x.shape != self.y.shape:
            raise ValueError(f"dataset sides disagree: x {self.x.shape} vs y {self.y.shape}")

    def __len__(self):
        return self.x.shape[0]

    def sorted(self) -> "Dataset":
        """Canonical order: lexicographic in (x, y).  Encoders sort context
        so that reordered datasets produce bitwise-identical sums."""
        order = np.lexsort((self.y, self.x))
        return Dataset(self.x[order], self.y[order])


def empty_dataset() -> Dataset:
    return Dataset(np.empty(0), np.empty(0))


@dataclass
class GaussianFDD:
    """Gaussian finite-dimensional distribution N(mean, cov) at inputs x."""

    x: np.ndarray | None
    mean: np.ndarray
    cov: np.ndarray
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise ValueError(f"covariance shape {self.cov.shape} does not match dim {n}")
        if self.x is not None:
            self.x = np.asarray(self.x, dtype=np.float64).reshape(-1)
            if self.x.shape[0] != n:
                raise ValueError(f"index set has {self.x.shape[0]} points for dim {n}")
        asym = np.abs(self.cov - self.cov.T).max() if n else 0.0
        scale = max(1.0, np.abs(self.cov).max()) if n else 1.0
        if asym > 1e-8 * scale:
            raise ValueError(f"covariance is not symmetric (max asymmetry {asym:g})")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def with_extra_diag(self, variance: float) -> "GaussianFDD":
        return GaussianFDD(self.x, self.mean, self.cov + variance * np.eye(self.dim))

    def _factor(self):
        if self._chol is None:
            self._chol, _ = cholesky_safe(self.cov, max_jitter=1e-8)
        return self._chol

    def logpdf(self, y: np.ndarray) -> np.ndarray | float:
        """Log-density at ``y``; accepts one point (d,) or a batch (n, d)."""
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            value, _ = chol_logpdf(y, self.mean, self.cov)
            return value
        chol = self._factor()
        diff = y - self.mean
        w = solve_triangular(chol, diff.T, lower=True)
        logdet = 2.0 * np.log(np.diagonal(chol)).sum()
        quad = (w * w).sum(axis=0)
        return -0.5 * (self.dim * np.log(2.0 * np.pi) + logdet + quad)

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        """Draw ``n`` samples, shape (n, dim)."""
        chol = self._factor()
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ chol.T

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.cov + self.cov.T)).min())


def gaussian_logpdf(y: np.ndarray, fdd: GaussianFDD, extra_diag: float = 0.0) -> float:
    """Joint log-density of ``y`` under the FDD, with optional extra diagonal
    variance (the noisy-process convention for scoring observations)."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != fdd.dim:
        raise ValueError(f"observation dim {y.shape[0]} does not match FDD dim {fdd.dim}")
    cov = fdd.cov if extra_diag == 0.0 else fdd.cov + extra_diag * np.eye(fdd.dim)
    value, _ = chol_logpdf(y, fdd.mean, cov)
    return float(value)


def gp_sample(
    spec: KernelSpec, x: np.ndarray, noise_var: float, rng: np.random.Generator
) -> np.ndarray:
    """One joint draw of the noisy process at inputs ``x``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("gp_sample needs at least one input point")
    cov = kernel_eval(spec, x, x) + noise_var * np.eye(x.size)
    chol, _ = cholesky_safe(cov)
    return chol @ rng.standard_normal(x.size)


def gp_posterior(
    spec: KernelSpec, context: Dataset, targets: np.ndarray, noise_var: float
) -> GaussianFDD:
    """Exact posterior at ``targets`` given noisy context observations.

    Empty context returns the prior.  The returned covariance is the
    noiseless-function covariance.
    """
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    k_tt = kernel_eval(spec, targets, targets)
    if len(context) == 0:
        return GaussianFDD(targets, np.zeros(targets.size), k_tt)
    k_cc = kernel_eval(spec, context.x, context.x) + noise_var * np.eye(len(context))
    k_tc = kernel_eval(spec, targets, context.x)
    chol, _ = cholesky_safe(k_cc)
    alpha = chol_solve(chol, context.y)
    mean = k_tc @ alpha
    cov = k_tt - k_tc @ chol_solve(chol, k_tc.T)
    cov = 0.5 * (cov + cov.T)
    return GaussianFDD(targets, mean, cov)
