"""KL divergences between process predictions on finite index sets.

The closed form for two Gaussians splits into a mean term and a covariance
term,

    KL(N1 || N2) = (d_mean + d_cov) / 2
    d_mean = (m1 - m2)^T K2^-1 (m1 - m2)
    d_cov  = log det K2 - log det K1 + tr(K2^-1 K1) - n,

and both pieces are reported so tests can pin them separately.  For a
non-Gaussian prediction ``mu`` (here: Gaussian mixtures, the closure of the
noisy benchmark generators), the Gaussian divergence

    G(mu, nu) = KL(N(mu) || nu),    N(mu) = moment-matched Gaussian,

measures the part of KL(mu || nu) that a Gaussian approximation can
actually remove: KL(mu || nu) - KL(mu || N(mu)) = G(mu, nu), which the
Monte Carlo estimator here can confirm numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .gp import GaussianFDD
from .linalg import cholesky_safe


@dataclass(frozen=True)
class KLReport:
    """Closed-form KL value plus its mean/covariance decomposition."""

    value: float
    mean_term: float
    cov_term: float


@dataclass
class MixtureFDD:
    """Finite mixture of Gaussian FDDs on a shared index set."""

    weights: np.ndarray
    components: list

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(self.weights) != len(self.components):
            raise ValueError(
                f"{len(self.weights)} weights for {len(self.components)} components"
            )
        if np.any(self.weights < 0) or not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("mixture weights must be nonnegative and sum to one")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError(f"components disagree on dimension: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def logpdf(self, y: np.ndarray):
        """Log mixture density; accepts (d,) or a batch (n, d)."""
        y = np.asarray(y, dtype=np.float64)
        single = y.ndim == 1
        batch = y[None, :] if single else y
        per_comp = np.stack(
            [np.atleast_1d(c.logpdf(batch)) for c in self.components], axis=0
        )
        shifted = per_comp + np.log(self.weights)[:, None]
        top = shifted.max(axis=0)
        out = top + np.log(np.exp(shifted - top).sum(axis=0))
        return float(out[0]) if single else out

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        counts = rng.multinomial(n, self.weights)
        draws = np.concatenate(
            [
                c.sample(rng, k) if k else np.empty((0, self.dim))
                for c, k in zip(self.components, counts)
            ]
        )
        rng.shuffle(draws, axis=0)
        return draws


def gaussian_kl(p: GaussianFDD, q: GaussianFDD) -> KLReport:
    """Closed-form KL(p || q) between Gaussian FDDs of equal dimension."""
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: p has {p.dim}, q has {q.dim}")
    n = p.dim
    chol_q, _ = cholesky_safe(q.cov, max_jitter=0.0)
    chol_p, _ = cholesky_safe(p.cov, max_jitter=0.0)
    diff = p.mean - q.mean
    white = solve_triangular(chol_q, diff, lower=True)
    mean_term = float(white @ white)
    logdet_q = 2.0 * np.log(np.diagonal(chol_q)).sum()
    logdet_p = 2.0 * np.log(np.diagonal(chol_p)).sum()
    # tr(Kq^-1 Kp) = ||Lq^-1 Lp||_F^2
    half = solve_triangular(chol_q, chol_p, lower=True)
    trace = float((half * half).sum())
    cov_term = float(logdet_q - logdet_p + trace - n)
    return KLReport(0.5 * (mean_term + cov_term), mean_term, cov_term)


def moment_match(mu: MixtureFDD) -> GaussianFDD:
    """The Gaussian with the mixture's mean and covariance.

    Among all Gaussians this one minimizes KL(mu || .), so it is the
    canonical Gaussian summary of a non-Gaussian prediction.
    """
    means = np.stack([c.mean for c in mu.components])
    mean = mu.weights @ means
    cov = np.zeros((mu.dim, mu.dim))
    for w, c in zip(mu.weights, mu.components):
        cov += w * (c.cov + np.outer(c.mean, c.mean))
    cov -= np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    x = mu.components[0].x
    return GaussianFDD(x, mean, cov)


def gaussian_divergence(mu, nu: GaussianFDD) -> float:
    """G(mu, nu) = KL(N(mu) || nu); Gaussian mu is its own moment match."""
    matched = moment_match(mu) if isinstance(mu, MixtureFDD) else mu
    return gaussian_kl(matched, nu).value


def mc_kl(p, q, n_samples: int, rng: np.random.Generator):
    """Monte Carlo estimate of KL(p || q) with its standard error.

    ``p`` and ``q`` expose ``logpdf``; ``p`` also exposes ``sample``.
    Returns ``(estimate, stderr)`` where stderr is the sample standard
    deviation of the log-ratio terms divided by sqrt(n_samples).
    """
    if n_samples < 2:
        raise ValueError("mc_kl needs at least two samples")
    draws = p.sample(rng, n_samples)
    terms = np.asarray(p.logpdf(draws)) - np.asarray(q.logpdf(draws))
    estimate = float(terms.mean())
    stderr = float(terms.std(ddof=1) / np.sqrt(n_samples))
    return estimate, stderr


def kl_upper_bound(n: int, bound: float, noise_var: float) -> float:
    """Dimension-dependent KL cap for noisy processes with bounded moments:
    4 n^2 max(bound, 1)^2 / noise_var, valid for n >= 2.

    ``bound`` caps the absolute values of both mean functions and both
    covariance functions (noise included); ``noise_var`` is a shared lower
    bound on the two noise variances.
    """
    if n < 2:
        raise ValueError(f"the bound needs dimension n >= 2, got {n}")
    if not bound > 0.0:
        raise ValueError(f"moment bound must be positive, got {bound}")
    if not noise_var > 0.0:
        raise ValueError(f"noise variance must be positive, got {noise_var}")
    return 4.0 * n * n * max(bound, 1.0) ** 2 / noise_var


def averaged_kl(
    truth_map,
    model_map,
    index_sampler,
    dataset_sampler,
    n_outer: int,
    n_points: int,
    noise_var: float,
    rng: np.random.Generator,
    return_terms: bool = False,
):
    """Estimate E_{D, x} [ KL(truth(D)_x || model(D)_x) ] over random
    datasets and index sets.

    ``truth_map`` and ``model_map`` take ``(dataset, x)`` and return a
    GaussianFDD with noiseless-function covariance; ``noise_var`` is added
    to both diagonals before comparing, matching how noisy processes are
    scored.  Returns ``(estimate, stderr)``; with ``return_terms`` the
    per-draw KL values come back as a third element.
    """
    if n_outer < 2:
        raise ValueError("averaged_kl needs at least two outer samples")
    terms = np.empty(n_outer)
    for i in range(n_outer):
        data = dataset_sampler(rng)
        x = np.asarray(index_sampler(rng, n_points), dtype=np.float64)
        p = truth_map(data, x).with_extra_diag(noise_var)
        q = model_map(data, x).with_extra_diag(noise_var)
        terms[i] = gaussian_kl(p, q).value
    estimate = float(terms.mean())
    stderr = float(terms.std(ddof=1) / np.sqrt(n_outer))
    if return_terms:
        return estimate, stderr, terms
    return estimate, stderr
