"""Closed-form divergences against hand values and Monte Carlo oracles."""

import math

import numpy as np
import pytest

from gnplab.divergences import (
    MixtureFDD,
    averaged_kl,
    gaussian_divergence,
    gaussian_kl,
    kl_upper_bound,
    mc_kl,
    moment_match,
)
from gnplab.gp import Dataset, GaussianFDD, gp_posterior
from gnplab.kernels import default_kernel
from gnplab.linalg import NotPositiveDefiniteError


def g(mean, cov):
    return GaussianFDD(None, np.atleast_1d(np.asarray(mean, dtype=float)),
                       np.atleast_2d(np.asarray(cov, dtype=float)))


def random_gaussian(rng, dim):
    b = rng.standard_normal((dim, dim))
    return g(rng.standard_normal(dim), b @ b.T + dim * np.eye(dim))


def test_kl_identical_is_zero():
    p = g(0.0, 1.0)
    assert gaussian_kl(p, p).value == 0.0


def test_kl_unit_mean_shift():
    rep = gaussian_kl(g(0.0, 1.0), g(1.0, 1.0))
    assert rep.value == 0.5
    assert rep.mean_term == 1.0
    assert rep.cov_term == 0.0


def test_kl_scaled_identity_2d():
    rep = gaussian_kl(g([0.0, 0.0], np.eye(2)), g([0.0, 0.0], 4.0 * np.eye(2)))
    expected = 0.5 * (math.log(16.0) + 0.5 - 2.0)
    np.testing.assert_allclose(rep.value, expected, rtol=1e-12)


def test_report_decomposition_invariant(rng):
    for _ in range(50):
        dim = int(rng.integers(1, 5))
        rep = gaussian_kl(random_gaussian(rng, dim), random_gaussian(rng, dim))
        assert abs(rep.value - 0.5 * (rep.mean_term + rep.cov_term)) <= 1e-12
        assert rep.mean_term >= -1e-12 and rep.cov_term >= -1e-12


def test_kl_nonnegative_many_pairs(rng):
    for _ in range(200):
        dim = int(rng.integers(1, 6))
        rep = gaussian_kl(random_gaussian(rng, dim), random_gaussian(rng, dim))
        assert rep.value >= -1e-10


def test_kl_projection_monotone(rng):
    for _ in range(25):
        dim = int(rng.integers(2, 6))
        p, q = random_gaussian(rng, dim), random_gaussian(rng, dim)
        full = gaussian_kl(p, q).value
        keep = sorted(rng.choice(dim, size=int(rng.integers(1, dim)), replace=False))
        sub = gaussian_kl(
            g(p.mean[keep], p.cov[np.ix_(keep, keep)]),
            g(q.mean[keep], q.cov[np.ix_(keep, keep)]),
        ).value
        assert sub <= full + 1e-10


def test_kl_singular_second_argument_raises():
    with pytest.raises(NotPositiveDefiniteError):
        gaussian_kl(g(0.0, 1.0), g(0.0, np.zeros((1, 1))))


def test_kl_matches_monte_carlo(rng):
    p, q = random_gaussian(rng, 3), random_gaussian(rng, 3)
    closed = gaussian_kl(p, q).value
    est, se = mc_kl(p, q, 100_000, rng)
    assert abs(est - closed) <= 3.0 * se


def test_mc_kl_self_is_zero_within_error(rng):
    p = random_gaussian(rng, 2)
    est, se = mc_kl(p, p, 50_000, rng)
    assert est == 0.0 and se == 0.0  # log p - log p cancels exactly


def test_mc_kl_stderr_clt_scaling(rng):
    p, q = random_gaussian(rng, 2), random_gaussian(rng, 2)
    errs = [mc_kl(p, q, n, rng)[1] for n in (1_000, 10_000, 100_000)]
    for a, b in zip(errs, errs[1:]):
        ratio = a / b
        assert math.sqrt(10.0) / 1.5 < ratio < math.sqrt(10.0) * 1.5


def test_moment_match_single_component_is_identity(rng):
    comp = random_gaussian(rng, 3)
    mm = moment_match(MixtureFDD(np.ones(1), [comp]))
    np.testing.assert_allclose(mm.mean, comp.mean, atol=1e-14)
    np.testing.assert_allclose(mm.cov, comp.cov, atol=1e-14)


def test_moment_match_two_spikes():
    mix = MixtureFDD(np.array([0.5, 0.5]), [g(-1.0, 0.01), g(1.0, 0.01)])
    mm = moment_match(mix)
    np.testing.assert_allclose(mm.mean, [0.0], atol=1e-14)
    np.testing.assert_allclose(mm.cov, [[1.01]], atol=1e-14)


def test_moment_match_against_sampling(rng):
    mix = MixtureFDD(
        np.array([0.3, 0.7]),
        [random_gaussian(rng, 2), random_gaussian(rng, 2)],
    )
    mm = moment_match(mix)
    draws = mix.sample(rng, 1_000_000)
    emp_mean = draws.mean(axis=0)
    emp_cov = np.cov(draws.T)
    scale = max(1.0, np.abs(mm.cov).max())
    assert np.abs(emp_mean - mm.mean).max() < 0.01 * scale
    assert np.abs(emp_cov - mm.cov).max() < 0.01 * scale


def test_divergence_zero_at_moment_match(rng):
    mix = MixtureFDD(np.array([0.4, 0.6]), [random_gaussian(rng, 2), random_gaussian(rng, 2)])
    assert abs(gaussian_divergence(mix, moment_match(mix))) <= 1e-10


def test_divergence_of_gaussian_equals_kl(rng):
    comp = random_gaussian(rng, 2)
    nu = random_gaussian(rng, 2)
    mix = MixtureFDD(np.ones(1), [comp])
    np.testing.assert_allclose(
        gaussian_divergence(mix, nu), gaussian_kl(comp, nu).value, rtol=1e-12
    )


def test_divergence_identity_against_monte_carlo(rng):
    # G(mu, nu) and KL(mu, nu) - KL(mu, N(mu)) must agree for mixtures
    mix = MixtureFDD(
        np.array([0.5, 0.5]), [random_gaussian(rng, 2), random_gaussian(rng, 2)]
    )
    nu = random_gaussian(rng, 2)
    lhs = gaussian_divergence(mix, nu)
    kl_nu, se1 = mc_kl(mix, nu, 200_000, rng)
    kl_mm, se2 = mc_kl(mix, moment_match(mix), 200_000, rng)
    combined = math.hypot(se1, se2)
    assert abs(lhs - (kl_nu - kl_mm)) <= 3.0 * combined


def test_mixture_logpdf_matches_direct_sum(rng):
    comps = [random_gaussian(rng, 2) for _ in range(3)]
    w = np.array([0.2, 0.3, 0.5])
    mix = MixtureFDD(w, comps)
    y = rng.standard_normal(2)
    direct = math.log(sum(wi * math.exp(c.logpdf(y)) for wi, c in zip(w, comps)))
    np.testing.assert_allclose(mix.logpdf(y), direct, rtol=1e-10)


def test_mixture_weights_must_sum_to_one(rng):
    with pytest.raises(ValueError):
        MixtureFDD(np.array([0.5, 0.4]), [random_gaussian(rng, 1), random_gaussian(rng, 1)])


def test_bound_worked_values():
    assert kl_upper_bound(2, 1.0, 1.0) == 16.0
    assert kl_upper_bound(2, 0.5, 1.0) == 16.0  # M clamps at 1
    assert kl_upper_bound(3, 1.0, 1.0) > kl_upper_bound(2, 1.0, 1.0)


def test_bound_rejects_bad_arguments():
    with pytest.raises(ValueError):
        kl_upper_bound(1, 1.0, 1.0)
    with pytest.raises(ValueError):
        kl_upper_bound(2, -1.0, 1.0)
    with pytest.raises(ValueError):
        kl_upper_bound(2, 1.0, 0.0)


def _eq_truth_setup(rng, noise_var):
    spec = default_kernel("eq")

    def dataset_sampler(r):
        n = int(r.integers(1, 6))
        x = r.uniform(-2, 2, n)
        y = r.standard_normal(n)
        return Dataset(x, y)

    def index_sampler(r, n):
        return r.uniform(-2, 2, n)

    def truth(dataset, x):
        return gp_posterior(spec, dataset, x, noise_var)

    return truth, dataset_sampler, index_sampler


def test_averaged_kl_of_truth_with_itself_is_zero(rng):
    noise_var = 0.05**2
    truth, ds, ix = _eq_truth_setup(rng, noise_var)
    est, se = averaged_kl(truth, truth, ix, ds, 20, 3, noise_var, rng)
    # closed-form KL of identical Gaussians keeps ~1e-17 of log/trace
    # rounding, unlike mc_kl where log p - log q cancels pointwise
    assert abs(est) <= 1e-12 and se <= 1e-12


def test_averaged_kl_detects_doubled_variance(rng):
    noise_var = 0.05**2
    truth, ds, ix = _eq_truth_setup(rng, noise_var)

    def doubled(dataset, x):
        fdd = truth(dataset, x)
        return GaussianFDD(fdd.x, fdd.mean, 2.0 * fdd.cov)

    est, se = averaged_kl(truth, doubled, ix, ds, 40, 3, noise_var, rng)
    assert est > 0.0 and np.isfinite(est) and se > 0.0


def test_averaged_kl_terms_respect_the_bound(rng):
    noise_var = 0.05**2
    truth, ds, ix = _eq_truth_setup(rng, noise_var)

    def off(dataset, x):
        fdd = truth(dataset, x)
        return GaussianFDD(fdd.x, fdd.mean + 0.1, 1.5 * fdd.cov)

    est, se, terms = averaged_kl(
        truth, off, ix, ds, 50, 3, noise_var, rng, return_terms=True
    )
    # means bounded by ~1 + shift, covariance entries by ~1.5 + noise; M=3 is safe
    bound = kl_upper_bound(3, 3.0, noise_var)
    assert len(terms) == 50
    assert max(terms) <= bound
