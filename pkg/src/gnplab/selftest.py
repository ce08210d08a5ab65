"""Self-contained property suite emitting a machine-readable report.

Each property draws its own seeded cases, measures one scalar, and compares
it against a fixed threshold.  The divergence properties accept an
injectable KL implementation so the harness itself can be tested: swapping
in a deliberately broken KL must fail exactly the properties that depend on
it and nothing else.
"""

from __future__ import annotations

import numpy as np

from . import __version__
from .divergences import (
    MixtureFDD,
    gaussian_kl,
    kl_upper_bound,
    mc_kl,
    moment_match,
)
from .gp import Dataset, GaussianFDD
from .models import GNPArchitecture, GNPModel, build_grid1d
from .tensor import backward, zero_grads
from .training import ModelPredictor, nll_loss
from .tasks import GeneratorSpec, SizeSpec, SplitSpec, sample_episode

REPORT_VERSION = 1


def _random_gaussian(rng, dim, mean_scale=1.0, cov_scale=1.0) -> GaussianFDD:
    mean = mean_scale * rng.normal(size=dim)
    a = rng.normal(size=(dim, dim))
    cov = cov_scale * (a @ a.T + 0.1 * np.eye(dim))
    return GaussianFDD(None, mean, cov)


def _random_mixture(rng, dim, n_comp=3) -> MixtureFDD:
    w = rng.uniform(0.5, 1.5, n_comp)
    w /= w.sum()
    comps = [_random_gaussian(rng, dim) for _ in range(n_comp)]
    return MixtureFDD(w, comps)


def _prop(name, group, uses_kl, passed, value, threshold, detail):
    return {
        "name": name,
        "group": group,
        "uses_kl": bool(uses_kl),
        "passed": bool(passed),
        "value": float(value),
        "threshold": float(threshold),
        "detail": detail,
    }


# ---------------------------------------------------------------------------
# Divergence properties


def _kl_nonnegative(kl_fn, rng, n_cases):
    worst = np.inf
    for _ in range(n_cases):
        dim = int(rng.integers(1, 6))
        p = _random_gaussian(rng, dim)
        q = _random_gaussian(rng, dim)
        worst = min(worst, kl_fn(p, q).value)
    return _prop(
        "kl_nonnegative", "divergence", True, worst >= -1e-10, worst, -1e-10,
        f"min KL over {n_cases} random Gaussian pairs (dims 1-5)",
    )


def _kl_self_zero(kl_fn, rng, n_cases):
    worst = 0.0
    for _ in range(n_cases):
        p = _random_gaussian(rng, int(rng.integers(1, 6)))
        worst = max(worst, abs(kl_fn(p, p).value))
    return _prop(
        "kl_self_zero", "divergence", True, worst <= 1e-9, worst, 1e-9,
        f"max |KL(p, p)| over {n_cases} cases",
    )


def _kl_projection_monotone(kl_fn, rng, n_cases):
    worst = -np.inf
    for _ in range(n_cases):
        dim = int(rng.integers(2, 6))
        p = _random_gaussian(rng, dim)
        q = _random_gaussian(rng, dim)
        keep = np.sort(rng.choice(dim, size=int(rng.integers(1, dim)), replace=False))
        p_s = GaussianFDD(None, p.mean[keep], p.cov[np.ix_(keep, keep)])
        q_s = GaussianFDD(None, q.mean[keep], q.cov[np.ix_(keep, keep)])
        excess = kl_fn(p_s, q_s).value - kl_fn(p, q).value
        worst = max(worst, excess)
    return _prop(
        "kl_projection_monotone", "divergence", True, worst <= 1e-10, worst, 1e-10,
        f"max (projected KL - full KL) over {n_cases} random coordinate subsets",
    )


def _kl_matches_monte_carlo(kl_fn, rng, n_pairs, n_samples):
    worst = 0.0
    for _ in range(n_pairs):
        dim = int(rng.integers(1, 6))
        p = _random_gaussian(rng, dim)
        q = _random_gaussian(rng, dim)
        closed = kl_fn(p, q).value
        est, se = mc_kl(p, q, n_samples, rng)
        gap = abs(closed - est) / max(se, 1e-12)
        worst = max(worst, gap)
    return _prop(
        "kl_matches_monte_carlo", "divergence", True, worst <= 3.0, worst, 3.0,
        f"max |closed - MC| in standard errors over {n_pairs} pairs, "
        f"{n_samples} samples each",
    )


def _moment_match_optimal(kl_fn, rng, n_cases):
    mu = _random_mixture(rng, 2)
    matched = moment_match(mu)
    worst = np.inf
    for _ in range(n_cases):
        nu = GaussianFDD(
            None,
            matched.mean + rng.normal(scale=0.3, size=2),
            matched.cov + np.diag(rng.uniform(0.05, 0.5, 2)),
        )
        worst = min(worst, kl_fn(matched, nu).value)
    return _prop(
        "moment_match_optimal", "divergence", True, worst > 0.0, worst, 0.0,
        f"min Gaussian divergence over {n_cases} perturbations of the moment match",
    )


def _mixture_identity(kl_fn, rng, n_cases, n_samples):
    """KL(mu, nu) - KL(mu, N(mu)) equals the closed-form Gaussian divergence."""
    worst = 0.0
    for _ in range(n_cases):
        mu = _random_mixture(rng, 2)
        matched = moment_match(mu)
        nu = _random_gaussian(rng, 2)
        closed = kl_fn(matched, nu).value
        est_nu, se_nu = mc_kl(mu, nu, n_samples, rng)
        est_mm, se_mm = mc_kl(mu, matched, n_samples, rng)
        combined = np.hypot(se_nu, se_mm)
        gap = abs(closed - (est_nu - est_mm)) / max(combined, 1e-12)
        worst = max(worst, gap)
    return _prop(
        "mixture_identity", "divergence", True, worst <= 3.0, worst, 3.0,
        f"max identity violation in combined standard errors over {n_cases} mixtures",
    )


def _bound_holds(kl_fn, rng, n_cases):
    worst = -np.inf
    for _ in range(n_cases):
        n = int(rng.integers(2, 6))
        noise = rng.uniform(0.01, 0.5)
        fdds = []
        for _ in range(2):
            mean = rng.uniform(-1.0, 1.0, n)
            a = rng.normal(size=(n, n)) / np.sqrt(n)
            fdds.append(GaussianFDD(None, mean, a @ a.T + noise * np.eye(n)))
        p, q = fdds
        bound_m = max(
            np.abs(p.mean).max(), np.abs(q.mean).max(),
            np.abs(p.cov).max(), np.abs(q.cov).max(),
        )
        margin = kl_fn(p, q).value - kl_upper_bound(n, bound_m, noise)
        worst = max(worst, margin)
    return _prop(
        "bound_holds", "divergence", True, worst <= 0.0, worst, 0.0,
        f"max (KL - bound) over {n_cases} bounded noisy Gaussian pairs",
    )


def _grid_argmin(rng, n_samples):
    """Fitting a 2-parameter Gaussian family by average log-score recovers
    the moment-matched parameters within one grid cell."""
    mu = _random_mixture(rng, 2)
    matched = moment_match(mu)
    draws = mu.sample(rng, n_samples)
    shifts = np.linspace(-0.5, 0.5, 21)
    scales = np.linspace(0.5, 1.5, 21)
    cell = shifts[1] - shifts[0]
    best, best_score = None, np.inf
    for ds in shifts:
        for sc in scales:
            cand = GaussianFDD(None, matched.mean + ds, sc * matched.cov)
            score = -np.mean(cand.logpdf(draws))
            if score < best_score:
                best, best_score = (ds, sc), score
    dev = max(abs(best[0] - 0.0), abs(best[1] - 1.0))
    return _prop(
        "grid_argmin", "divergence", False, dev <= cell + 1e-12, dev, cell,
        f"distance of the grid argmin from the moment match ({n_samples} samples)",
    )


# ---------------------------------------------------------------------------
# Model properties


def _tiny_gen():
    return GeneratorSpec("eq")


def _random_context(rng, lo, hi, n):
    return Dataset(rng.uniform(lo, hi, n), rng.normal(size=n))


def _model_psd(rng, n_cases):
    worst = -np.inf
    arch = GNPArchitecture()
    for i in range(n_cases):
        model = GNPModel.create(arch, np.random.default_rng(rng.integers(2**32)))
        ctx = _random_context(rng, 0.0, 1.0, int(rng.integers(0, 8)))
        targets = rng.uniform(0.0, 1.0, 6)
        fdd = model.predict(ctx, targets)
        eigs = np.linalg.eigvalsh(fdd.cov)
        rel = -eigs.min() / max(np.trace(fdd.cov), 1e-300)
        worst = max(worst, rel)
    return _prop(
        "model_psd", "model", False, worst <= 1e-10, worst, 1e-10,
        f"max relative negative eigenvalue over {n_cases} random models/contexts",
    )


def _model_permutation(rng, n_cases):
    worst = 0.0
    arch = GNPArchitecture()
    for _ in range(n_cases):
        model = GNPModel.create(arch, np.random.default_rng(rng.integers(2**32)))
        n = int(rng.integers(2, 8))
        ctx = _random_context(rng, 0.0, 1.0, n)
        targets = rng.uniform(0.0, 1.0, 4)
        perm = rng.permutation(n)
        shuffled = Dataset(ctx.x[perm], ctx.y[perm])
        a = model.predict(ctx, targets)
        b = model.predict(shuffled, targets)
        dev = max(np.abs(a.mean - b.mean).max(), np.abs(a.cov - b.cov).max())
        worst = max(worst, dev)
    return _prop(
        "model_permutation", "model", False, worst == 0.0, worst, 0.0,
        f"max output change under context reordering over {n_cases} cases (bitwise)",
    )


def _model_translation(rng, span=4.0):
    arch = GNPArchitecture()
    model = GNPModel.create(arch, np.random.default_rng(rng.integers(2**32)))
    grid = build_grid1d(np.array([-span, span]), arch.points_per_unit, arch.margin)
    shift = 10 * grid.spacing
    ctx = _random_context(rng, -1.5, 1.0, 5)
    targets = rng.uniform(-1.5, 1.0, 6)
    a = model.predict(ctx, targets, grid=grid)
    b = model.predict(Dataset(ctx.x + shift, ctx.y), targets + shift, grid=grid)
    dev = max(np.abs(a.mean - b.mean).max(), np.abs(a.cov - b.cov).max())
    return _prop(
        "model_translation", "model", False, dev < 1e-6, dev, 1e-6,
        f"max output change under an on-grid shift of {shift:.3f} on a fixed grid",
    )


def _model_source_channel(rng):
    seed = rng.integers(2**32)
    base = GNPModel.create(GNPArchitecture(), np.random.default_rng(seed))
    blank = GNPModel(GNPArchitecture(source_mode="zero"), base.params)
    targets = np.linspace(-0.5, 0.5, 4)
    empty = Dataset(np.empty(0), np.empty(0))
    a = base.predict(empty, targets)
    b = blank.predict(empty, targets)
    dev = np.abs(a.cov - b.cov).max()
    return _prop(
        "model_source_channel", "model", False, dev > 1e-6, dev, 1e-6,
        "empty-context prior must change when the identity source channel is blanked",
    )


def _model_gradient_flow(rng):
    model = GNPModel.create(GNPArchitecture(), np.random.default_rng(rng.integers(2**32)))
    ep = sample_episode(
        _tiny_gen(), SplitSpec("interp_in_range"), SizeSpec(3, 6, 8),
        np.random.default_rng(rng.integers(2**32)),
    )
    zero_grads(model.params)
    loss = nll_loss(ModelPredictor(model), [ep])
    backward(loss)
    dead = [
        name
        for name, p in model.params.items()
        if p.grad is None or np.abs(p.grad).max() == 0.0
    ]
    return _prop(
        "model_gradient_flow", "model", False, not dead, float(len(dead)), 0.0,
        f"parameters with zero gradient: {dead if dead else 'none'}",
    )


# ---------------------------------------------------------------------------


def run_selftest(seed: int = 0, kl_fn=None, quick: bool = False) -> dict:
    """Run every property and return the report dict.

    ``kl_fn`` overrides the closed-form KL used by the divergence
    properties (test-harness hook).  ``quick`` shrinks case counts for use
    inside fast test suites.
    """
    kl = kl_fn if kl_fn is not None else gaussian_kl
    rng = np.random.default_rng(seed)
    k = 0.1 if quick else 1.0
    n = lambda base: max(2, int(base * k))
    props = [
        _kl_nonnegative(kl, rng, n(200)),
        _kl_self_zero(kl, rng, n(50)),
        _kl_projection_monotone(kl, rng, n(50)),
        _kl_matches_monte_carlo(kl, rng, n(10), 20000 if not quick else 4000),
        _moment_match_optimal(kl, rng, n(50)),
        _mixture_identity(kl, rng, n(5), 20000 if not quick else 4000),
        _bound_holds(kl, rng, n(100)),
        _grid_argmin(rng, 40000 if not quick else 8000),
        _model_psd(rng, n(100)),
        _model_permutation(rng, n(20)),
        _model_translation(rng, span=4.0),
        _model_source_channel(rng),
        _model_gradient_flow(rng),
    ]
    return {
        "report_version": REPORT_VERSION,
        "code_version": __version__,
        "seed": int(seed),
        "all_passed": all(p["passed"] for p in props),
        "properties": props,
    }


def validate_selftest_report(report: dict):
    """Raise ValueError unless the report matches the expected schema."""
    if not isinstance(report, dict):
        raise ValueError("report must be an object")
    required = {
        "report_version": int,
        "code_version": str,
        "seed": int,
        "all_passed": bool,
        "properties": list,
    }
    for key, kind in required.items():
        if key not in report:
            raise ValueError(f"report missing key {key!r}")
        if not isinstance(report[key], kind):
            raise ValueError(f"report key {key!r} must be {kind.__name__}")
    if set(report) != set(required):
        raise ValueError(f"report has unexpected keys {sorted(set(report) - set(required))}")
    prop_keys = {
        "name": str,
        "group": str,
        "uses_kl": bool,
        "passed": bool,
        "value": float,
        "threshold": float,
        "detail": str,
    }
    for i, prop in enumerate(report["properties"]):
        if not isinstance(prop, dict):
            raise ValueError(f"property {i} must be an object")
        for key, kind in prop_keys.items():
            if key not in prop:
                raise ValueError(f"property {i} missing key {key!r}")
            if not isinstance(prop[key], kind):
                raise ValueError(f"property {i} key {key!r} must be {kind.__name__}")
        if set(prop) != set(prop_keys):
            raise ValueError(
                f"property {i} has unexpected keys {sorted(set(prop) - set(prop_keys))}"
            )
