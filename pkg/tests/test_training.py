"""Training loop, evaluation protocol, and seed bookkeeping."""

import json

import numpy as np
import pytest

from gnplab.config import normalize_config
from gnplab.gp import gaussian_logpdf
from gnplab.models import load_checkpoint
from gnplab.tasks import GeneratorSpec, SizeSpec, SplitSpec, oracle_predict, sample_episode
from gnplab.training import (
    EpochStats,
    ModelPredictor,
    OraclePredictor,
    TrainHistory,
    TrainingDiverged,
    build_model,
    episode_rng,
    evaluate,
    nll_loss,
    task_rng,
    train,
    validation_seed,
)

TINY_MODEL = {
    "kind": "gnp",
    "points_per_unit": 2.0,
    "mean_channels": 3,
    "mean_layers": 2,
    "mean_kernel_size": 3,
    "cov_channels": 2,
    "cov_layers": 2,
    "cov_kernel_size": 3,
}


def tiny_config(**training):
    settings = {"epochs": 1, "episodes_per_epoch": 8, "batch_size": 4, "val_tasks": 2}
    settings.update(training)
    return normalize_config(
        {
            "seed": 5,
            "generator": {"kind": "eq"},
            "sizes": {"context_high": 6, "n_target": 8},
            "model": TINY_MODEL,
            "training": settings,
        }
    )


# ---------------------------------------------------------------- seeding


def test_seed_substreams_are_disjoint_and_reproducible():
    a = episode_rng(0, 0).uniform(size=4)
    b = episode_rng(0, 0).uniform(size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, episode_rng(0, 1).uniform(size=4))
    assert not np.array_equal(a, task_rng(0, 0).uniform(size=4))
    assert validation_seed(0) != validation_seed(1)
    assert validation_seed(3) == validation_seed(3)


# ---------------------------------------------------------------- predictors


def test_oracle_predictor_nll_matches_logpdf(rng):
    gen = GeneratorSpec("eq")
    ep = sample_episode(gen, SplitSpec("interp_in_range"), SizeSpec(4, 4, 8), rng)
    pred = OraclePredictor(gen, "full")
    loss = nll_loss(pred, [ep]).item()
    fdd = oracle_predict(gen, ep.context, ep.target.x, "full")
    assert loss == pytest.approx(-gaussian_logpdf(ep.target.y, fdd), rel=1e-12)


def test_nll_loss_averages_over_episodes(rng):
    gen = GeneratorSpec("eq")
    eps = [
        sample_episode(gen, SplitSpec("interp_in_range"), SizeSpec(4, 4, 8), rng)
        for _ in range(3)
    ]
    pred = OraclePredictor(gen, "full")
    singles = [nll_loss(pred, [ep]).item() for ep in eps]
    assert nll_loss(pred, eps).item() == pytest.approx(np.mean(singles), rel=1e-12)
    with pytest.raises(ValueError, match="at least one"):
        nll_loss(pred, [])


def test_oracle_predictor_rejects_bad_mode():
    with pytest.raises(ValueError, match="mode"):
        OraclePredictor(GeneratorSpec("eq"), "median")


# ---------------------------------------------------------------- evaluate


def test_evaluate_matches_manual_replay():
    gen = GeneratorSpec("eq")
    split = SplitSpec("interp_in_range")
    sizes = SizeSpec(3, 6, 8)
    pred = OraclePredictor(gen, "full")
    res = evaluate(pred, gen, split, 2, seed=11, sizes=sizes)
    scores = []
    for j in range(2):
        ep = sample_episode(gen, split, sizes, task_rng(11, j))
        fdd = oracle_predict(gen, ep.context, ep.target.x, "full")
        scores.append(gaussian_logpdf(ep.target.y, fdd) / len(ep.target))
    assert res.mean == pytest.approx(np.mean(scores), rel=1e-12)
    assert res.n_tasks == 2 and res.seed == 11


def test_evaluate_is_exactly_reproducible():
    gen = GeneratorSpec("eq")
    pred = OraclePredictor(gen, "diag")
    a = evaluate(pred, gen, SplitSpec("interp_in_range"), 8, seed=3)
    b = evaluate(pred, gen, SplitSpec("interp_in_range"), 8, seed=3)
    assert a.mean == b.mean and a.ci95 == b.ci95


def test_evaluate_full_oracle_beats_diag_on_shared_tasks():
    gen = GeneratorSpec("eq")
    split = SplitSpec("interp_in_range")
    full = evaluate(OraclePredictor(gen, "full"), gen, split, 32, seed=7)
    diag = evaluate(OraclePredictor(gen, "diag"), gen, split, 32, seed=7)
    assert full.mean > diag.mean


def test_evaluate_ci_shrinks_with_more_tasks():
    gen = GeneratorSpec("eq")
    pred = OraclePredictor(gen, "diag")
    small = evaluate(pred, gen, SplitSpec("interp_in_range"), 16, seed=1)
    large = evaluate(pred, gen, SplitSpec("interp_in_range"), 128, seed=1)
    assert large.ci95 < small.ci95


def test_evaluate_returns_none_without_an_oracle():
    gen = GeneratorSpec("sawtooth")
    pred = OraclePredictor(gen, "full")
    assert evaluate(pred, gen, SplitSpec("interp_in_range"), 4, seed=0) is None


def test_evaluate_needs_two_tasks():
    gen = GeneratorSpec("eq")
    with pytest.raises(ValueError, match="two tasks"):
        evaluate(OraclePredictor(gen, "full"), gen, SplitSpec("interp_in_range"), 1, seed=0)


# ---------------------------------------------------------------- train loop


def test_train_is_deterministic():
    cfg = tiny_config()
    a = build_model(cfg, np.random.default_rng(0))
    b = build_model(cfg, np.random.default_rng(0))
    train(cfg, a)
    train(cfg, b)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name].data, b.params[name].data)


def test_train_updates_parameters_and_logs_history():
    cfg = tiny_config(epochs=2)
    model = build_model(cfg, np.random.default_rng(0))
    before = {name: p.data.copy() for name, p in model.params.items()}
    model, history = train(cfg, model)
    assert len(history.rows) == 2
    assert [r.epoch for r in history.rows] == [1, 2]
    moved = [name for name in before if not np.array_equal(before[name], model.params[name].data)]
    assert moved
    for r in history.rows:
        assert np.isfinite(r.train_nll) and np.isfinite(r.val_loglik) and r.seconds >= 0.0


def test_train_smoke_reduces_loss():
    cfg = tiny_config(epochs=4, episodes_per_epoch=16, batch_size=4)
    model = build_model(cfg, np.random.default_rng(0))
    _, history = train(cfg, model)
    assert history.rows[-1].train_nll < history.rows[0].train_nll


def test_train_writes_artifacts(tmp_path):
    cfg = tiny_config(epochs=3, checkpoint_every=2)
    model = build_model(cfg, np.random.default_rng(0))
    out = tmp_path / "run"
    train(cfg, model, out_dir=out)
    ckpt, blob = load_checkpoint(out / "checkpoint.json")
    assert blob["extra"]["epochs_completed"] == 3
    assert blob["config_hash"]
    for name in model.params:
        np.testing.assert_array_equal(ckpt.params[name].data, model.params[name].data)
    history = TrainHistory.from_csv(out / "history.csv")
    assert [r.epoch for r in history.rows] == [1, 2, 3]
    text = (out / "history.csv").read_text()
    assert text.startswith("# config_hash=")
    assert "# seed_scheme=spawn-v1" in text


def test_train_zero_epochs_still_flushes(tmp_path):
    cfg = tiny_config(epochs=0)
    model = build_model(cfg, np.random.default_rng(0))
    out = tmp_path / "run"
    before = {name: p.data.copy() for name, p in model.params.items()}
    train(cfg, model, out_dir=out)
    for name in before:
        np.testing.assert_array_equal(before[name], model.params[name].data)
    _, blob = load_checkpoint(out / "checkpoint.json")
    assert blob["extra"]["epochs_completed"] == 0
    assert TrainHistory.from_csv(out / "history.csv").rows == []


@pytest.mark.filterwarnings("ignore:invalid value")
def test_train_raises_on_nonfinite_loss():
    cfg = tiny_config()
    model = build_model(cfg, np.random.default_rng(0))
    model.params["raw_noise_var"].data = np.array(np.nan)
    with pytest.raises(TrainingDiverged, match="epoch 1"):
        train(cfg, model)


def test_build_model_kinds():
    cfg = tiny_config()
    assert build_model(cfg, np.random.default_rng(0)).kind == "gnp"
    convcfg = normalize_config(
        {"generator": {"kind": "eq"}, "model": {"kind": "convcnp"}}
    )
    assert build_model(convcfg, np.random.default_rng(0)).kind == "convcnp"


def test_model_predictor_wraps_the_model():
    cfg = tiny_config()
    model = build_model(cfg, np.random.default_rng(0))
    pred = ModelPredictor(model)
    assert pred.name == "gnp"
    assert pred.available_for(GeneratorSpec("sawtooth"))


# ---------------------------------------------------------------- history csv


def test_history_roundtrip(tmp_path):
    history = TrainHistory(
        [EpochStats(1, 12.5, -1.25, 0.5), EpochStats(2, 10.0, -1.0, 0.498)]
    )
    path = tmp_path / "history.csv"
    history.to_csv(path, meta={"config_hash": "abc"})
    back = TrainHistory.from_csv(path)
    assert back.rows == history.rows
