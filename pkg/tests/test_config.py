"""Config validation, defaults, and the stable hash."""

import copy
import json

import pytest

from gnplab.config import (
    ConfigError,
    canonical_json,
    hash_config,
    load_config,
    normalize_config,
)


def minimal():
    return {"generator": {"kind": "eq"}}


def test_defaults_fill_in():
    cfg = normalize_config(minimal())
    assert cfg["seed"] == 0
    assert cfg["split"]["kind"] == "interp_in_range"
    assert cfg["sizes"] == {"context_low": 0, "context_high": 10, "n_target": 16}
    assert cfg["model"]["kind"] == "gnp"
    assert cfg["model"]["points_per_unit"] == 20.0
    assert cfg["training"]["batch_size"] == 16
    assert cfg["training"]["learning_rate"] == 3e-4
    assert cfg["training"]["episodes_per_epoch"] == 256
    assert cfg["evaluation"]["n_tasks"] == 512


def test_normalize_is_idempotent_and_pure():
    raw = minimal()
    snapshot = copy.deepcopy(raw)
    cfg = normalize_config(raw)
    assert raw == snapshot
    assert normalize_config(cfg) == cfg


def test_unknown_keys_fail_with_path():
    bad = minimal()
    bad["training"] = {"learning_rat": 1e-3}
    with pytest.raises(ConfigError, match=r"config\.training.*learning_rat"):
        normalize_config(bad)
    with pytest.raises(ConfigError, match=r"config.*extra_section"):
        normalize_config({**minimal(), "extra_section": {}})


def test_missing_generator_section():
    with pytest.raises(ConfigError, match=r"config\.generator"):
        normalize_config({"seed": 1})


@pytest.mark.parametrize(
    "patch, path_re",
    [
        ({"seed": -1}, r"config\.seed"),
        ({"seed": 1.5}, r"config\.seed"),
        ({"training": {"learning_rate": 0.0}}, r"learning_rate"),
        ({"training": {"beta1": 1.0}}, r"beta1"),
        ({"training": {"epochs": -1}}, r"epochs"),
        ({"training": {"val_tasks": 1}}, r"val_tasks"),
        ({"evaluation": {"n_tasks": 1}}, r"n_tasks"),
        ({"model": {"kind": "transformer"}}, r"config\.model\.kind"),
        ({"model": {"kind": "gnp", "mean_kernel_size": 4}}, r"config\.model"),
        ({"generator": {"kind": "eq", "noise_std": -0.1}}, r"config\.generator"),
        ({"split": {"kind": "nowhere"}}, r"config\.split"),
    ],
)
def test_bad_values_are_rejected(patch, path_re):
    bad = {**minimal(), **patch}
    with pytest.raises(ConfigError, match=path_re):
        normalize_config(bad)


def test_convcnp_model_section():
    cfg = normalize_config({**minimal(), "model": {"kind": "convcnp"}})
    assert cfg["model"]["kind"] == "convcnp"
    assert "variance_floor" in cfg["model"]
    assert "cov_channels" not in cfg["model"]


def test_hash_ignores_key_order_but_not_values():
    a = normalize_config(minimal())
    b = json.loads(canonical_json(a))
    shuffled = dict(reversed(list(b.items())))
    assert hash_config(a) == hash_config(shuffled)
    changed = copy.deepcopy(a)
    changed["seed"] = 1
    assert hash_config(changed) != hash_config(a)
    assert len(hash_config(a)) == 64
    assert set(hash_config(a)) <= set("0123456789abcdef")


def test_load_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(minimal()))
    assert load_config(path) == normalize_config(minimal())
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(path)
