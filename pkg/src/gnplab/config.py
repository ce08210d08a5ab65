"""Experiment configuration: validation, defaults, and stable hashing.

A config document has seven sections (seed, generator, split, sizes, model,
training, evaluation).  ``normalize_config`` checks every key against the
schema, fills defaults, and returns the canonical form; unknown keys are
rejected with path-qualified diagnostics rather than ignored, so typos fail
loudly.  ``hash_config`` digests the canonical JSON, and artifacts carry
that hash so results can always be traced to the exact configuration.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json


class ConfigError(ValueError):
    """A config document failed validation; the message lists the paths."""


SECTIONS = ("seed", "generator", "split", "sizes", "model", "training", "evaluation")

TRAINING_DEFAULTS = {
    "epochs": 10,
    "episodes_per_epoch": 256,
    "batch_size": 16,
    "learning_rate": 3e-4,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "val_tasks": 64,
    "checkpoint_every": 1,
}

EVALUATION_DEFAULTS = {"n_tasks": 512}


def _require_mapping(value, path):
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected an object, got {type(value).__name__}")
    return value


def _check_keys(d, allowed, path):
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(
            f"{path}: unknown keys {unknown}; allowed keys are {sorted(allowed)}"
        )


def _dataclass_section(d, path, from_dict, to_dict, field_names):
    _require_mapping(d, path)
    _check_keys(d, field_names, path)
    try:
        obj = from_dict(d)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return to_dict(obj)


def _int_in(d, key, path, default, minimum=None):
    value = d.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}, got {value}")
    return value


def _float_in(d, key, path, default, positive=False):
    value = d.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
    value = float(value)
    if positive and not value > 0.0:
        raise ConfigError(f"{path}.{key}: must be positive, got {value}")
    return value


def normalize_config(raw: dict) -> dict:
    """Validate a raw config dict and return the canonical, defaults-applied
    form.  The input is not modified.

    Raises:
        ConfigError: any unknown key, missing required key, or bad value.
    """
    from .models import ConvCNPArchitecture, GNPArchitecture
    from .tasks import GeneratorSpec, SizeSpec, SplitSpec

    _require_mapping(raw, "config")
    _check_keys(raw, SECTIONS, "config")

    out = {}
    out["seed"] = _int_in(raw, "seed", "config", 0, minimum=0)

    if "generator" not in raw:
        raise ConfigError("config.generator: required section is missing")
    gen_fields = [f.name for f in dataclasses.fields(GeneratorSpec)]
    out["generator"] = _dataclass_section(
        raw["generator"],
        "config.generator",
        GeneratorSpec.from_dict,
        lambda g: g.to_dict(),
        gen_fields,
    )

    split_raw = raw.get("split", {"kind": "interp_in_range"})
    split_fields = [f.name for f in dataclasses.fields(SplitSpec)]
    out["split"] = _dataclass_section(
        split_raw, "config.split", SplitSpec.from_dict, lambda s: s.to_dict(), split_fields
    )

    sizes_raw = raw.get("sizes", {})
    sizes_fields = [f.name for f in dataclasses.fields(SizeSpec)]
    out["sizes"] = _dataclass_section(
        sizes_raw,
        "config.sizes",
        lambda d: SizeSpec(**d),
        dataclasses.asdict,
        sizes_fields,
    )

    model_raw = _require_mapping(raw.get("model", {"kind": "gnp"}), "config.model")
    kind = model_raw.get("kind", "gnp")
    if kind not in ("gnp", "convcnp"):
        raise ConfigError(f"config.model.kind: expected 'gnp' or 'convcnp', got {kind!r}")
    arch_cls = GNPArchitecture if kind == "gnp" else ConvCNPArchitecture
    arch_fields = [f.name for f in dataclasses.fields(arch_cls)]
    body = {k: v for k, v in model_raw.items() if k != "kind"}
    _check_keys(body, arch_fields, "config.model")
    try:
        arch = arch_cls(**body)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"config.model: {exc}") from exc
    out["model"] = {"kind": kind, **dataclasses.asdict(arch)}

    training_raw = _require_mapping(raw.get("training", {}), "config.training")
    _check_keys(training_raw, TRAINING_DEFAULTS, "config.training")
    t = {}
    t["epochs"] = _int_in(training_raw, "epochs", "config.training", TRAINING_DEFAULTS["epochs"], 0)
    t["episodes_per_epoch"] = _int_in(
        training_raw, "episodes_per_epoch", "config.training",
        TRAINING_DEFAULTS["episodes_per_epoch"], 1,
    )
    t["batch_size"] = _int_in(
        training_raw, "batch_size", "config.training", TRAINING_DEFAULTS["batch_size"], 1
    )
    t["learning_rate"] = _float_in(
        training_raw, "learning_rate", "config.training",
        TRAINING_DEFAULTS["learning_rate"], positive=True,
    )
    t["beta1"] = _float_in(training_raw, "beta1", "config.training", TRAINING_DEFAULTS["beta1"])
    t["beta2"] = _float_in(training_raw, "beta2", "config.training", TRAINING_DEFAULTS["beta2"])
    t["eps"] = _float_in(
        training_raw, "eps", "config.training", TRAINING_DEFAULTS["eps"], positive=True
    )
    t["val_tasks"] = _int_in(
        training_raw, "val_tasks", "config.training", TRAINING_DEFAULTS["val_tasks"], 2
    )
    t["checkpoint_every"] = _int_in(
        training_raw, "checkpoint_every", "config.training",
        TRAINING_DEFAULTS["checkpoint_every"], 1,
    )
    for beta in ("beta1", "beta2"):
        if not 0.0 <= t[beta] < 1.0:
            raise ConfigError(f"config.training.{beta}: must lie in [0, 1), got {t[beta]}")
    out["training"] = t

    eval_raw = _require_mapping(raw.get("evaluation", {}), "config.evaluation")
    _check_keys(eval_raw, EVALUATION_DEFAULTS, "config.evaluation")
    out["evaluation"] = {
        "n_tasks": _int_in(eval_raw, "n_tasks", "config.evaluation",
                           EVALUATION_DEFAULTS["n_tasks"], 2)
    }
    return out


def canonical_json(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def hash_config(config: dict) -> str:
    """Stable hex digest of the canonicalized config JSON."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def load_config(path) -> dict:
    """Read and normalize a JSON config file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return normalize_config(raw)
