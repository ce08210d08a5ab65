"""Command-line interface: train, eval, kernel-dump, selftest.

Artifacts are plain CSV/JSON under an output directory (flag ``--out-dir``,
else the ``GNPLAB_OUT_DIR`` environment variable, else ``./runs``).  Every
artifact embeds the config hash, seed and code version, and rerunning a
command with identical inputs reproduces its outputs byte for byte -- with
the one exception of wall-clock ``seconds`` in training histories.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, hash_config, load_config
from .models import load_checkpoint
from .selftest import run_selftest, validate_selftest_report
from .tasks import GENERATOR_KINDS, GP_KINDS, GeneratorSpec, SizeSpec, SplitSpec
from .kernels import kernel_eval
from .training import (
    ModelPredictor,
    OraclePredictor,
    TrainingDiverged,
    build_model,
    evaluate,
    train,
)

SPLIT_CHOICES = ("interp_in_range", "interp_beyond_range", "extrapolation")
PREDICTOR_CHOICES = ("model", "oracle-full", "oracle-diag")


def default_out_dir() -> str:
    return os.environ.get("GNPLAB_OUT_DIR", "runs")


def _write_lines(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _meta_lines(config_hash, seed):
    return [
        f"# config_hash={config_hash}",
        f"# code_version={__version__}",
        f"# seed={seed}",
    ]


def cmd_train(args) -> int:
    config = load_config(args.config)
    cfg_hash = hash_config(config)
    out_dir = os.path.join(args.out_dir, f"run-{cfg_hash[:12]}")
    rng = np.random.default_rng(config["seed"])
    model = build_model(config, rng)
    print(f"training {config['model']['kind']} on {config['generator']['kind']} "
          f"(config {cfg_hash[:12]}, seed {config['seed']})")
    try:
        model, history = train(config, model, out_dir=out_dir)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        print(f"last good checkpoint (if any) is under {out_dir}", file=sys.stderr)
        return 1
    for row in history.rows:
        print(
            f"epoch {row.epoch}: train_nll={row.train_nll:.4f} "
            f"val_loglik={row.val_loglik:.4f} ({row.seconds:.1f}s)"
        )
    print(f"artifacts written to {out_dir}")
    return 0


def _print_and_write_results(rows, out_dir, config_hash, seed):
    header = "task,split,predictor,mean,ci95,n_tasks,seed"
    lines = _meta_lines(config_hash, seed) + [header]
    for row in rows:
        lines.append(",".join(str(c) for c in row))
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "results.csv")
    _write_lines(path, lines)
    print(header)
    for row in rows:
        print(",".join(str(c) for c in row))
    print(f"results written to {path}")


def cmd_eval(args) -> int:
    tasks = args.tasks.split(",") if args.tasks else list(GENERATOR_KINDS)
    splits = args.splits.split(",") if args.splits else list(SPLIT_CHOICES)
    for t in tasks:
        if t not in GENERATOR_KINDS:
            print(f"unknown task {t!r}; choices: {GENERATOR_KINDS}", file=sys.stderr)
            return 2
    for s in splits:
        if s not in SPLIT_CHOICES:
            print(f"unknown split {s!r}; choices: {SPLIT_CHOICES}", file=sys.stderr)
            return 2

    config = load_config(args.config) if args.config else None
    model = None
    if args.checkpoint:
        expected = hash_config(config) if config else None
        model, _ = load_checkpoint(args.checkpoint, expected_config_hash=expected)

    predictors = args.predictors.split(",") if args.predictors else None
    if predictors is None:
        predictors = ["model", "oracle-full", "oracle-diag"] if model else [
            "oracle-full", "oracle-diag"
        ]
    for p in predictors:
        if p not in PREDICTOR_CHOICES:
            print(f"unknown predictor {p!r}; choices: {PREDICTOR_CHOICES}", file=sys.stderr)
            return 2
    if "model" in predictors and model is None:
        print("predictor 'model' needs --checkpoint", file=sys.stderr)
        return 2

    n_tasks = args.n_tasks or (config["evaluation"]["n_tasks"] if config else 512)
    seed = args.seed
    noise_std = config["generator"]["noise_std"] if config else 0.05
    sizes = SizeSpec(**config["sizes"]) if config else SizeSpec()

    invocation = {
        "tasks": tasks,
        "splits": splits,
        "predictors": predictors,
        "n_tasks": n_tasks,
        "seed": seed,
        "checkpoint": os.path.basename(args.checkpoint) if args.checkpoint else None,
    }
    inv_hash = hash_config(invocation)

    rows = []
    for task in sorted(tasks):
        gen = GeneratorSpec(task, noise_std=noise_std)
        for split_kind in sorted(splits):
            split = SplitSpec(split_kind)
            for name in sorted(predictors):
                if name == "model":
                    predictor = ModelPredictor(model)
                else:
                    predictor = OraclePredictor(gen, name.split("-")[1])
                result = evaluate(predictor, gen, split, n_tasks, seed, sizes)
                if result is None:
                    rows.append((task, split_kind, name, "n/a", "n/a", n_tasks, seed))
                else:
                    rows.append(
                        (task, split_kind, name, repr(result.mean), repr(result.ci95),
                         n_tasks, seed)
                    )
    _print_and_write_results(rows, args.out_dir, inv_hash, seed)
    return 0


def _parse_lags(spec: str) -> np.ndarray:
    try:
        start, stop, step = (float(part) for part in spec.split(":"))
    except ValueError:
        raise ValueError(f"--lags expects start:stop:step, got {spec!r}")
    if step <= 0 or stop < start:
        raise ValueError(f"bad lag range {spec!r}")
    count = int(round((stop - start) / step)) + 1
    lags = start + step * np.arange(count)
    return np.round(lags, 12)


def cmd_kernel_dump(args) -> int:
    from .models import extract_prior_covariance

    model, blob = load_checkpoint(args.checkpoint)
    if model.kind != "gnp":
        print(f"checkpoint holds a {model.kind!r} model, which has no kernel map",
              file=sys.stderr)
        return 2
    try:
        lags = _parse_lags(args.lags)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    values = extract_prior_covariance(model, lags)
    gen_cfg = (blob.get("config") or {}).get("generator")
    truth = None
    if gen_cfg and gen_cfg.get("kind") in GP_KINDS:
        gen = GeneratorSpec.from_dict(gen_cfg)
        truth = kernel_eval(gen.kernel, lags, np.zeros(1))[:, 0]
    cfg_hash = blob.get("config_hash", "none")
    lines = _meta_lines(cfg_hash, blob.get("config", {}).get("seed", "n/a"))
    lines.append("lag,model_covariance,truth_covariance")
    for i, lag in enumerate(lags):
        t = repr(float(truth[i])) if truth is not None else "n/a"
        lines.append(f"{float(lag)!r},{float(values[i])!r},{t}")
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "kernel.csv")
    _write_lines(path, lines)
    print(f"dumped {len(lags)} lags to {path}")
    return 0


def cmd_selftest(args) -> int:
    report = run_selftest(seed=args.seed, quick=args.quick)
    validate_selftest_report(report)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "selftest.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    for prop in report["properties"]:
        status = "PASS" if prop["passed"] else "FAIL"
        print(f"[{status}] {prop['name']}: value={prop['value']:.3g} "
              f"threshold={prop['threshold']:.3g}")
    verdict = "all properties passed" if report["all_passed"] else "FAILURES present"
    print(f"{verdict}; report written to {path}")
    return 0 if report["all_passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnplab",
        description="Train and probe Gaussian prediction maps on synthetic tasks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("--config", required=True, help="JSON config path")
    p_train.add_argument("--out-dir", default=default_out_dir())
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="score predictors on synthetic tasks")
    p_eval.add_argument("--checkpoint", help="model checkpoint to include")
    p_eval.add_argument("--config", help="config for sizes/noise and hash checking")
    p_eval.add_argument("--tasks", help="comma list of task kinds (default: all)")
    p_eval.add_argument("--splits", help="comma list of splits (default: all)")
    p_eval.add_argument("--predictors", help="comma list from model,oracle-full,oracle-diag")
    p_eval.add_argument("--n-tasks", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out-dir", default=default_out_dir())
    p_eval.set_defaults(fn=cmd_eval)

    p_dump = sub.add_parser("kernel-dump", help="dump the implied prior covariance")
    p_dump.add_argument("--checkpoint", required=True)
    p_dump.add_argument("--lags", default="-2:2:0.1", help="start:stop:step")
    p_dump.add_argument("--out-dir", default=default_out_dir())
    p_dump.set_defaults(fn=cmd_kernel_dump)

    p_self = sub.add_parser("selftest", help="run the property suite")
    p_self.add_argument("--seed", type=int, default=0)
    p_self.add_argument("--quick", action="store_true", help="smaller case counts")
    p_self.add_argument("--out-dir", default=default_out_dir())
    p_self.set_defaults(fn=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
