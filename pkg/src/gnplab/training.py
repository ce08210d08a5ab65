"""Maximum-likelihood meta-training and held-out evaluation.

The objective is the average joint negative log-density of each episode's
targets under the model's predictive FDD; minibatch gradients feed ADAM.
The reported evaluation metric is the joint target log-density divided by
the target count, so scores are comparable across target-set sizes.

Seeding: one master seed spawns disjoint substreams for training episodes
(domain 0), the validation stream (domain 1), and evaluation tasks
(domain 2), so validation data never overlaps the training draw sequence.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import hash_config
from .gp import Dataset, GaussianFDD, gaussian_logpdf
from .linalg import NotPositiveDefiniteError
from .models import (
    ConvCNPArchitecture,
    ConvCNPModel,
    GNPArchitecture,
    GNPModel,
    save_checkpoint,
)
from .optim import AdamState, adam_step
from .tasks import (
    GP_KINDS,
    GeneratorSpec,
    SizeSpec,
    SplitSpec,
    oracle_predict,
    sample_episode,
)
from .tensor import Tensor, backward, gaussian_nll, zero_grads

SEED_SCHEME = "spawn-v1"
_TRAIN_DOMAIN, _VAL_DOMAIN, _EVAL_DOMAIN = 0, 1, 2


class TrainingDiverged(RuntimeError):
    """Loss or gradients went non-finite; the last checkpoint on disk is good."""


def episode_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(_TRAIN_DOMAIN, index))
    )


def task_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(_EVAL_DOMAIN, index))
    )


def validation_seed(master_seed: int) -> int:
    return int(
        np.random.SeedSequence(master_seed, spawn_key=(_VAL_DOMAIN,)).generate_state(1)[0]
    )


class ModelPredictor:
    """A trained (or training) model as an evaluation predictor."""

    def __init__(self, model):
        self.model = model
        self.name = model.kind

    def available_for(self, gen: GeneratorSpec) -> bool:
        return True

    def predict(self, context: Dataset, targets: np.ndarray) -> GaussianFDD:
        return self.model.predict(context, targets)

    def predict_t(self, context: Dataset, targets: np.ndarray):
        return self.model.predict_t(context, targets)


class OraclePredictor:
    """Ground-truth GP posterior (full or diagonal) for GP generators."""

    def __init__(self, gen: GeneratorSpec, mode: str):
        if mode not in ("full", "diag"):
            raise ValueError(f"oracle mode must be 'full' or 'diag', got {mode!r}")
        self.gen = gen
        self.mode = mode
        self.name = f"oracle-{mode}"

    def available_for(self, gen: GeneratorSpec) -> bool:
        return gen.kind in GP_KINDS

    def predict(self, context: Dataset, targets: np.ndarray) -> GaussianFDD:
        fdd = oracle_predict(self.gen, context, targets, self.mode)
        if fdd is None:
            raise ValueError(f"no oracle for generator kind {self.gen.kind!r}")
        return fdd

    def predict_t(self, context: Dataset, targets: np.ndarray):
        fdd = self.predict(context, targets)
        return Tensor(fdd.mean), Tensor(fdd.cov)


def nll_loss(predictor, episodes) -> Tensor:
    """Mean joint negative log-density over a batch of episodes, on the tape.

    Raises:
        NotPositiveDefiniteError: a predictive covariance failed its
            factorization, annotated with the offending episode index.
    """
    if not episodes:
        raise ValueError("nll_loss needs at least one episode")
    total = None
    for i, ep in enumerate(episodes):
        mean, cov = predictor.predict_t(ep.context, ep.target.x)
        try:
            term = gaussian_nll(mean, cov, ep.target.y)
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(f"episode {i}: {exc}") from exc
        total = term if total is None else total + term
    return total * (1.0 / len(episodes))


@dataclass
class EvalResult:
    """Mean per-point log-likelihood with its 95% confidence half-width."""

    mean: float
    ci95: float
    n_tasks: int
    seed: int


def evaluate(
    predictor,
    gen: GeneratorSpec,
    split: SplitSpec,
    n_tasks: int,
    seed: int,
    sizes: SizeSpec = SizeSpec(),
) -> EvalResult | None:
    """Score a predictor on freshly drawn tasks; None when no oracle exists.

    Task ``j`` comes from its own seeded substream, so scores are exactly
    reproducible and two predictors evaluated at the same seed see the same
    tasks.
    """
    if not predictor.available_for(gen):
        return None
    if n_tasks < 2:
        raise ValueError("evaluate needs at least two tasks for a CI")
    scores = np.empty(n_tasks)
    for j in range(n_tasks):
        rng = task_rng(seed, j)
        ep = sample_episode(gen, split, sizes, rng)
        fdd = predictor.predict(ep.context, ep.target.x)
        scores[j] = gaussian_logpdf(ep.target.y, fdd) / len(ep.target)
    mean = float(scores.mean())
    ci = float(1.96 * scores.std(ddof=1) / np.sqrt(n_tasks))
    return EvalResult(mean, ci, n_tasks, seed)


@dataclass
class EpochStats:
    epoch: int
    train_nll: float
    val_loglik: float
    seconds: float


@dataclass
class TrainHistory:
    rows: list

    def to_csv(self, path, meta: dict = None):
        lines = []
        for key, value in (meta or {}).items():
            lines.append(f"# {key}={value}")
        lines.append("epoch,train_nll,val_loglik,seconds")
        for r in self.rows:
            lines.append(f"{r.epoch},{r.train_nll!r},{r.val_loglik!r},{r.seconds!r}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "TrainHistory":
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("epoch,"):
                    continue
                e, t, v, s = line.split(",")
                rows.append(EpochStats(int(e), float(t), float(v), float(s)))
        return cls(rows)


def train(config: dict, model, out_dir=None):
    """Run the training loop described by a normalized config.

    Parameters update in place; returns ``(model, history)``.  With
    ``out_dir`` set, a checkpoint and the history CSV are rewritten at the
    configured cadence so an aborted run keeps its last good state.

    Raises:
        TrainingDiverged: non-finite loss or gradient.
    """
    gen = GeneratorSpec.from_dict(config["generator"])
    split = SplitSpec.from_dict(config["split"])
    sizes = SizeSpec(**config["sizes"])
    settings = config["training"]
    master = config["seed"]
    cfg_hash = hash_config(config)
    meta = {
        "config_hash": cfg_hash,
        "code_version": __version__,
        "seed": master,
        "seed_scheme": SEED_SCHEME,
    }

    state = AdamState(
        learning_rate=settings["learning_rate"],
        beta1=settings["beta1"],
        beta2=settings["beta2"],
        eps=settings["eps"],
    )
    params = model.params
    steps_per_epoch = max(1, settings["episodes_per_epoch"] // settings["batch_size"])
    batch_size = settings["batch_size"]
    val_seed = validation_seed(master)
    predictor = ModelPredictor(model)
    history = TrainHistory([])
    episode_index = 0

    def flush(epoch_done):
        if out_dir is None:
            return
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(
            os.path.join(out_dir, "checkpoint.json"),
            model,
            config=config,
            extra={"epochs_completed": epoch_done},
        )
        history.to_csv(os.path.join(out_dir, "history.csv"), meta)

    for epoch in range(settings["epochs"]):
        tic = time.perf_counter()
        epoch_losses = []
        for _ in range(steps_per_epoch):
            grad_sums = {name: np.zeros_like(p.data) for name, p in params.items()}
            batch_loss = 0.0
            for _ in range(batch_size):
                rng = episode_rng(master, episode_index)
                ep = sample_episode(gen, split, sizes, rng)
                episode_index += 1
                zero_grads(params)
                try:
                    loss = nll_loss(predictor, [ep])
                except NotPositiveDefiniteError as exc:
                    raise NotPositiveDefiniteError(
                        f"training episode {episode_index - 1}: {exc}"
                    ) from exc
                except ValueError as exc:
                    # scipy's finiteness check fires before the loss exists
                    raise TrainingDiverged(
                        f"epoch {epoch + 1}, episode {episode_index - 1}: {exc}"
                    ) from exc
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite loss {value} at epoch {epoch + 1}, "
                        f"episode {episode_index - 1}"
                    )
                backward(loss)
                batch_loss += value
                for name, p in params.items():
                    if p.grad is not None:
                        grad_sums[name] += p.grad
            grads = {name: g / batch_size for name, g in grad_sums.items()}
            try:
                new_values, state = adam_step(
                    {name: p.data for name, p in params.items()}, grads, state
                )
            except ValueError as exc:
                raise TrainingDiverged(str(exc)) from exc
            for name, p in params.items():
                p.data = new_values[name]
            epoch_losses.append(batch_loss / batch_size)
        val = evaluate(predictor, gen, split, settings["val_tasks"], val_seed, sizes)
        seconds = time.perf_counter() - tic
        history.rows.append(
            EpochStats(epoch + 1, float(np.mean(epoch_losses)), val.mean, seconds)
        )
        if (epoch + 1) % settings["checkpoint_every"] == 0 or epoch + 1 == settings["epochs"]:
            flush(epoch + 1)
    if settings["epochs"] == 0:
        flush(0)
    return model, history


def build_model(config: dict, rng: np.random.Generator):
    """Fresh model from the config's model section."""
    body = {k: v for k, v in config["model"].items() if k != "kind"}
    if config["model"]["kind"] == "gnp":
        return GNPModel.create(GNPArchitecture(**body), rng)
    return ConvCNPModel.create(ConvCNPArchitecture(**body), rng)
