"""Synthetic meta-learning episodes.

An episode is a context set plus a target set drawn from one function
sample.  Generators cover three GP families, a sawtooth with random
frequency/phase/direction, and a uniform mixture over the other four; every
generator contaminates all outputs with i.i.d. Gaussian observation noise.

GP episodes admit an exact posterior oracle (full covariance or its
diagonal); sawtooth and mixture episodes do not, and the oracle reports
that by returning ``None``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .gp import Dataset, GaussianFDD, gp_posterior, gp_sample
from .kernels import KernelSpec, default_kernel

GENERATOR_KINDS = ("eq", "matern52", "weakly_periodic", "sawtooth", "mixture")
GP_KINDS = ("eq", "matern52", "weakly_periodic")

SPLIT_KINDS = ("interp_in_range", "interp_beyond_range", "extrapolation")

# training inputs live on [-2, 2]; the beyond-range split shifts the whole
# episode by +4, extrapolation keeps context in range but pushes targets out
_SPLIT_INTERVALS = {
    "interp_in_range": ((-2.0, 2.0), (-2.0, 2.0)),
    "interp_beyond_range": ((2.0, 6.0), (2.0, 6.0)),
    "extrapolation": ((-2.0, 2.0), (2.0, 4.0)),
}


@dataclass(frozen=True)
class SplitSpec:
    """Named evaluation regime with explicit context/target intervals."""

    kind: str
    context_interval: tuple = None
    target_interval: tuple = None

    def __post_init__(self):
        if self.kind not in SPLIT_KINDS:
            raise ValueError(f"unknown split kind {self.kind!r}; expected one of {SPLIT_KINDS}")
        ctx, tgt = _SPLIT_INTERVALS[self.kind]
        if self.context_interval is None:
            object.__setattr__(self, "context_interval", ctx)
        if self.target_interval is None:
            object.__setattr__(self, "target_interval", tgt)
        for name in ("context_interval", "target_interval"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must be increasing, got ({lo}, {hi})")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "context_interval": list(self.context_interval),
            "target_interval": list(self.target_interval),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        d = dict(d)
        for name in ("context_interval", "target_interval"):
            if name in d:
                d[name] = tuple(d[name])
        return cls(**d)


@dataclass(frozen=True)
class SizeSpec:
    """Context count range (inclusive, sampled uniformly) and target count."""

    context_low: int = 0
    context_high: int = 10
    n_target: int = 16

    def __post_init__(self):
        if not 0 <= self.context_low <= self.context_high:
            raise ValueError(f"bad context range ({self.context_low}, {self.context_high})")
        if self.n_target < 1:
            raise ValueError("episodes need at least one target point")


@dataclass(frozen=True)
class GeneratorSpec:
    """One episode distribution: a function family plus observation noise."""

    kind: str
    kernel: KernelSpec = None
    noise_std: float = 0.05
    freq_range: tuple = (3.0, 5.0)
    amplitude: float = 1.0
    components: tuple = None

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(
                f"unknown generator kind {self.kind!r}; expected one of {GENERATOR_KINDS}"
            )
        if not self.noise_std > 0.0:
            raise ValueError(f"noise_std must be positive, got {self.noise_std}")
        if self.kind in GP_KINDS and self.kernel is None:
            object.__setattr__(self, "kernel", default_kernel(self.kind))
        if self.kind == "mixture" and self.components is None:
            # the mixture draws uniformly from the four concrete families
            object.__setattr__(
                self,
                "components",
                tuple(
                    GeneratorSpec(k, noise_std=self.noise_std)
                    for k in ("eq", "matern52", "weakly_periodic", "sawtooth")
                ),
            )
        if self.kind == "sawtooth":
            lo, hi = self.freq_range
            if not 0.0 < lo <= hi:
                raise ValueError(f"bad sawtooth frequency range {self.freq_range}")

    @property
    def noise_var(self) -> float:
        return self.noise_std**2

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "noise_std": self.noise_std}
        if self.kind in GP_KINDS:
            d["kernel"] = self.kernel.to_dict()
        elif self.kind == "sawtooth":
            d["freq_range"] = list(self.freq_range)
            d["amplitude"] = self.amplitude
        elif self.kind == "mixture":
            d["components"] = [c.to_dict() for c in self.components]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        d = dict(d)
        if "kernel" in d:
            d["kernel"] = KernelSpec.from_dict(d["kernel"])
        if "freq_range" in d:
            d["freq_range"] = tuple(d["freq_range"])
        if "components" in d:
            d["components"] = tuple(cls.from_dict(c) for c in d["components"])
        return cls(**d)


@dataclass
class Episode:
    """A context/target pair drawn from one function sample."""

    context: Dataset
    target: Dataset
    generator_kind: str
    split_kind: str

    def to_dict(self) -> dict:
        return {
            "context": {"x": self.context.x.tolist(), "y": self.context.y.tolist()},
            "target": {"x": self.target.x.tolist(), "y": self.target.y.tolist()},
            "generator_kind": self.generator_kind,
            "split_kind": self.split_kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Episode":
        return cls(
            Dataset(np.array(d["context"]["x"]), np.array(d["context"]["y"])),
            Dataset(np.array(d["target"]["x"]), np.array(d["target"]["y"])),
            d["generator_kind"],
            d["split_kind"],
        )


def dump_episodes(path, episodes):
    """Write episodes as line-delimited JSON."""
    with open(path, "w") as fh:
        for ep in episodes:
            fh.write(json.dumps(ep.to_dict()) + "\n")


def load_episodes(path):
    with open(path) as fh:
        return [Episode.from_dict(json.loads(line)) for line in fh if line.strip()]


def sawtooth_eval(x: np.ndarray, freq: float, phase: float, direction: float,
                  amplitude: float = 1.0) -> np.ndarray:
    """Noiseless sawtooth: amplitude * frac(direction * freq * x + phase)."""
    x = np.asarray(x, dtype=np.float64)
    return amplitude * np.mod(direction * freq * x + phase, 1.0)


def mixture_draw(gen: GeneratorSpec, rng: np.random.Generator) -> GeneratorSpec:
    """Pick one mixture component uniformly."""
    if gen.kind != "mixture":
        raise ValueError(f"mixture_draw needs a mixture generator, got {gen.kind!r}")
    return gen.components[rng.integers(len(gen.components))]


def sample_episode(
    gen: GeneratorSpec,
    split: SplitSpec,
    sizes: SizeSpec,
    rng: np.random.Generator,
) -> Episode:
    """Draw one episode.

    Inputs are uniform on the split's intervals; context and target outputs
    come from a single function draw, all contaminated with observation
    noise.  The draw order (sizes, inputs, function, noise) is fixed so a
    seeded generator reproduces episodes exactly.
    """
    n_ctx = int(rng.integers(sizes.context_low, sizes.context_high + 1))
    n_tgt = sizes.n_target
    c_lo, c_hi = split.context_interval
    t_lo, t_hi = split.target_interval
    x_ctx = rng.uniform(c_lo, c_hi, n_ctx)
    x_tgt = rng.uniform(t_lo, t_hi, n_tgt)
    x_all = np.concatenate([x_ctx, x_tgt])

    active = mixture_draw(gen, rng) if gen.kind == "mixture" else gen
    if active.kind in GP_KINDS:
        y_all = gp_sample(active.kernel, x_all, active.noise_var, rng)
    elif active.kind == "sawtooth":
        lo, hi = active.freq_range
        freq = rng.uniform(lo, hi)
        phase = rng.uniform(0.0, 1.0)
        direction = 1.0 if rng.integers(2) else -1.0
        clean = sawtooth_eval(x_all, freq, phase, direction, active.amplitude)
        y_all = clean + active.noise_std * rng.standard_normal(x_all.size)
    else:
        raise ValueError(f"cannot sample from generator kind {active.kind!r}")

    return Episode(
        Dataset(x_all[:n_ctx], y_all[:n_ctx]),
        Dataset(x_all[n_ctx:], y_all[n_ctx:]),
        gen.kind,
        split.kind,
    )


def oracle_predict(
    gen: GeneratorSpec, context: Dataset, targets: np.ndarray, mode: str
) -> GaussianFDD | None:
    """Ground-truth predictive distribution for GP generators.

    ``mode`` is ``full`` (exact posterior plus noise on the diagonal) or
    ``diag`` (same, with off-diagonal covariance zeroed: the factorized
    reference every correlated model should beat).  Returns ``None`` for
    generators with no tractable posterior (sawtooth, mixture).
    """
    if mode not in ("full", "diag"):
        raise ValueError(f"oracle mode must be 'full' or 'diag', got {mode!r}")
    if gen.kind not in GP_KINDS:
        return None
    post = gp_posterior(gen.kernel, context, targets, gen.noise_var)
    cov = post.cov + gen.noise_var * np.eye(post.dim)
    if mode == "diag":
        cov = np.diag(np.diag(cov))
    return GaussianFDD(post.x, post.mean, cov)
