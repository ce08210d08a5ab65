"""Translation-equivariant prediction maps from datasets to Gaussian FDDs.

The full-covariance model (GNP) runs two convolutional paths over grids
sized from the data:

* mean path: context -> (data, density) channels on a 1D grid -> CNN ->
  EQ-bump interpolation at the targets;
* covariance path: context -> three channels on the 2D product grid (data,
  density, and an identity "source" channel that seeds correlations) ->
  CNN -> one output plane F -> K_grid = F F^T -> interpolated to target
  pairs -> plus a learned homogeneous noise variance on the diagonal.

The factorized baseline (ConvCNP) shares the mean-path structure with two
output channels (mean and pointwise variance) and no covariance path.

Both encoders sort the context set into a canonical order first, which
makes the set functions bitwise permutation invariant.  All grid embeddings
are EQ bumps with a learnable lengthscale; the decoder shares the encoder
lengthscale unless the architecture unties them.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .config import hash_config
from .gp import Dataset, GaussianFDD
from .linalg import nearest_psd
from .tensor import Tensor

LEAKY_SLOPE = 0.1
# empirical damping of the final conv layers so untrained outputs start at
# O(1) scale despite the unnormalized bump decoding
FINAL_DAMP_MEAN = 0.2
FINAL_DAMP_COV = 0.05


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid covering the data span plus a margin."""

    lower: float
    upper: float
    points_per_unit: float
    nodes: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0])


@dataclass(frozen=True)
class Grid2D:
    """Product grid; node (i, j) is the pair (z_i, z_j)."""

    axis: Grid1D

    @property
    def size(self) -> int:
        return self.axis.size

    def node(self, i: int, j: int):
        return float(self.axis.nodes[i]), float(self.axis.nodes[j])


def build_grid1d(xs: np.ndarray, points_per_unit: float, margin: float) -> Grid1D:
    """Grid over [min(xs) - margin, max(xs) + margin] at the given density.

    Node count is ceil(span * points_per_unit) + 1 with a small tolerance so
    spans that are an exact number of cells do not gain a spurious node.
    """
    xs = np.asarray(xs, dtype=np.float64).reshape(-1)
    if xs.size == 0:
        raise ValueError("cannot build a grid from no points")
    lower = float(xs.min()) - margin
    upper = float(xs.max()) + margin
    span = upper - lower
    count = int(math.ceil(span * points_per_unit - 1e-9)) + 1
    count = max(count, 2)
    return Grid1D(lower, upper, points_per_unit, np.linspace(lower, upper, count))


def build_grids(context: Dataset, targets: np.ndarray, points_per_unit: float,
                margin: float):
    """1D and product grids covering context and target inputs together.

    With an empty context the grids come from the targets alone.
    """
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    xs = np.concatenate([context.x, targets])
    g1 = build_grid1d(xs, points_per_unit, margin)
    return g1, Grid2D(g1)


@dataclass
class Encoding2D:
    """The three-channel 2D grid encoding plus the grid it lives on."""

    grid: Grid2D
    values: Tensor  # (M, M, 3)


def interp_weights(x: np.ndarray, nodes: np.ndarray, lengthscale: Tensor) -> Tensor:
    """EQ-bump weight matrix exp(-(x_i - z_k)^2 / (2 l^2)), shape (n, M).

    Lives on the tape so the lengthscale receives gradient.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d2 = -0.5 * (x[:, None] - nodes[None, :]) ** 2
    inv_sq = T.reciprocal(T.square(lengthscale))
    return T.texp(T.mul(Tensor(d2), inv_sq))


def encode_mean(context: Dataset, grid: Grid1D, lengthscale: Tensor) -> Tensor:
    """Data and density channels on the 1D grid, shape (M, 2).

    data[k] = sum_i y_i psi(z_k - x_i), density[k] = sum_i psi(z_k - x_i);
    both are zero for an empty context.
    """
    bumps = interp_weights(context.x, grid.nodes, lengthscale)
    data = T.matmul(T.transpose(bumps), Tensor(context.y))
    density = T.matmul(T.transpose(bumps), Tensor(np.ones(len(context))))
    return T.stack_cols([data, density])


def encode_kernel(
    context: Dataset,
    grid: Grid2D,
    lengthscale: Tensor,
    source_mode: str = "identity",
) -> Encoding2D:
    """Three-channel encoding on the product grid, shape (M, M, 3).

    Channel 0 sums y_i-weighted 2D bumps centred at (x_i, x_i), channel 1
    the unweighted bumps, and channel 2 is the identity matrix: a
    translation-equivariant seed that lets the CNN build correlations even
    from an empty context.  ``source_mode='zero'`` blanks that channel.
    """
    if source_mode not in ("identity", "zero"):
        raise ValueError(f"source_mode must be 'identity' or 'zero', got {source_mode!r}")
    m = grid.size
    bumps = interp_weights(context.x, grid.axis.nodes, lengthscale)
    weighted = T.mul(bumps, Tensor(np.repeat(context.y[:, None], m, axis=1)))
    data = T.matmul(T.transpose(weighted), bumps)
    density = T.matmul(T.transpose(bumps), bumps)
    source = np.eye(m) if source_mode == "identity" else np.zeros((m, m))
    values = T.stack_channels([data, density, Tensor(source)])
    return Encoding2D(grid, values)


# ---------------------------------------------------------------------------
# Architectures and parameter initialization


def _check_cnn_geometry(layers, kernel_size, points_per_unit, path):
    if kernel_size % 2 == 0 or kernel_size < 1:
        raise ValueError(f"{path} kernel size must be odd, got {kernel_size}")
    receptive = (layers * (kernel_size - 1) + 1) / points_per_unit
    if receptive > 8.0:
        raise ValueError(
            f"{path} receptive field {receptive:.2f} input units exceeds the cap of 8"
        )


@dataclass(frozen=True)
class GNPArchitecture:
    points_per_unit: float = 20.0
    margin: float = 0.1
    mean_channels: int = 16
    mean_layers: int = 6
    mean_kernel_size: int = 5
    cov_channels: int = 8
    cov_layers: int = 6
    cov_kernel_size: int = 5
    tie_lengthscales: bool = True
    kernel_pipeline: str = "factor"  # or "psd_projection"
    source_mode: str = "identity"
    init_lengthscale: float = 0.1
    init_noise_var: float = 0.0025

    def __post_init__(self):
        _check_cnn_geometry(
            self.mean_layers, self.mean_kernel_size, self.points_per_unit, "mean path"
        )
        _check_cnn_geometry(
            self.cov_layers, self.cov_kernel_size, self.points_per_unit, "covariance path"
        )
        if self.kernel_pipeline not in ("factor", "psd_projection"):
            raise ValueError(f"unknown kernel pipeline {self.kernel_pipeline!r}")
        if self.source_mode not in ("identity", "zero"):
            raise ValueError(f"unknown source mode {self.source_mode!r}")


@dataclass(frozen=True)
class ConvCNPArchitecture:
    points_per_unit: float = 20.0
    margin: float = 0.1
    mean_channels: int = 16
    mean_layers: int = 6
    mean_kernel_size: int = 5
    variance_floor: float = 1e-6
    init_lengthscale: float = 0.1

    def __post_init__(self):
        _check_cnn_geometry(
            self.mean_layers, self.mean_kernel_size, self.points_per_unit, "mean path"
        )


def _softplus_inverse(y: float) -> float:
    return float(np.log(np.expm1(y)))


def _he_std(fan_in: int) -> float:
    # variance-preserving for leaky ReLU with slope 0.1
    return math.sqrt(2.0 / ((1.0 + LEAKY_SLOPE**2) * fan_in))


def _init_conv_stack(params, prefix, dims, kernel_shape, final_damp, rng):
    for i in range(len(dims) - 1):
        c_in, c_out = dims[i], dims[i + 1]
        fan_in = int(np.prod(kernel_shape)) * c_in
        std = _he_std(fan_in)
        if i == len(dims) - 2:
            std *= final_damp
        w = rng.normal(0.0, std, size=(*kernel_shape, c_in, c_out))
        params[f"{prefix}{i}_w"] = T.parameter(w, f"{prefix}{i}_w")
        params[f"{prefix}{i}_b"] = T.parameter(np.zeros(c_out), f"{prefix}{i}_b")


def _run_cnn(h: Tensor, params, prefix, layers) -> Tensor:
    for i in range(layers):
        h = T.conv(h, params[f"{prefix}{i}_w"], params[f"{prefix}{i}_b"])
        if i < layers - 1:
            h = T.pointwise(h, "leaky_relu", LEAKY_SLOPE)
    return h


class GNPModel:
    """Full-covariance prediction map."""

    kind = "gnp"

    def __init__(self, arch: GNPArchitecture, params: dict):
        self.arch = arch
        self.params = params

    @classmethod
    def create(cls, arch: GNPArchitecture, rng: np.random.Generator) -> "GNPModel":
        params = {}
        mean_dims = [2] + [arch.mean_channels] * (arch.mean_layers - 1) + [1]
        cov_dims = [3] + [arch.cov_channels] * (arch.cov_layers - 1) + [1]
        _init_conv_stack(
            params, "mean_conv", mean_dims, (arch.mean_kernel_size,), FINAL_DAMP_MEAN, rng
        )
        _init_conv_stack(
            params,
            "cov_conv",
            cov_dims,
            (arch.cov_kernel_size, arch.cov_kernel_size),
            FINAL_DAMP_COV,
            rng,
        )
        raw_l = _softplus_inverse(arch.init_lengthscale)
        params["raw_lengthscale"] = T.parameter(raw_l, "raw_lengthscale")
        if not arch.tie_lengthscales:
            params["raw_lengthscale_dec"] = T.parameter(raw_l, "raw_lengthscale_dec")
        params["raw_noise_var"] = T.parameter(
            _softplus_inverse(arch.init_noise_var), "raw_noise_var"
        )
        return cls(arch, params)

    def lengthscales(self):
        enc = T.softplus(self.params["raw_lengthscale"])
        if self.arch.tie_lengthscales:
            return enc, enc
        return enc, T.softplus(self.params["raw_lengthscale_dec"])

    def noise_variance(self) -> Tensor:
        return T.softplus(self.params["raw_noise_var"])

    def predict_t(self, context: Dataset, targets: np.ndarray, grid: Grid1D = None):
        """Tape forward pass; returns (mean (n,), covariance (n, n))."""
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        context = context.sorted()
        if grid is None:
            grid, grid2 = build_grids(
                context, targets, self.arch.points_per_unit, self.arch.margin
            )
        else:
            grid2 = Grid2D(grid)
        ell_enc, ell_dec = self.lengthscales()

        henc = encode_mean(context, grid, ell_enc)
        signal = _run_cnn(henc, self.params, "mean_conv", self.arch.mean_layers)
        psi = interp_weights(targets, grid.nodes, ell_dec)
        mean = T.matmul(psi, T.take_col(signal, 0))

        enc2 = encode_kernel(context, grid2, ell_enc, self.arch.source_mode)
        k_tt = kernel_map(self, enc2, targets)
        cov = T.add(k_tt, T.mul(Tensor(np.eye(targets.size)), self.noise_variance()))
        return mean, cov

    def predict(self, context: Dataset, targets: np.ndarray, grid: Grid1D = None) -> GaussianFDD:
        mean, cov = self.predict_t(context, targets, grid)
        sym = 0.5 * (cov.data + cov.data.T)
        return GaussianFDD(np.asarray(targets, dtype=np.float64).reshape(-1), mean.data, sym)


def kernel_map(model: GNPModel, encoding: Encoding2D, targets: np.ndarray) -> Tensor:
    """Map the 2D encoding to the target-pair covariance block.

    The CNN output plane F becomes K_grid = F F^T (symmetric PSD by
    construction), then the EQ-bump weights carry it off-grid:
    K[a, b] = sum_{k, l} psi(x_a - z_k) K_grid[k, l] psi(x_b - z_l).

    The ``psd_projection`` pipeline variant replaces the factorization with
    a nearest-PSD projection of F; it runs detached from the tape and is
    for evaluation only.
    """
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    _, ell_dec = model.lengthscales()
    out = _run_cnn(encoding.values, model.params, "cov_conv", model.arch.cov_layers)
    plane = T.take_channel(out, 0)
    psi = interp_weights(targets, encoding.grid.axis.nodes, ell_dec)
    if model.arch.kernel_pipeline == "psd_projection":
        k_grid = nearest_psd(plane.data)
        k_tt = psi.data @ k_grid @ psi.data.T
        return Tensor(0.5 * (k_tt + k_tt.T))
    k_grid = T.matmul(plane, T.transpose(plane))
    return T.matmul(T.matmul(psi, k_grid), T.transpose(psi))


def gnp_forward(
    model: GNPModel, context: Dataset, targets: np.ndarray, grid: Grid1D = None
) -> GaussianFDD:
    """Detached forward pass of the full-covariance model."""
    return model.predict(context, targets, grid)


class ConvCNPModel:
    """Factorized baseline: mean and pointwise variance, no correlations."""

    kind = "convcnp"

    def __init__(self, arch: ConvCNPArchitecture, params: dict):
        self.arch = arch
        self.params = params

    @classmethod
    def create(cls, arch: ConvCNPArchitecture, rng: np.random.Generator) -> "ConvCNPModel":
        params = {}
        dims = [2] + [arch.mean_channels] * (arch.mean_layers - 1) + [2]
        _init_conv_stack(
            params, "mean_conv", dims, (arch.mean_kernel_size,), FINAL_DAMP_MEAN, rng
        )
        params["raw_lengthscale"] = T.parameter(
            _softplus_inverse(arch.init_lengthscale), "raw_lengthscale"
        )
        return cls(arch, params)

    def predict_t(self, context: Dataset, targets: np.ndarray, grid: Grid1D = None):
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        context = context.sorted()
        if grid is None:
            grid = build_grid1d(
                np.concatenate([context.x, targets]),
                self.arch.points_per_unit,
                self.arch.margin,
            )
        ell = T.softplus(self.params["raw_lengthscale"])
        henc = encode_mean(context, grid, ell)
        signal = _run_cnn(henc, self.params, "mean_conv", self.arch.mean_layers)
        psi = interp_weights(targets, grid.nodes, ell)
        mean = T.matmul(psi, T.take_col(signal, 0))
        raw_var = T.matmul(psi, T.take_col(signal, 1))
        variance = T.add(T.softplus(raw_var), Tensor(np.full(targets.size, self.arch.variance_floor)))
        return mean, T.diag_embed(variance)

    def predict(self, context: Dataset, targets: np.ndarray, grid: Grid1D = None) -> GaussianFDD:
        mean, cov = self.predict_t(context, targets, grid)
        return GaussianFDD(np.asarray(targets, dtype=np.float64).reshape(-1), mean.data, cov.data)


def convcnp_forward(
    model: ConvCNPModel, context: Dataset, targets: np.ndarray, grid: Grid1D = None
) -> GaussianFDD:
    """Detached forward pass of the factorized baseline."""
    return model.predict(context, targets, grid)


def extract_prior_covariance(model: GNPModel, lags: np.ndarray) -> np.ndarray:
    """Stationary prior covariance k(0, lag) implied by the empty-context map.

    One empty-context forward on {0} plus all the lags gives the row
    k(0, .); lag 0 reads the variance with the homogeneous noise removed.
    All lags share the forward's own grid over their joint span, the same
    grid the model would build for data covering those inputs.  A shared
    grid is essential: the on-grid factor contracts over grid nodes, so
    per-lag grids of different widths would scale entries inconsistently
    and the lag-zero normalizer worst of all.
    """
    lags = np.asarray(lags, dtype=np.float64).reshape(-1)
    empty = Dataset(np.empty(0), np.empty(0))
    fdd = model.predict(empty, np.concatenate([[0.0], lags]))
    noise = model.noise_variance().item()
    out = fdd.cov[0, 1:].copy()
    out[lags == 0.0] = fdd.cov[0, 0] - noise
    return out


# ---------------------------------------------------------------------------
# Checkpoints: versioned JSON with exact float64 payloads

CHECKPOINT_VERSION = 1

_ARCH_CLASSES = {"gnp": GNPArchitecture, "convcnp": ConvCNPArchitecture}
_MODEL_CLASSES = {"gnp": GNPModel, "convcnp": ConvCNPModel}


def _encode_array(a: np.ndarray) -> dict:
    data = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(data.tobytes()).decode("ascii")}


def _decode_array(entry: dict) -> np.ndarray:
    raw = base64.b64decode(entry["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).copy()


def save_checkpoint(path, model, config: dict = None, extra: dict = None):
    """Write a model (and optionally its experiment config) to JSON.

    The config travels with its hash so a load can verify integrity.
    """
    from . import __version__

    blob = {
        "format_version": CHECKPOINT_VERSION,
        "model_kind": model.kind,
        "code_version": __version__,
        "architecture": asdict(model.arch),
        "params": {name: _encode_array(p.data) for name, p in sorted(model.params.items())},
    }
    if config is not None:
        blob["config"] = config
        blob["config_hash"] = hash_config(config)
    if extra:
        blob["extra"] = extra
    with open(path, "w") as fh:
        json.dump(blob, fh)
        fh.write("\n")


def load_checkpoint(path, expected_config_hash: str = None):
    """Rebuild a model from a checkpoint; returns ``(model, blob)``.

    Raises:
        ValueError: unknown format version, a stored config whose hash no
            longer matches (corruption or hand editing), or a mismatch with
            ``expected_config_hash``.
    """
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint format {blob.get('format_version')!r} is not supported"
        )
    if "config" in blob:
        actual = hash_config(blob["config"])
        if actual != blob.get("config_hash"):
            raise ValueError(
                "checkpoint config hash mismatch: stored "
                f"{blob.get('config_hash')!r}, recomputed {actual!r}"
            )
    if expected_config_hash is not None:
        stored = blob.get("config_hash")
        if stored != expected_config_hash:
            raise ValueError(
                f"checkpoint was trained under config {stored!r}, "
                f"not the requested {expected_config_hash!r}"
            )
    kind = blob["model_kind"]
    if kind not in _ARCH_CLASSES:
        raise ValueError(f"unknown model kind {kind!r}")
    arch_cls = _ARCH_CLASSES[kind]
    arch_kwargs = dict(blob["architecture"])
    arch = arch_cls(**arch_kwargs)
    params = {
        name: T.parameter(_decode_array(entry), name)
        for name, entry in blob["params"].items()
    }
    return _MODEL_CLASSES[kind](arch, params), blob
