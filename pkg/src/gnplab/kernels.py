"""Stationary covariance functions over scalar inputs.

Three families cover the synthetic benchmarks:

* ``eq``              k(r) = exp(-r^2 / (2 l^2))
* ``matern52``        k(r) = (1 + sqrt(5) r / l + 5 r^2 / (3 l^2)) exp(-sqrt(5) r / l)
* ``weakly_periodic`` k(r) = exp(-r^2 / (2 l_d^2)) exp(-2 sin^2(pi r / p) / l_p^2)

All are unit-variance at r = 0 and evaluated in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KERNEL_KINDS = ("eq", "matern52", "weakly_periodic")


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family plus its hyperparameters.

    ``lengthscale`` is the EQ/Matern scale; the weakly periodic family uses
    ``decay_lengthscale``, ``period`` and ``periodic_lengthscale`` instead.
    """

    kind: str
    lengthscale: float = 1.0
    decay_lengthscale: float = 2.0
    period: float = 1.0
    periodic_lengthscale: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        for field_name in (
            "lengthscale",
            "decay_lengthscale",
            "period",
            "periodic_lengthscale",
        ):
            value = getattr(self, field_name)
            if not value > 0.0:
                raise ValueError(f"kernel {field_name} must be positive, got {value}")

    def to_dict(self) -> dict:
        if self.kind == "weakly_periodic":
            return {
                "kind": self.kind,
                "decay_lengthscale": self.decay_lengthscale,
                "period": self.period,
                "periodic_lengthscale": self.periodic_lengthscale,
            }
        return {"kind": self.kind, "lengthscale": self.lengthscale}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(**d)


def default_kernel(kind: str) -> KernelSpec:
    """Benchmark defaults: EQ at l=1, Matern-5/2 at l=0.5, weakly periodic
    at (l_d=2, p=1, l_p=1)."""
    if kind == "eq":
        return KernelSpec("eq", lengthscale=1.0)
    if kind == "matern52":
        return KernelSpec("matern52", lengthscale=0.5)
    if kind == "weakly_periodic":
        return KernelSpec("weakly_periodic")
    raise ValueError(f"no default kernel for kind {kind!r}")


def kernel_eval(spec: KernelSpec, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Gram matrix k(x1[i], x2[j]) of shape (len(x1), len(x2))."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    r = np.abs(x1[:, None] - x2[None, :])
    if spec.kind == "eq":
        return np.exp(-0.5 * (r / spec.lengthscale) ** 2)
    if spec.kind == "matern52":
        s = np.sqrt(5.0) * r / spec.lengthscale
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    if spec.kind == "weakly_periodic":
        decay = np.exp(-0.5 * (r / spec.decay_lengthscale) ** 2)
        per = np.exp(
            -2.0 * np.sin(np.pi * r / spec.period) ** 2 / spec.periodic_lengthscale**2
        )
        return decay * per
    raise ValueError(f"unknown kernel kind {spec.kind!r}")
