"""ADAM updates and a finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import backward, zero_grads


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates plus the step counter."""

    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected ADAM update.

    ``params`` and ``grads`` are dicts of numpy arrays keyed by parameter
    name.  Inputs are not mutated; returns ``(new_params, new_state)``.

    Raises:
        ValueError: a gradient contains NaN, naming the offending parameter.
    """
    for name, g in grads.items():
        if np.isnan(g).any():
            raise ValueError(f"NaN gradient for parameter {name!r}")
    t = state.step + 1
    new_m, new_v, new_params = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_params[name] = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    new_state = AdamState(
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
        step=t,
        m=new_m,
        v=new_v,
    )
    return new_params, new_state


def check_gradients(loss_fn, params: dict, probe_count: int, rng, eps: float = 1e-5):
    """Max relative error between tape gradients and central differences.

    ``loss_fn`` rebuilds the scalar loss from the current parameter values;
    ``probe_count`` random (parameter, entry) pairs are probed.  Returns 0.0
    when there is nothing to probe.
    """
    if not params:
        return 0.0
    zero_grads(params)
    loss = loss_fn()
    backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
    names = sorted(params)
    worst = 0.0
    for _ in range(probe_count):
        name = names[rng.integers(len(names))]
        p = params[name]
        flat_idx = int(rng.integers(p.data.size)) if p.data.size else 0
        idx = np.unravel_index(flat_idx, p.data.shape) if p.data.ndim else ()
        original = p.data[idx] if p.data.ndim else float(p.data)
        if p.data.ndim:
            p.data[idx] = original + eps
            hi = loss_fn().item()
            p.data[idx] = original - eps
            lo = loss_fn().item()
            p.data[idx] = original
        else:
            p.data = np.array(original + eps)
            hi = loss_fn().item()
            p.data = np.array(original - eps)
            lo = loss_fn().item()
            p.data = np.array(original)
        numeric = (hi - lo) / (2.0 * eps)
        a = analytic[name][idx] if p.data.ndim else float(analytic[name])
        rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        worst = max(worst, rel)
    return worst
