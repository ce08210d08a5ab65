"""Dense float64 tensors with a dynamic reverse-mode tape.

Every operation records its parents and a backward closure on the result, so
the tape is rebuilt on each forward pass and naturally handles data-dependent
shapes (grids sized from the data they cover).  ``backward`` seeds a scalar
loss and walks the tape once in reverse topological order.

Operations never mutate their inputs.  Constants can be passed as plain
numbers or arrays and are lifted to leaf tensors.
"""

from __future__ import annotations

import numpy as np

from . import convolution


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """A float64 array plus its position in the tape.

    ``name`` marks a trainable parameter; gradients are collected per name
    after a backward pass.  Leaf tensors without a backward closure terminate
    the traversal.
    """

    __slots__ = ("data", "grad", "name", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.name = name
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # small operator sugar; the module-level functions are the real API
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value) -> Tensor:
    """Lift a number or array to a constant leaf tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def parameter(data, name: str) -> Tensor:
    """A named leaf tensor owned by a model."""
    return Tensor(np.array(data, dtype=np.float64, copy=True), name=name)


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _topo_order(root: Tensor):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order  # parents precede children


def backward(loss: Tensor):
    """Accumulate d(loss)/d(node) into ``grad`` over the whole tape.

    The loss must be scalar.  Each tape node is visited exactly once.
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    order = _topo_order(loss)
    loss.grad = np.ones(())
    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for p, g in zip(node._parents, grads):
            if g is not None:
                _accumulate(p, g)


def zero_grads(params):
    for p in params.values():
        p.grad = None


def parameter_gradients(loss: Tensor, params: dict) -> dict:
    """Gradients of a scalar loss keyed by parameter name.

    Parameters the loss never touched get zero gradients.
    """
    zero_grads(params)
    backward(loss)
    return {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }


# ---------------------------------------------------------------------------
# Elementwise arithmetic.  Shapes must match exactly except that a scalar
# operand broadcasts over the other side.


def _broadcast_ok(a, b):
    return a.shape == b.shape or a.ndim == 0 or b.ndim == 0


def _reduce_to(g, shape):
    if g.shape == shape:
        return g
    return np.array(g.sum())  # scalar operand collected the whole gradient


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not _broadcast_ok(a, b):
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def bwd(gy):
        return _reduce_to(gy, a.shape), _reduce_to(gy, b.shape)

    return Tensor(a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not _broadcast_ok(a, b):
        raise ShapeError(f"sub shape mismatch: {a.shape} vs {b.shape}")

    def bwd(gy):
        return _reduce_to(gy, a.shape), _reduce_to(-gy, b.shape)

    return Tensor(a.data - b.data, (a, b), bwd)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(-a.data, (a,), lambda gy: (-gy,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not _broadcast_ok(a, b):
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")

    def bwd(gy):
        return _reduce_to(gy * b.data, a.shape), _reduce_to(gy * a.data, b.shape)

    return Tensor(a.data * b.data, (a, b), bwd)


def reciprocal(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / a.data
    return Tensor(out, (a,), lambda gy: (-gy * out * out,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data * a.data, (a,), lambda gy: (2.0 * gy * a.data,))


def texp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda gy: (gy * out,))


def tlog(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.log(a.data), (a,), lambda gy: (gy / a.data,))


def softplus(a) -> Tensor:
    from scipy.special import expit

    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)

    def bwd(gy):
        return (gy * expit(a.data),)

    return Tensor(out, (a,), bwd)


def tsum(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data.sum(), (a,), lambda gy: (np.full(a.shape, gy),))


def tmean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    return Tensor(a.data.mean(), (a,), lambda gy: (np.full(a.shape, gy / n),))


# ---------------------------------------------------------------------------
# Pointwise activations


def pointwise(a, kind: str, slope: float = 0.1) -> Tensor:
    """Apply ``relu``, ``leaky_relu`` (given negative slope) or ``identity``."""
    a = as_tensor(a)
    if kind == "identity":
        return Tensor(a.data.copy(), (a,), lambda gy: (gy,))
    if kind == "relu":
        mask = a.data > 0

        def bwd(gy):
            return (gy * mask,)

        return Tensor(np.where(mask, a.data, 0.0), (a,), bwd)
    if kind == "leaky_relu":
        mask = a.data > 0
        factor = np.where(mask, 1.0, slope)

        def bwd(gy):
            return (gy * factor,)

        return Tensor(np.where(mask, a.data, slope * a.data), (a,), bwd)
    raise ValueError(f"unknown pointwise function {kind!r}")


# ---------------------------------------------------------------------------
# Linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 2 and b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul shape mismatch: {a.shape} vs {b.shape}")

        def bwd(gy):
            return gy @ b.data.T, a.data.T @ gy

        return Tensor(a.data @ b.data, (a, b), bwd)
    if a.ndim == 2 and b.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul shape mismatch: {a.shape} vs {b.shape}")

        def bwd(gy):
            return np.outer(gy, b.data), a.data.T @ gy

        return Tensor(a.data @ b.data, (a, b), bwd)
    if a.ndim == 1 and b.ndim == 1:
        if a.shape != b.shape:
            raise ShapeError(f"matmul shape mismatch: {a.shape} vs {b.shape}")

        def bwd(gy):
            return gy * b.data, gy * a.data

        return Tensor(a.data @ b.data, (a, b), bwd)
    raise ShapeError(f"matmul supports 2D/1D operands, got {a.shape} and {b.shape}")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return Tensor(a.data.T.copy(), (a,), lambda gy: (gy.T,))


def diag_embed(v) -> Tensor:
    """Vector -> diagonal matrix."""
    v = as_tensor(v)
    if v.ndim != 1:
        raise ShapeError(f"diag_embed expects a vector, got shape {v.shape}")
    return Tensor(np.diag(v.data), (v,), lambda gy: (np.diagonal(gy).copy(),))


# ---------------------------------------------------------------------------
# Stacking and slicing used by the grid encoders


def stack_cols(vectors) -> Tensor:
    vectors = [as_tensor(v) for v in vectors]
    n = vectors[0].shape
    for v in vectors:
        if v.ndim != 1 or v.shape != n:
            raise ShapeError("stack_cols needs equal-length vectors")

    def bwd(gy):
        return tuple(gy[:, i].copy() for i in range(len(vectors)))

    return Tensor(np.stack([v.data for v in vectors], axis=1), tuple(vectors), bwd)


def take_col(a, j: int) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"take_col expects a matrix, got shape {a.shape}")

    def bwd(gy):
        g = np.zeros(a.shape)
        g[:, j] = gy
        return (g,)

    return Tensor(a.data[:, j].copy(), (a,), bwd)


def stack_channels(mats) -> Tensor:
    mats = [as_tensor(m) for m in mats]
    shape = mats[0].shape
    for m in mats:
        if m.ndim != 2 or m.shape != shape:
            raise ShapeError("stack_channels needs equal-shape matrices")

    def bwd(gy):
        return tuple(gy[:, :, i].copy() for i in range(len(mats)))

    return Tensor(np.stack([m.data for m in mats], axis=2), tuple(mats), bwd)


def take_channel(a, j: int) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 3:
        raise ShapeError(f"take_channel expects rank 3, got shape {a.shape}")

    def bwd(gy):
        g = np.zeros(a.shape)
        g[:, :, j] = gy
        return (g,)

    return Tensor(a.data[:, :, j].copy(), (a,), bwd)


# ---------------------------------------------------------------------------
# Convolution


def conv(x, w, b) -> Tensor:
    """Same-padding stride-one correlation; rank of ``x`` picks 1D or 2D.

    ``x`` is (length, c_in) or (height, width, c_in); ``w`` is
    (k, c_in, c_out) or (kh, kw, c_in, c_out); kernel sizes must be odd.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim == 2:
        out = convolution.conv1d_forward(x.data, w.data, b.data)

        def bwd(gy):
            gx = convolution.conv1d_grad_input(gy, w.data)
            gw = convolution.conv1d_grad_weights(x.data, gy, w.shape[0])
            gb = gy.sum(axis=0)
            return gx, gw, gb

        return Tensor(out, (x, w, b), bwd)
    if x.ndim == 3:
        out = convolution.conv2d_forward(x.data, w.data, b.data)

        def bwd(gy):
            gx = convolution.conv2d_grad_input(gy, w.data)
            gw = convolution.conv2d_grad_weights(x.data, gy, w.shape[0], w.shape[1])
            gb = gy.sum(axis=(0, 1))
            return gx, gw, gb

        return Tensor(out, (x, w, b), bwd)
    raise ShapeError(f"conv input must be rank 2 or 3, got shape {x.shape}")


# ---------------------------------------------------------------------------
# Gaussian log-density as a fused tape op.  The forward runs a Cholesky
# factorization; the backward uses the closed-form derivatives
#   dL/dm = -alpha,   dL/dK = (K^-1 - alpha alpha^T) / 2,  alpha = K^-1 (y - m)
# for L = -log N(y | m, K).  The covariance is symmetrized on entry so the
# gradient convention stays consistent with the forward.


def gaussian_nll(mean, cov, y) -> Tensor:
    """Negative log-density of observations ``y`` under N(mean, cov)."""
    from scipy.linalg import cho_solve

    from .linalg import chol_logpdf

    mean, cov = as_tensor(mean), as_tensor(cov)
    if isinstance(y, Tensor):
        y = y.data
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if mean.shape != (n,) or cov.shape != (n, n):
        raise ShapeError(
            f"gaussian_nll shape mismatch: y {y.shape}, mean {mean.shape}, cov {cov.shape}"
        )
    sym = 0.5 * (cov.data + cov.data.T)
    value, chol = chol_logpdf(y, mean.data, sym)

    def bwd(gy):
        alpha = cho_solve((chol, True), y - mean.data)
        kinv = cho_solve((chol, True), np.eye(n))
        gm = -gy * alpha
        gk = gy * 0.5 * (kinv - np.outer(alpha, alpha))
        return gm, 0.5 * (gk + gk.T)

    return Tensor(-value, (mean, cov), bwd)
