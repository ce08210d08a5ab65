"""Same-padding correlation kernels with a compiled core and a NumPy fallback.

Two interchangeable backends implement the six hot operations (1D/2D forward,
gradient w.r.t. input, gradient w.r.t. weights):

* ``compiled`` -- Cython loops built from ``_convext.pyx``,
* ``numpy``    -- sliding-window views contracted with ``einsum``.

The backend is selected once at import time: the compiled extension when it
imported cleanly, the NumPy fallback otherwise.  Set ``GNPLAB_CONV_BACKEND``
to ``compiled`` or ``numpy`` before import to force a choice; forcing
``compiled`` without a built extension raises immediately rather than
silently degrading.

Conventions: inputs are ``(length, channels)`` or ``(height, width,
channels)``, weights ``(k, c_in, c_out)`` or ``(kh, kw, c_in, c_out)`` with
odd kernel sizes, zero padding, stride one.  Everything is float64.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from . import _convext
except ImportError:
    _convext = None

_FORCED = os.environ.get("GNPLAB_CONV_BACKEND", "").strip().lower()
if _FORCED in ("", "auto"):
    _BACKEND = "compiled" if _convext is not None else "numpy"
elif _FORCED == "compiled":
    if _convext is None:
        raise ImportError(
            "GNPLAB_CONV_BACKEND=compiled but the gnplab._convext extension "
            "is not built; install the package or choose the numpy backend"
        )
    _BACKEND = "compiled"
elif _FORCED == "numpy":
    _BACKEND = "numpy"
else:
    raise ValueError(
        f"GNPLAB_CONV_BACKEND={_FORCED!r} not recognised; "
        "expected 'compiled', 'numpy' or 'auto'"
    )


def backend_name() -> str:
    """Name of the backend currently in use."""
    return _BACKEND


def compiled_available() -> bool:
    return _convext is not None


def select_backend(name: str) -> None:
    """Switch backend after import.  Exists for tests and benchmarks."""
    global _BACKEND
    if name not in ("compiled", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _convext is None:
        raise ImportError("compiled backend requested but gnplab._convext is not built")
    _BACKEND = name


def _check_conv1d(x, w, b):
    if x.ndim != 2:
        raise ValueError(f"conv1d input must be (length, channels), got shape {x.shape}")
    if w.ndim != 3:
        raise ValueError(f"conv1d weights must be (k, c_in, c_out), got shape {w.shape}")
    if w.shape[0] % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {w.shape[0]}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(
            f"conv1d channel mismatch: input shape {x.shape} carries "
            f"{x.shape[1]} channels but weights shape {w.shape} expect {w.shape[1]}"
        )
    if b.shape != (w.shape[2],):
        raise ValueError(f"bias shape {b.shape} does not match c_out={w.shape[2]}")


def _check_conv2d(x, w, b):
    if x.ndim != 3:
        raise ValueError(f"conv2d input must be (h, w, channels), got shape {x.shape}")
    if w.ndim != 4:
        raise ValueError(f"conv2d weights must be (kh, kw, c_in, c_out), got shape {w.shape}")
    if w.shape[0] % 2 == 0 or w.shape[1] % 2 == 0:
        raise ValueError(f"kernel sizes must be odd, got {w.shape[:2]}")
    if x.shape[2] != w.shape[2]:
        raise ValueError(
            f"conv2d channel mismatch: input shape {x.shape} carries "
            f"{x.shape[2]} channels but weights shape {w.shape} expect {w.shape[2]}"
        )
    if b.shape != (w.shape[3],):
        raise ValueError(f"bias shape {b.shape} does not match c_out={w.shape[3]}")


# ---------------------------------------------------------------------------
# NumPy backend


def _np_conv1d_forward(x, w, b):
    k = w.shape[0]
    r = (k - 1) // 2
    xp = np.pad(x, ((r, r), (0, 0)))
    win = sliding_window_view(xp, k, axis=0)  # (L, c_in, k)
    return np.einsum("icu,uco->io", win, w, optimize=True) + b


def _np_conv1d_grad_input(gy, w):
    # correlation with the flipped kernel, in/out channels swapped
    wf = np.ascontiguousarray(w[::-1].transpose(0, 2, 1))
    return _np_conv1d_forward(gy, wf, np.zeros(wf.shape[2]))


def _np_conv1d_grad_weights(x, gy, k):
    r = (k - 1) // 2
    xp = np.pad(x, ((r, r), (0, 0)))
    win = sliding_window_view(xp, k, axis=0)
    return np.einsum("icu,io->uco", win, gy, optimize=True)


def _np_conv2d_forward(x, w, b):
    kh, kw = w.shape[0], w.shape[1]
    rh, rw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((rh, rh), (rw, rw), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))  # (H, W, c_in, kh, kw)
    return np.einsum("ijcuv,uvco->ijo", win, w, optimize=True) + b


def _np_conv2d_grad_input(gy, w):
    wf = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
    return _np_conv2d_forward(gy, wf, np.zeros(wf.shape[3]))


def _np_conv2d_grad_weights(x, gy, kh, kw):
    rh, rw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((rh, rh), (rw, rw), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))
    return np.einsum("ijcuv,ijo->uvco", win, gy, optimize=True)


# ---------------------------------------------------------------------------
# Compiled backend wrappers (padding and flips happen here, loops in Cython)


def _c_conv1d_forward(x, w, b):
    k = w.shape[0]
    r = (k - 1) // 2
    xp = np.ascontiguousarray(np.pad(x, ((r, r), (0, 0))))
    out = np.empty((x.shape[0], w.shape[2]))
    _convext.conv1d_forward(xp, np.ascontiguousarray(w), np.ascontiguousarray(b), out)
    return out


def _c_conv1d_grad_input(gy, w):
    wf = np.ascontiguousarray(w[::-1].transpose(0, 2, 1))
    return _c_conv1d_forward(gy, wf, np.zeros(wf.shape[2]))


def _c_conv1d_grad_weights(x, gy, k):
    r = (k - 1) // 2
    xp = np.ascontiguousarray(np.pad(x, ((r, r), (0, 0))))
    gw = np.zeros((k, x.shape[1], gy.shape[1]))
    _convext.conv1d_grad_weights(xp, np.ascontiguousarray(gy), gw)
    return gw


def _c_conv2d_forward(x, w, b):
    # channels-first internally so the hot loops run unit-stride over width
    kh, kw = w.shape[0], w.shape[1]
    rh, rw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.ascontiguousarray(np.pad(x, ((rh, rh), (rw, rw), (0, 0))).transpose(2, 0, 1))
    wt = np.ascontiguousarray(w.transpose(3, 2, 0, 1))
    out = np.empty((w.shape[3], x.shape[0], x.shape[1]))
    _convext.conv2d_forward(xp, wt, np.ascontiguousarray(b), out)
    return np.ascontiguousarray(out.transpose(1, 2, 0))


def _c_conv2d_grad_input(gy, w):
    wf = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
    return _c_conv2d_forward(gy, wf, np.zeros(wf.shape[3]))


def _c_conv2d_grad_weights(x, gy, kh, kw):
    rh, rw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.ascontiguousarray(np.pad(x, ((rh, rh), (rw, rw), (0, 0))).transpose(2, 0, 1))
    gt = np.ascontiguousarray(gy.transpose(2, 0, 1))
    gw = np.zeros((gy.shape[2], x.shape[2], kh, kw))
    _convext.conv2d_grad_weights(xp, gt, gw)
    return np.ascontiguousarray(gw.transpose(2, 3, 1, 0))


_IMPLS = {
    "numpy": (
        _np_conv1d_forward,
        _np_conv1d_grad_input,
        _np_conv1d_grad_weights,
        _np_conv2d_forward,
        _np_conv2d_grad_input,
        _np_conv2d_grad_weights,
    ),
    "compiled": (
        _c_conv1d_forward,
        _c_conv1d_grad_input,
        _c_conv1d_grad_weights,
        _c_conv2d_forward,
        _c_conv2d_grad_input,
        _c_conv2d_grad_weights,
    ),
}


def conv1d_forward(x, w, b):
    """Same-padding correlation of ``x`` (L, c_in) with ``w`` (k, c_in, c_out)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_conv1d(x, w, b)
    return _IMPLS[_BACKEND][0](x, w, b)


def conv1d_grad_input(gy, w):
    return _IMPLS[_BACKEND][1](np.asarray(gy, dtype=np.float64), np.asarray(w, dtype=np.float64))


def conv1d_grad_weights(x, gy, k):
    return _IMPLS[_BACKEND][2](
        np.asarray(x, dtype=np.float64), np.asarray(gy, dtype=np.float64), k
    )


def conv2d_forward(x, w, b):
    """Same-padding correlation of ``x`` (H, W, c_in) with ``w`` (kh, kw, c_in, c_out)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_conv2d(x, w, b)
    return _IMPLS[_BACKEND][3](x, w, b)


def conv2d_grad_input(gy, w):
    return _IMPLS[_BACKEND][4](np.asarray(gy, dtype=np.float64), np.asarray(w, dtype=np.float64))


def conv2d_grad_weights(x, gy, kh, kw):
    return _IMPLS[_BACKEND][5](
        np.asarray(x, dtype=np.float64), np.asarray(gy, dtype=np.float64), kh, kw
    )
