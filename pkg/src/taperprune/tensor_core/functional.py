"""Differentiable layer functions over :class:`Tensor`.

Convolution uses an im2col view (``sliding_window_view``) contracted with
``tensordot``; its adjoint scatters back one kernel offset at a time.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import ShapeError, Tensor, record


def _out_extent(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv_output_hw(h: int, w: int, kh: int, kw: int, stride: int = 1, pad: int = 0) -> tuple[int, int]:
    return _out_extent(h, kh, stride, pad), _out_extent(w, kw, stride, pad)


# elementwise helpers ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("add", a.shape, b.shape)
    out = Tensor.wrap(a.data + b.data)
    return record("add", (a, b), out, lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("mul", a.shape, b.shape)
    out = Tensor.wrap(a.data * b.data)
    return record("mul", (a, b), out, lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor.wrap(a.data * c)
    return record("scale", (a,), out, lambda g: (g * c,))


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = Tensor.wrap(np.asarray(a.data.sum(), dtype=a.dtype).reshape(()))
    return record("sum", (a,), out, lambda g: (np.broadcast_to(g, a.shape),))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor.wrap(a.data.reshape(shape))
    return record("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def flatten(a: Tensor) -> Tensor:
    return reshape(a, (a.shape[0], -1))


# layers ----------------------------------------------------------------------


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of ``x[N,C,H,W]`` with ``w[K,C,kh,kw]``."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError("conv2d rank", (4, 4), (x.data.ndim, w.data.ndim))
    n, c, h, wd = x.shape
    k, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError("conv2d input channels vs weight channels", cw, c)
    if b is not None and b.shape != (k,):
        raise ShapeError("conv2d bias", (k,), b.shape)
    ho, wo = conv_output_hw(h, wd, kh, kw, stride, pad)
    if ho <= 0 or wo <= 0:
        raise ShapeError("conv2d output extent", "positive", (ho, wo))

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # one contiguous im2col matrix, rows (n, y, x), columns (c, i, j)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)
    wmat = w.data.reshape(k, -1)
    out = (cols @ wmat.T).reshape(n, ho, wo, k).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b.data[None, :, None, None]
    out = Tensor.wrap(np.ascontiguousarray(out))

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, k)
        gw = (gmat.T @ cols).reshape(w.shape)
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        gcols = (gmat @ wmat).reshape(n, ho, wo, c, kh, kw)
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[..., i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, pad : pad + h, pad : pad + wd] if pad else gxp
        return (gx, gw, gb) if b is not None else (gx, gw)

    inputs = (x, w, b) if b is not None else (x, w)
    return record("conv2d", inputs, out, backward)


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x[N,D] @ w[K,D].T + b[K]``."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ShapeError("dense rank", (2, 2), (x.data.ndim, w.data.ndim))
    if x.shape[1] != w.shape[1]:
        raise ShapeError("dense input features vs weight features", w.shape[1], x.shape[1])
    out = x.data @ w.data.T
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError("dense bias", (w.shape[0],), b.shape)
        out = out + b.data
    out = Tensor.wrap(out)

    def backward(g):
        gx = g @ w.data
        gw = g.T @ x.data
        return (gx, gw, g.sum(axis=0)) if b is not None else (gx, gw)

    inputs = (x, w, b) if b is not None else (x, w)
    return record("dense", inputs, out, backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor.wrap(np.where(mask, x.data, 0).astype(x.dtype, copy=False))
    return record("relu", (x,), out, lambda g: (g * mask,))


def maxpool2d(x: Tensor, k: int = 2, stride: int | None = None) -> Tensor:
    stride = k if stride is None else stride
    n, c, h, w = x.shape
    ho, wo = conv_output_hw(h, w, k, k, stride, 0)
    win = sliding_window_view(x.data, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    flat = win.reshape(n, c, ho, wo, k * k)
    arg = flat.argmax(axis=-1)
    out = Tensor.wrap(np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0])

    def backward(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        for di in range(k):
            for dj in range(k):
                sel = arg == di * k + dj
                gx[:, :, di : di + stride * ho : stride, dj : dj + stride * wo : stride] += g * sel
        return (gx,)

    return record("maxpool2d", (x,), out, backward)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under softmax(``logits``)."""
    labels = np.asarray(labels)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError("softmax_cross_entropy labels", (logits.shape[0],), labels.shape)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    n = logits.shape[0]
    rows = np.arange(n)
    loss = (logsum - z[rows, labels]).mean()
    out = Tensor.wrap(np.asarray(loss, dtype=logits.dtype).reshape(()))

    def backward(g):
        p = np.exp(z - logsum[:, None])
        p[rows, labels] -= 1.0
        return (p * (g / n),)

    return record("softmax_cross_entropy", (logits,), out, backward)


def concat_channels(xs: list[Tensor]) -> Tensor:
    base = xs[0].shape
    for t in xs[1:]:
        if t.shape[0] != base[0] or t.shape[2:] != base[2:]:
            raise ShapeError("concat non-channel extents", (base[0],) + base[2:], (t.shape[0],) + t.shape[2:])
    out = Tensor.wrap(np.concatenate([t.data for t in xs], axis=1))
    bounds = np.cumsum([0] + [t.shape[1] for t in xs])

    def backward(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(xs)))

    return record("concat", tuple(xs), out, backward)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[1]:
        raise ShapeError("slice channel range", f"within [0, {x.shape[1]}]", (start, stop))
    out = Tensor.wrap(np.ascontiguousarray(x.data[:, start:stop]))

    def backward(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[:, start:stop] = g
        return (gx,)

    return record("slice", (x,), out, backward)


def channel_scale(x: Tensor, h: np.ndarray) -> Tensor:
    """Multiply channel ``c`` of sample ``n`` by the constant ``h[n, c]``."""
    if h.shape != x.shape[:2]:
        raise ShapeError("channel_scale factors", x.shape[:2], h.shape)
    hb = h.reshape(h.shape + (1,) * (x.data.ndim - 2)).astype(x.dtype, copy=False)
    out = Tensor.wrap(x.data * hb)
    return record("channel_scale", (x,), out, lambda g: (g * hb,))
