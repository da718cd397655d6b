"""Dense-tensor reverse-mode autodiff covering exactly the ops the network needs.

Tensors wrap contiguous numpy buffers (NCHW for image-like data). Every op
records a backward closure; `Tensor.backward()` runs the tape in reverse
topological order and accumulates gradients (repeated calls accumulate until
grads are cleared).
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import kernels as K


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def accumulate_grad(self, g):
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar loss, got shape {self.data.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- light arithmetic (scalars + matching shapes), enough for losses --

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return _scalar_affine(self, 1.0, float(other))

    __radd__ = __add__

    def __mul__(self, scalar):
        return _scalar_affine(self, float(scalar), 0.0)

    __rmul__ = __mul__

    def __neg__(self):
        return _scalar_affine(self, -1.0, 0.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, _scalar_affine(other, -1.0, 0.0))
        return _scalar_affine(self, 1.0, -float(other))


class Parameter(Tensor):
    """Trainable tensor with a hierarchical name and Adam moment state."""

    __slots__ = ("name", "adam_m", "adam_v", "adam_step")

    def __init__(self, data, name=None):
        super().__init__(np.ascontiguousarray(data), requires_grad=True)
        self.name = name
        self.adam_m = None
        self.adam_v = None
        self.adam_step = 0


def _make(data, parents, backward):
    req = _grad_enabled and any(p.requires_grad for p in parents)
    if not req:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=tuple(parents), backward=backward)


def _scalar_affine(x, a, b):
    y = a * x.data + b if b else a * x.data

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(a * g)

    return _make(np.asarray(y, dtype=x.data.dtype), [x], bwd)


# ---------------------------------------------------------------------------
# convolution family
# ---------------------------------------------------------------------------

def conv2d(x, w, bias=None, stride=1, padding=0):
    """2-D cross-correlation, NCHW input against OIKK weights."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input/weight, got {x.data.ndim}-D and {w.data.ndim}-D")
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(
            f"conv2d channel mismatch: input has {x.data.shape[1]} channels, "
            f"weight expects {w.data.shape[1]}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    co, _, kh, kw = w.data.shape
    h, wd = x.data.shape[2], x.data.shape[3]
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{wd + 2 * padding}")
    y = K.conv2d_forward(x.data, w.data, stride, padding)
    if bias is not None:
        if bias.data.shape != (co,):
            raise ShapeError(f"conv2d bias shape {bias.data.shape} != ({co},)")
        y = y + bias.data.reshape(1, co, 1, 1)
    parents = [x, w] + ([bias] if bias is not None else [])

    def bwd(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            x.accumulate_grad(K.conv2d_input_grad(g, w.data, stride, padding, h, wd))
        if w.requires_grad:
            w.accumulate_grad(K.conv2d_weight_grad(x.data, g, stride, padding, kh, kw))
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))

    return _make(y, parents, bwd)


def conv_transpose2d(x, w, bias=None, stride=2, padding=1):
    """Transposed convolution; weight layout (C_in, C_out, K, K).

    Forward is the adjoint of conv2d, so with the 4/2/1 defaults the output
    spatial extent is exactly 2x the input.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError("conv_transpose2d expects 4-D input and weight")
    if x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(
            f"conv_transpose2d channel mismatch: input has {x.data.shape[1]} channels, "
            f"weight expects {w.data.shape[0]}")
    ci, co, kh, kw = w.data.shape
    h, wd = x.data.shape[2], x.data.shape[3]
    out_h = (h - 1) * stride - 2 * padding + kh
    out_w = (wd - 1) * stride - 2 * padding + kw
    if out_h <= 0 or out_w <= 0:
        raise ShapeError(f"conv_transpose2d computed non-positive output size {out_h}x{out_w}")
    y = K.conv2d_input_grad(x.data, w.data, stride, padding, out_h, out_w)
    if bias is not None:
        y = y + bias.data.reshape(1, co, 1, 1)
    parents = [x, w] + ([bias] if bias is not None else [])

    def bwd(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            x.accumulate_grad(K.conv2d_forward(g, w.data, stride, padding))
        if w.requires_grad:
            w.accumulate_grad(K.conv2d_weight_grad(g, x.data, stride, padding, kh, kw))
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))

    return _make(y, parents, bwd)


# ---------------------------------------------------------------------------
# batch norm
# ---------------------------------------------------------------------------

def batchnorm2d(x, gamma, beta, running_mean, running_var, training,
                momentum=0.1, eps=1e-5):
    """Per-channel batch normalization over (N, H, W).

    Train mode uses batch statistics and updates the running buffers in
    place (exponential moving average, biased variance); eval mode uses the
    running buffers.
    """
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"batchnorm affine shape must be ({c},), got {gamma.data.shape}/{beta.data.shape}")
    n_red = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
    if n_red == 0:
        raise ShapeError("batchnorm2d requires nonzero batch*spatial extent")
    axes = (0, 2, 3)
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    y = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)
    y = y.astype(x.data.dtype, copy=False)

    def bwd(g):
        if gamma.requires_grad:
            gamma.accumulate_grad(np.einsum("nchw,nchw->c", g, xhat))
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=axes))
        if x.requires_grad:
            gs = gamma.data.reshape(1, c, 1, 1) * g
            if training:
                m1 = gs.mean(axis=axes).reshape(1, c, 1, 1)
                m2 = (gs * xhat).mean(axis=axes).reshape(1, c, 1, 1)
                gx = inv_std.reshape(1, c, 1, 1) * (gs - m1 - xhat * m2)
            else:
                gx = inv_std.reshape(1, c, 1, 1) * gs
            x.accumulate_grad(gx.astype(x.data.dtype, copy=False))

    return _make(y, [x, gamma, beta], bwd)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def _bilinear_axis(out_size, in_size, dtype):
    # align-corners-false sampling positions, clamped to the input range
    pos = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    pos = np.clip(pos, 0.0, in_size - 1.0)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = (pos - lo).astype(dtype)
    return lo, hi, frac


def bilinear_upsample(x, out_h, out_w):
    """Bilinear resize to (out_h, out_w), align-corners-false convention."""
    n, c, h, w = x.data.shape
    if out_h < h or out_w < w:
        raise ShapeError(f"bilinear_upsample target {out_h}x{out_w} smaller than input {h}x{w}")
    dt = x.data.dtype
    y0, y1, fy = _bilinear_axis(out_h, h, dt)
    x0, x1, fx = _bilinear_axis(out_w, w, dt)
    fy = fy.reshape(-1, 1)
    fx = fx.reshape(1, -1)
    d = x.data
    top = d[:, :, y0][:, :, :, x0] * (1 - fx) + d[:, :, y0][:, :, :, x1] * fx
    bot = d[:, :, y1][:, :, :, x0] * (1 - fx) + d[:, :, y1][:, :, :, x1] * fx
    y = top * (1 - fy.reshape(1, 1, -1, 1)) + bot * fy.reshape(1, 1, -1, 1)
    y = y.astype(dt, copy=False)

    def bwd(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        wy0 = (1 - fy).reshape(1, 1, -1, 1)
        wy1 = fy.reshape(1, 1, -1, 1)
        wx0 = (1 - fx).reshape(1, 1, 1, -1)
        wx1 = fx.reshape(1, 1, 1, -1)
        flat = gx.reshape(n * c, h, w)
        for wy, yy in ((wy0, y0), (wy1, y1)):
            for wx, xx in ((wx0, x0), (wx1, x1)):
                contrib = (g * wy * wx).reshape(n * c, out_h, out_w)
                idx = (yy.reshape(-1, 1) * w + xx.reshape(1, -1)).ravel()
                np.add.at(flat.reshape(n * c, h * w), (slice(None), idx),
                          contrib.reshape(n * c, -1))
        x.accumulate_grad(gx)

    return _make(y, [x], bwd)


# ---------------------------------------------------------------------------
# elementwise / structural
# ---------------------------------------------------------------------------

def relu(x):
    y = np.maximum(x.data, 0)

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g * (x.data > 0))

    return _make(y, [x], bwd)


def add(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    y = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return _make(y, [a, b], bwd)


def concat_channels(tensors):
    base = tensors[0].data.shape
    for t in tensors[1:]:
        s = t.data.shape
        if len(s) != len(base) or s[0] != base[0] or s[2:] != base[2:]:
            raise ShapeError(f"concat_channels non-channel dims differ: {base} vs {s}")
    y = np.concatenate([t.data for t in tensors], axis=1)
    splits = np.cumsum([t.data.shape[1] for t in tensors])[:-1]

    def bwd(g):
        for t, gpart in zip(tensors, np.split(g, splits, axis=1)):
            if t.requires_grad:
                t.accumulate_grad(gpart)

    return _make(y, list(tensors), bwd)


def slice_channels(x, start, stop):
    y = np.ascontiguousarray(x.data[:, start:stop])

    def bwd(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[:, start:stop] = g
            x.accumulate_grad(gx)

    return _make(y, [x], bwd)


def mse(pred, target, mask=None):
    """Mean over all elements of squared difference.

    `target` (and `mask`) may be plain arrays. With a mask, the mean runs
    over mask-weighted elements: sum(m*(p-t)^2) / sum(m broadcast over p).
    """
    tdata = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.data.shape != tdata.shape:
        raise ShapeError(f"mse shape mismatch: {pred.data.shape} vs {tdata.shape}")
    diff = pred.data - tdata
    if mask is None:
        denom = diff.size
        val = np.array(np.sum(diff * diff) / denom, dtype=pred.data.dtype)
        scaled_mask = None
    else:
        mask = np.asarray(mask)
        bmask = np.broadcast_to(mask, diff.shape)
        denom = float(bmask.sum())
        if denom == 0:
            denom = 1.0
        val = np.array(np.sum(bmask * diff * diff) / denom, dtype=pred.data.dtype)
        scaled_mask = bmask
    parents = [pred] + ([target] if isinstance(target, Tensor) else [])

    def bwd(g):
        s = float(g.reshape(-1)[0]) * 2.0 / denom
        gd = s * diff if scaled_mask is None else s * scaled_mask * diff
        gd = gd.astype(pred.data.dtype, copy=False)
        if pred.requires_grad:
            pred.accumulate_grad(gd)
        if isinstance(target, Tensor) and target.requires_grad:
            target.accumulate_grad(-gd)

    return _make(val.reshape(()), parents, bwd)


def tensor_sum(x):
    val = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, float(g.reshape(-1)[0])))

    return _make(val.reshape(()), [x], bwd)


def mul(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")
    y = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    return _make(y, [a, b], bwd)
