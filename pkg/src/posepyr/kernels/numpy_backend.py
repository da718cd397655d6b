"""Pure-numpy convolution kernels (im2col / col2im formulation).

Fallback path used when numba is unavailable or when POSEPYR_BACKEND=numpy.
All functions take/return contiguous NCHW float arrays and are deterministic.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def _im2col_view(xp, kh, kw, stride, out_h, out_w):
    n, c, _, _ = xp.shape
    s0, s1, s2, s3 = xp.strides
    return as_strided(
        xp,
        shape=(n, c, kh, kw, out_h, out_w),
        strides=(s0, s1, s2, s3, s2 * stride, s3 * stride),
        writeable=False,
    )


def conv2d_forward(x, w, stride, pad):
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    out_h = _conv_out_size(h, kh, stride, pad)
    out_w = _conv_out_size(wd, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    view = _im2col_view(xp, kh, kw, stride, out_h, out_w)
    out = np.einsum("opqr,npqrhw->nohw", w, view, optimize=True)
    return np.ascontiguousarray(out)


def conv2d_weight_grad(x, gy, stride, pad, kh, kw):
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    out_h, out_w = gy.shape[2], gy.shape[3]
    view = _im2col_view(xp, kh, kw, stride, out_h, out_w)
    gw = np.einsum("nohw,npqrhw->opqr", gy, view, optimize=True)
    return np.ascontiguousarray(gw)


def conv2d_input_grad(gy, w, stride, pad, in_h, in_w):
    n, co, out_h, out_w = gy.shape
    _, ci, kh, kw = w.shape
    gxp = np.zeros((n, ci, in_h + 2 * pad, in_w + 2 * pad), dtype=gy.dtype)
    for p in range(kh):
        h_hi = p + stride * out_h
        for q in range(kw):
            w_hi = q + stride * out_w
            t = np.einsum("nohw,oi->nihw", gy, w[:, :, p, q], optimize=True)
            gxp[:, :, p:h_hi:stride, q:w_hi:stride] += t
    if pad:
        gxp = gxp[:, :, pad:pad + in_h, pad:pad + in_w]
    return np.ascontiguousarray(gxp)
