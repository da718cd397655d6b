"""Numba-jitted convolution kernels.

Each kernel is written in gather form: every output element is produced by
exactly one loop iteration, so `parallel=True` stays bitwise deterministic
regardless of thread count (no cross-thread reductions). Accumulation is
float64 irrespective of input dtype.
"""

import numpy as np
from numba import njit, prange

_JIT = dict(parallel=True, cache=True, fastmath=False, nogil=True)


@njit(**_JIT)
def _conv2d_forward(x, w, stride, pad, out):
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    out_h, out_w = out.shape[2], out.shape[3]
    for idx in prange(n * co):
        b = idx // co
        o = idx % co
        for oh in range(out_h):
            ih0 = oh * stride - pad
            for ow in range(out_w):
                iw0 = ow * stride - pad
                acc = 0.0
                for i in range(ci):
                    for p in range(kh):
                        ih = ih0 + p
                        if ih < 0 or ih >= h:
                            continue
                        for q in range(kw):
                            iw = iw0 + q
                            if 0 <= iw < wd:
                                acc += x[b, i, ih, iw] * w[o, i, p, q]
                out[b, o, oh, ow] = acc


@njit(**_JIT)
def _conv2d_input_grad(gy, w, stride, pad, gx):
    n, co, out_h, out_w = gy.shape
    _, ci, kh, kw = w.shape
    in_h, in_w = gx.shape[2], gx.shape[3]
    for idx in prange(n * ci):
        b = idx // ci
        i = idx % ci
        for ih in range(in_h):
            for iw in range(in_w):
                acc = 0.0
                for p in range(kh):
                    num_h = ih + pad - p
                    if num_h < 0 or num_h % stride != 0:
                        continue
                    oh = num_h // stride
                    if oh >= out_h:
                        continue
                    for q in range(kw):
                        num_w = iw + pad - q
                        if num_w < 0 or num_w % stride != 0:
                            continue
                        ow = num_w // stride
                        if ow >= out_w:
                            continue
                        for o in range(co):
                            acc += gy[b, o, oh, ow] * w[o, i, p, q]
                gx[b, i, ih, iw] = acc


@njit(**_JIT)
def _conv2d_weight_grad(x, gy, stride, pad, gw):
    n, ci, h, wd = x.shape
    _, co, out_h, out_w = gy.shape
    kh, kw = gw.shape[2], gw.shape[3]
    for idx in prange(co * ci):
        o = idx // ci
        i = idx % ci
        for p in range(kh):
            for q in range(kw):
                acc = 0.0
                for b in range(n):
                    for oh in range(out_h):
                        ih = oh * stride - pad + p
                        if ih < 0 or ih >= h:
                            continue
                        for ow in range(out_w):
                            iw = ow * stride - pad + q
                            if 0 <= iw < wd:
                                acc += gy[b, o, oh, ow] * x[b, i, ih, iw]
                gw[o, i, p, q] = acc


def conv2d_forward(x, w, stride, pad):
    n, _, h, wd = x.shape
    co, _, kh, kw = w.shape
    out_h = (h + 2 * pad - kh) // stride + 1
    out_w = (wd + 2 * pad - kw) // stride + 1
    out = np.empty((n, co, out_h, out_w), dtype=x.dtype)
    _conv2d_forward(x, w, stride, pad, out)
    return out


def conv2d_input_grad(gy, w, stride, pad, in_h, in_w):
    n = gy.shape[0]
    ci = w.shape[1]
    gx = np.empty((n, ci, in_h, in_w), dtype=gy.dtype)
    _conv2d_input_grad(gy, w, stride, pad, gx)
    return gx


def conv2d_weight_grad(x, gy, stride, pad, kh, kw):
    ci = x.shape[1]
    co = gy.shape[1]
    gw = np.empty((co, ci, kh, kw), dtype=gy.dtype)
    _conv2d_weight_grad(x, gy, stride, pad, gw)
    return gw
