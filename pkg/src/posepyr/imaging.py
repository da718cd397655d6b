"""Shared image resampling helpers (HWC float arrays)."""

import numpy as np


def bilinear_sample(image, xs, ys, fill=0.0):
    """Sample image (H,W,C) at float coords; out-of-bounds pixels get `fill`."""
    h, w = image.shape[:2]
    inside = (xs >= -0.5) & (xs <= w - 0.5) & (ys >= -0.5) & (ys <= h - 0.5)
    xc = np.clip(xs, 0, w - 1)
    yc = np.clip(ys, 0, h - 1)
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0)[..., None]
    fy = (yc - y0)[..., None]
    out = (image[y0, x0] * (1 - fx) * (1 - fy) + image[y0, x1] * fx * (1 - fy)
           + image[y1, x0] * (1 - fx) * fy + image[y1, x1] * fx * fy)
    out = np.where(inside[..., None], out, fill)
    return out.astype(image.dtype, copy=False), inside


def resize_image(image, out_h, out_w):
    """Bilinear resize (align-corners-false), HWC layout."""
    h, w = image.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    out, _ = bilinear_sample(image, gx, gy)
    return out


def affine_warp(image, matrix, out_h, out_w, fill=0.0):
    """Warp by a forward 2x3 affine matrix (input px -> output px).

    Returns (warped, valid_mask) where the mask marks output pixels sourced
    from inside the input.
    """
    a = np.vstack([matrix, [0.0, 0.0, 1.0]])
    inv = np.linalg.inv(a)
    gy, gx = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    xs = inv[0, 0] * gx + inv[0, 1] * gy + inv[0, 2]
    ys = inv[1, 0] * gx + inv[1, 1] * gy + inv[1, 2]
    out, inside = bilinear_sample(image, xs, ys, fill=fill)
    return out, inside
