"""Training targets, multi-resolution heatmap loss, tag loss, augmentation.

Targets are unnormalized Gaussians (peak 1) splatted per keypoint at every
pyramid level with the SAME standard deviation in pixels: higher-resolution
levels therefore see relatively tighter peaks. Overlapping persons merge by
per-pixel max. Tags are supervised only at the base (lowest) resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .imaging import affine_warp


@dataclass
class Annotation:
    person_id: int
    keypoints: np.ndarray          # (K, 3): x, y, v  (v: 0 invisible, >0 visible)
    area: float
    bbox: Optional[tuple] = None
    iscrowd: int = 0

    def copy(self):
        return Annotation(self.person_id, self.keypoints.copy(), self.area,
                          self.bbox, self.iscrowd)

    def num_visible(self):
        return int((self.keypoints[:, 2] > 0).sum())


@dataclass
class TargetPyramid:
    heatmaps: list                 # per level: (K, h, w)
    masks: list                    # per level: (h, w), 1 = supervised
    tag_points: list = field(default_factory=list)  # per person: [(k, y, x), ...] at level 0


def make_targets(annos, level_resolutions, input_size, sigma=2.0, valid_mask=None):
    """Splat Gaussian targets for every level; record base-level tag indices.

    Keypoints are mapped by pure scaling with floor quantization; sigma is
    NOT rescaled per level. Off-grid keypoints contribute no target and no
    tag sample (masked, not errored).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = int(np.ceil(3 * sigma))
    span = np.arange(-radius, radius + 1)
    kernel = np.exp(-(span[:, None] ** 2 + span[None, :] ** 2) / (2.0 * sigma * sigma))
    num_k = annos[0].keypoints.shape[0] if annos else 0

    heatmaps, masks = [], []
    tag_points = []
    for li, res in enumerate(level_resolutions):
        scale = res / float(input_size)
        hm = np.zeros((num_k, res, res), dtype=np.float32)
        for anno in annos:
            pts = []
            for k in range(num_k):
                x, y, v = anno.keypoints[k]
                if v <= 0:
                    continue
                px = int(np.floor(x * scale))
                py = int(np.floor(y * scale))
                if not (0 <= px < res and 0 <= py < res):
                    continue
                y0, y1 = max(0, py - radius), min(res, py + radius + 1)
                x0, x1 = max(0, px - radius), min(res, px + radius + 1)
                ky0 = y0 - (py - radius)
                kx0 = x0 - (px - radius)
                patch = kernel[ky0:ky0 + (y1 - y0), kx0:kx0 + (x1 - x0)]
                np.maximum(hm[k, y0:y1, x0:x1], patch, out=hm[k, y0:y1, x0:x1])
                if li == 0:
                    pts.append((k, py, px))
            if li == 0:
                tag_points.append(pts)
        heatmaps.append(hm)
        if valid_mask is None:
            masks.append(np.ones((res, res), dtype=np.float32))
        else:
            src = valid_mask.shape[0]
            idx = np.clip(np.round((np.arange(res) + 0.5) * (src / res) - 0.5).astype(int), 0, src - 1)
            masks.append(valid_mask[np.ix_(idx, idx)].astype(np.float32))
    return TargetPyramid(heatmaps=heatmaps, masks=masks, tag_points=tag_points)


def heatmap_loss(pred_levels, target_levels, mask_levels=None):
    """Sum over levels of validity-masked MSE. Inputs are batched (N,K,h,w)."""
    if len(pred_levels) != len(target_levels):
        raise ag.ShapeError(
            f"level count mismatch: {len(pred_levels)} predictions vs "
            f"{len(target_levels)} targets")
    total = None
    for li, (pred, tgt) in enumerate(zip(pred_levels, target_levels)):
        tgt = np.asarray(tgt)
        if pred.data.shape != tgt.shape:
            raise ag.ShapeError(
                f"level {li} shape mismatch: pred {pred.data.shape} vs target {tgt.shape}")
        mask = None
        if mask_levels is not None:
            m = np.asarray(mask_levels[li])
            mask = m.reshape(m.shape[0], 1, m.shape[1], m.shape[2])
        term = ag.mse(pred, tgt, mask)
        total = term if total is None else total + term
    return total


def tag_loss(tagmap: Tensor, batch_tag_points):
    """Associative-embedding grouping loss on the base-resolution tagmap.

    Pull: per person, mean squared deviation of its keypoint tags from the
    person mean. Push: mean over ordered person pairs of exp(-d^2/2) between
    person-mean tags. Averaged over batch images; persons with no valid
    keypoints are skipped. Forward and analytic backward are hand-rolled.
    """
    d = tagmap.data
    n = d.shape[0]
    if len(batch_tag_points) != n:
        raise ag.ShapeError(f"tag point lists ({len(batch_tag_points)}) != batch size ({n})")
    grad = np.zeros_like(d)
    loss = 0.0
    for bi in range(n):
        persons = [p for p in batch_tag_points[bi] if len(p) > 0]
        m = len(persons)
        if m == 0:
            continue
        tags = [np.array([d[bi, k, y, x] for (k, y, x) in pts]) for pts in persons]
        means = np.array([t.mean() for t in tags])
        # pull
        for j, (pts, t) in enumerate(zip(persons, tags)):
            kj = len(pts)
            dev = t - means[j]
            loss += (dev * dev).mean() / (m * n)
            for (kk, yy, xx), dv in zip(pts, dev):
                grad[bi, kk, yy, xx] += 2.0 * dv / (kj * m * n)
        # push
        if m > 1:
            pairs = m * (m - 1)
            delta = means[:, None] - means[None, :]
            e = np.exp(-0.5 * delta * delta)
            np.fill_diagonal(e, 0.0)
            loss += e.sum() / (pairs * n)
            dmean = (e * -delta).sum(axis=1) * 2.0 / (pairs * n)
            for j, pts in enumerate(persons):
                kj = len(pts)
                for (kk, yy, xx) in pts:
                    grad[bi, kk, yy, xx] += dmean[j] / kj

    val = np.asarray(loss, dtype=d.dtype).reshape(())

    def bwd(g):
        if tagmap.requires_grad:
            tagmap.accumulate_grad((float(g.reshape(-1)[0]) * grad).astype(d.dtype))

    return ag._make(val, [tagmap], bwd)


def total_loss(hm_loss, tg_loss, heatmap_weight=1.0, tag_weight=1e-3):
    return hm_loss * heatmap_weight + tg_loss * tag_weight


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

def _affine_matrix(theta_deg, scale, tx, ty, in_center, out_center):
    th = np.deg2rad(theta_deg)
    c, s = np.cos(th) * scale, np.sin(th) * scale
    rot = np.array([[c, -s], [s, c]])
    shift = np.asarray(out_center) + np.array([tx, ty]) - rot @ np.asarray(in_center)
    return np.hstack([rot, shift[:, None]])


def augment(image, annos, rng, out_size, flip_index=None,
            rot_range=30.0, scale_range=(0.75, 1.5), trans_range=40.0,
            flip_prob=0.5, enabled=True):
    """One rotation+scale+translation affine (and coin-flip mirror) applied
    identically to pixels and keypoints; returns (image, annos, valid_mask).

    Keypoints leaving the crop are marked invisible (v=0), never dropped.
    """
    h, w = image.shape[:2]
    if enabled:
        theta = rng.uniform(-rot_range, rot_range)
        scale = rng.uniform(*scale_range)
        tx = rng.uniform(-trans_range, trans_range)
        ty = rng.uniform(-trans_range, trans_range)
        do_flip = flip_index is not None and rng.random() < flip_prob
    else:
        theta, scale, tx, ty, do_flip = 0.0, 1.0, 0.0, 0.0, False

    mat = _affine_matrix(theta, scale, tx, ty,
                         ((w - 1) / 2.0, (h - 1) / 2.0),
                         ((out_size - 1) / 2.0, (out_size - 1) / 2.0))
    identity = (not do_flip and theta == 0.0 and scale == 1.0 and tx == 0.0
                and ty == 0.0 and out_size == h and out_size == w)
    if identity:
        warped, mask = image.copy(), np.ones((h, w), dtype=bool)
    else:
        warped, mask = affine_warp(image, mat, out_size, out_size)

    out_annos = []
    for anno in annos:
        a = anno.copy()
        pts = a.keypoints
        xy = pts[:, :2] @ mat[:, :2].T + mat[:, 2]
        if do_flip:
            xy[:, 0] = out_size - 1 - xy[:, 0]
        newpts = np.column_stack([xy, pts[:, 2]])
        if do_flip:
            newpts = newpts[np.asarray(flip_index)]
        off = (newpts[:, 0] < 0) | (newpts[:, 0] > out_size - 1) | \
              (newpts[:, 1] < 0) | (newpts[:, 1] > out_size - 1)
        newpts[off, 2] = 0.0
        a.keypoints = newpts
        a.area = anno.area * scale * scale
        if anno.bbox is not None:
            bx, by, bw, bh = anno.bbox
            corners = np.array([[bx, by], [bx + bw, by], [bx, by + bh], [bx + bw, by + bh]])
            tc = corners @ mat[:, :2].T + mat[:, 2]
            if do_flip:
                tc[:, 0] = out_size - 1 - tc[:, 0]
            x0, y0 = tc.min(axis=0)
            x1, y1 = tc.max(axis=0)
            a.bbox = (float(x0), float(y0), float(x1 - x0), float(y1 - y0))
        out_annos.append(a)
    if do_flip:
        warped = warped[:, ::-1].copy()
        mask = mask[:, ::-1].copy()
    return warped, out_annos, mask.astype(np.float32)
