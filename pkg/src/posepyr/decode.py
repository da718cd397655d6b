"""Inference pipeline: heatmap aggregation, peak extraction, tag grouping.

All functions here are pure and operate on plain numpy arrays (detached from
the autograd tape).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor, no_grad
from .imaging import resize_image


@dataclass
class KeypointCandidate:
    k: int
    x: float
    y: float
    score: float
    tag: float


@dataclass
class Pose:
    keypoints: np.ndarray      # (K, 3): x, y, score; score 0 = absent
    instance_score: float
    tag_mean: float

    def present(self):
        return self.keypoints[:, 2] > 0


def _upsample_np(arr, out_h, out_w):
    t = Tensor(arr.reshape((1,) + arr.shape))
    return ag.bilinear_upsample(t, out_h, out_w).data[0]


def aggregate(levels, out_size):
    """Bilinearly upsample every level to out_size and average them."""
    if len(levels) == 0:
        raise ValueError("aggregate needs at least one level")
    if isinstance(out_size, int):
        out_size = (out_size, out_size)
    acc = None
    for lv in levels:
        lv = lv.data if isinstance(lv, Tensor) else np.asarray(lv)
        up = _upsample_np(lv, out_size[0], out_size[1])
        acc = up if acc is None else acc + up
    return acc / len(levels)


def flip_merge(heatmaps, heatmaps_flipped, flip_index):
    """Average a prediction with the un-mirrored prediction of the mirrored image."""
    if heatmaps.shape != heatmaps_flipped.shape:
        raise ValueError(f"flip_merge shape mismatch: {heatmaps.shape} vs {heatmaps_flipped.shape}")
    unflipped = heatmaps_flipped[np.asarray(flip_index)][:, :, ::-1]
    return 0.5 * (heatmaps + unflipped)


def extract_peaks(agg, tagmap_up, max_per_type=30, threshold=0.1):
    """3x3-NMS local maxima per keypoint type with +-0.25 px refinement.

    Candidate coordinates are heatmap-grid indices (sub-pixel); tags are read
    at the integer peak. Score ties break by (y, x) order for determinism.
    """
    if agg.shape[1:] != tagmap_up.shape[1:]:
        raise ValueError(f"heatmap/tag spatial mismatch: {agg.shape} vs {tagmap_up.shape}")
    num_k, h, w = agg.shape
    padded = np.pad(agg, ((0, 0), (1, 1), (1, 1)), constant_values=-np.inf)
    neigh = np.full_like(agg, -np.inf)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            np.maximum(neigh, padded[:, 1 + dy:1 + dy + h, 1 + dx:1 + dx + w], out=neigh)
    is_peak = (agg > neigh) & (agg > threshold)

    cands = []
    for k in range(num_k):
        ys, xs = np.nonzero(is_peak[k])
        if len(ys) == 0:
            continue
        scores = agg[k, ys, xs]
        order = np.lexsort((xs, ys, -scores))[:max_per_type]
        for i in order:
            y, x = int(ys[i]), int(xs[i])
            fx, fy = float(x), float(y)
            if 0 < x < w - 1:
                fx += 0.25 * np.sign(agg[k, y, x + 1] - agg[k, y, x - 1])
            if 0 < y < h - 1:
                fy += 0.25 * np.sign(agg[k, y + 1, x] - agg[k, y - 1, x])
            cands.append(KeypointCandidate(k=k, x=fx, y=fy,
                                           score=float(scores[i]),
                                           tag=float(tagmap_up[k, y, x])))
    return cands


def group(candidates, num_keypoints, tag_threshold=1.0, optimal=False):
    """Greedy tag grouping: types in fixed order, candidates by descending
    score; a candidate joins the pose with nearest tag mean (< threshold,
    type still free) else seeds a new pose.
    """
    poses = []  # each: dict(kps=(K,3) array, tags=[...])
    for k in range(num_keypoints):
        group_c = sorted((c for c in candidates if c.k == k),
                         key=lambda c: (-c.score, c.y, c.x))
        if optimal and poses and group_c:
            _assign_optimal(poses, group_c, k, num_keypoints, tag_threshold)
            continue
        for c in group_c:
            best = None
            best_d = tag_threshold
            for p in poses:
                if p["kps"][k, 2] > 0:
                    continue
                dist = abs(c.tag - p["tag_mean"])
                if dist < best_d:
                    best, best_d = p, dist
            if best is None:
                best = {"kps": np.zeros((num_keypoints, 3)), "tags": [], "tag_mean": 0.0}
                poses.append(best)
            best["kps"][k] = (c.x, c.y, c.score)
            best["tags"].append(c.tag)
            best["tag_mean"] = float(np.mean(best["tags"]))

    out = []
    for p in poses:
        present = p["kps"][:, 2] > 0
        if not present.any():
            continue
        out.append(Pose(keypoints=p["kps"],
                        instance_score=float(p["kps"][present, 2].mean()),
                        tag_mean=p["tag_mean"]))
    return out


def _assign_optimal(poses, group_c, k, num_keypoints, tag_threshold):
    """Per-type optimal assignment (Hungarian on tag distance)."""
    from scipy.optimize import linear_sum_assignment

    free = [p for p in poses if p["kps"][k, 2] == 0]
    big = 1e9
    cost = np.full((len(group_c), len(free) + len(group_c)), big)
    for i, c in enumerate(group_c):
        for j, p in enumerate(free):
            d = abs(c.tag - p["tag_mean"])
            if d < tag_threshold:
                cost[i, j] = d
        cost[i, len(free) + i] = tag_threshold  # seed a new pose
    rows, cols = linear_sum_assignment(cost)
    for i, j in zip(rows, cols):
        c = group_c[i]
        if j < len(free):
            p = free[j]
        else:
            p = {"kps": np.zeros((num_keypoints, 3)), "tags": [], "tag_mean": 0.0}
            poses.append(p)
        p["kps"][k] = (c.x, c.y, c.score)
        p["tags"].append(c.tag)
        p["tag_mean"] = float(np.mean(p["tags"]))


# ---------------------------------------------------------------------------
# full image pipeline
# ---------------------------------------------------------------------------

@dataclass
class DecodeConfig:
    flip: bool = True
    scales: tuple = (1.0,)
    max_per_type: int = 30
    score_threshold: float = 0.1
    tag_threshold: float = 1.0
    optimal_grouping: bool = False


def _to_input(img):
    # HWC [0,1] float -> 1x3xHxW in [-1, 1]
    x = np.ascontiguousarray(img.transpose(2, 0, 1)[None]) * 2.0 - 1.0
    return x


def _forward_maps(model, img, flip, flip_index):
    """Run the network (optionally with flip merging); returns per-level
    heatmaps plus the base tagmap, all as (C,h,w) arrays."""
    with no_grad():
        pyr = model.forward(_to_input(img).astype(model.config.np_dtype))
        levels = [lv.data[0] for lv in pyr.levels]
        tags = pyr.tagmap.data[0]
        if flip:
            pyr_f = model.forward(_to_input(img[:, ::-1].copy()).astype(model.config.np_dtype))
            levels = [flip_merge(lv, lf.data[0], flip_index)
                      for lv, lf in zip(levels, pyr_f.levels)]
    return levels, tags


def decode_image(model, image, flip_index, cfg: DecodeConfig, input_size=None):
    """Single- or multi-scale inference on one HWC image in [0,1].

    Returns poses in original-image pixel coordinates. The aggregated
    heatmap is averaged over scales; tags come from scale 1.0 only.
    """
    model.eval()
    orig_h, orig_w = image.shape[:2]
    base = input_size or model.config.input_size
    div = 4 * 2 ** model.config.num_deconv_modules

    acc = None
    tag_up = None
    scales = tuple(cfg.scales) or (1.0,)
    for s in scales:
        short = int(round(base * s))
        if orig_h <= orig_w:
            rh = short
            rw = int(round(orig_w * short / orig_h))
        else:
            rw = short
            rh = int(round(orig_h * short / orig_w))
        rh = max(div, (rh // div) * div)
        rw = max(div, (rw // div) * div)
        img_s = resize_image(image, rh, rw) if (rh, rw) != (orig_h, orig_w) else image
        levels, tags = _forward_maps(model, img_s, cfg.flip, flip_index)
        agg = aggregate(levels, (rh, rw))
        # resample the aggregate onto the original pixel grid
        agg_o = _upsample_or_resize(agg, orig_h, orig_w)
        acc = agg_o if acc is None else acc + agg_o
        if abs(s - 1.0) < 1e-9 or tag_up is None:
            tag_up = _upsample_or_resize(tags, orig_h, orig_w)
    acc = acc / len(scales)

    cands = extract_peaks(acc, tag_up, cfg.max_per_type, cfg.score_threshold)
    # center-of-bin compensation for the floor quantization used in training
    for c in cands:
        c.x += 0.5
        c.y += 0.5
    poses = group(cands, model.config.num_keypoints, cfg.tag_threshold, cfg.optimal_grouping)
    return poses


def _upsample_or_resize(maps, out_h, out_w):
    h, w = maps.shape[1:]
    if (h, w) == (out_h, out_w):
        return maps
    if out_h >= h and out_w >= w:
        return _upsample_np(maps, out_h, out_w)
    return resize_image(maps.transpose(1, 2, 0), out_h, out_w).transpose(2, 0, 1)


def multi_scale_infer(model, image, scales, flip_index, cfg: DecodeConfig = None):
    cfg = cfg or DecodeConfig()
    cfg = DecodeConfig(flip=cfg.flip, scales=tuple(scales),
                       max_per_type=cfg.max_per_type,
                       score_threshold=cfg.score_threshold,
                       tag_threshold=cfg.tag_threshold,
                       optimal_grouping=cfg.optimal_grouping)
    return decode_image(model, image, flip_index, cfg)


def poses_to_results(poses, image_id):
    """COCO-keypoint result records for one image."""
    out = []
    for p in poses:
        out.append({
            "image_id": int(image_id),
            "category_id": 1,
            "keypoints": [float(v) for v in p.keypoints.reshape(-1)],
            "score": float(p.instance_score),
        })
    return out
