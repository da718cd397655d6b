"""Keypoint similarity scoring and COCO-protocol AP/AR evaluation.

Matching is greedy in prediction-score order per image per threshold;
precision/recall are integrated with 101-point interpolation; AP is the mean
over OKS thresholds 0.50:0.05:0.95. Medium/large partitions follow the
32^2/96^2 area convention. Crowd ground truths are ignore regions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

OKS_THRESHOLDS = np.round(np.arange(0.50, 0.951, 0.05), 2)
AREA_RANGES = {
    "all": (0.0, 1e10),
    "medium": (32.0 ** 2, 96.0 ** 2),
    "large": (96.0 ** 2, 1e10),
}
RECALL_LEVELS = np.linspace(0.0, 1.0, 101)
MAX_DETS = 20


class EvalError(ValueError):
    pass


def oks(pred_keypoints, gt_keypoints, gt_area, falloff):
    """Object keypoint similarity between one prediction and one ground truth.

    Only visible ground-truth keypoints enter the sums. `falloff` is the
    per-keypoint constant array (length K).
    """
    gt = np.asarray(gt_keypoints, dtype=np.float64)
    pr = np.asarray(pred_keypoints, dtype=np.float64)
    kk = np.asarray(falloff, dtype=np.float64)
    vis = gt[:, 2] > 0
    if not vis.any():
        raise EvalError("OKS undefined for ground truth with zero visible keypoints")
    if gt_area <= 0:
        raise EvalError("OKS requires positive ground-truth area")
    d2 = (pr[vis, 0] - gt[vis, 0]) ** 2 + (pr[vis, 1] - gt[vis, 1]) ** 2
    e = d2 / (2.0 * gt_area * kk[vis] ** 2)
    return float(np.mean(np.exp(-e)))


def _pred_area(keypoints):
    # bbox area of the predicted keypoint extent (COCO loadRes convention)
    kp = np.asarray(keypoints, dtype=np.float64)
    present = kp[:, 2] > 0
    pts = kp[present] if present.any() else kp
    x0, y0 = pts[:, 0].min(), pts[:, 1].min()
    x1, y1 = pts[:, 0].max(), pts[:, 1].max()
    return float((x1 - x0) * (y1 - y0))


@dataclass
class EvalReport:
    ap: float
    ap50: float
    ap75: float
    ap_medium: float
    ap_large: float
    ar: float
    precision_tables: dict = field(default_factory=dict)   # range -> (T, 101) array
    match_log: list = field(default_factory=list)

    def to_dict(self):
        return {
            "AP": self.ap, "AP50": self.ap50, "AP75": self.ap75,
            "AP_M": self.ap_medium, "AP_L": self.ap_large, "AR": self.ar,
        }

    def __str__(self):
        d = self.to_dict()
        return " | ".join(f"{k}={v:.4f}" for k, v in d.items())


def _match_image(pred_list, gt_list, falloff, thr_count, area_range, log=None,
                 image_id=None):
    """Greedy matching for one image across all thresholds.

    Returns (scores, tp, ignore) arrays of shape (T, D) plus the number of
    non-ignored gts.
    """
    gts = sorted(gt_list, key=lambda g: _gt_ignored(g, area_range))
    preds = sorted(pred_list, key=lambda p: -p["score"])[:MAX_DETS]
    n_gt_valid = sum(not _gt_ignored(g, area_range) for g in gts)
    d = len(preds)
    scores = np.array([p["score"] for p in preds])
    tp = np.zeros((thr_count, d), dtype=bool)
    ignore = np.zeros((thr_count, d), dtype=bool)

    oks_mat = np.zeros((d, len(gts)))
    for i, p in enumerate(preds):
        kp = np.asarray(p["keypoints"], dtype=np.float64).reshape(-1, 3)
        for j, g in enumerate(gts):
            gkp = np.asarray(g["keypoints"], dtype=np.float64).reshape(-1, 3)
            if (gkp[:, 2] > 0).any() and g["area"] > 0:
                oks_mat[i, j] = oks(kp, gkp, g["area"], falloff)

    for ti, thr in enumerate(OKS_THRESHOLDS[:thr_count]):
        matched = set()
        for i, p in enumerate(preds):
            best, best_oks = -1, float(thr)
            for j, g in enumerate(gts):
                if j in matched:
                    continue
                # once settled on a real gt, never trade down to an ignore region
                if best > -1 and not _gt_ignored(gts[best], area_range) and _gt_ignored(g, area_range):
                    break
                if oks_mat[i, j] >= best_oks:
                    best, best_oks = j, oks_mat[i, j]
            if best > -1:
                matched.add(best)
                if _gt_ignored(gts[best], area_range):
                    ignore[ti, i] = True
                else:
                    tp[ti, i] = True
                if log is not None and ti == 0:
                    log.append({"image_id": image_id, "pred_index": i,
                                "gt_id": gts[best].get("id"), "oks": oks_mat[i, best]})
            else:
                lo, hi = area_range
                a = _pred_area(np.asarray(p["keypoints"]).reshape(-1, 3))
                if not (lo < a <= hi):
                    ignore[ti, i] = True
    return scores, tp, ignore, n_gt_valid


def _gt_ignored(g, area_range):
    lo, hi = area_range
    if g.get("iscrowd", 0):
        return True
    if not (lo < g["area"] <= hi):
        return True
    gkp = np.asarray(g["keypoints"], dtype=np.float64).reshape(-1, 3)
    return not (gkp[:, 2] > 0).any()


def _accumulate(scores, tp, ignore, n_gt):
    """(T,101) interpolated precision table + per-threshold final recall."""
    t = tp.shape[0]
    prec = np.zeros((t, len(RECALL_LEVELS)))
    recall = np.zeros(t)
    if len(scores):
        order = np.argsort(-scores, kind="mergesort")
        tp = tp[:, order]
        ignore = ignore[:, order]
    for ti in range(t):
        keep = ~ignore[ti]
        tps = np.cumsum(tp[ti][keep])
        fps = np.cumsum(~tp[ti][keep])
        if n_gt == 0:
            continue
        rc = tps / n_gt
        pr = tps / np.maximum(tps + fps, 1e-12)
        recall[ti] = rc[-1] if len(rc) else 0.0
        # precision envelope (monotone non-increasing from the right)
        for i in range(len(pr) - 1, 0, -1):
            pr[i - 1] = max(pr[i - 1], pr[i])
        idx = np.searchsorted(rc, RECALL_LEVELS, side="left")
        valid = idx < len(pr)
        prec[ti, valid] = pr[idx[valid]]
    return prec, recall


def evaluate(preds_by_image, gts_by_image, falloff, area_ranges=None) -> EvalReport:
    """COCO-style evaluation.

    `preds_by_image` / `gts_by_image`: dict image_id -> list of records with
    keys keypoints/score and keypoints/area/iscrowd respectively.
    """
    area_ranges = area_ranges or AREA_RANGES
    thr_count = len(OKS_THRESHOLDS)
    image_ids = sorted(set(gts_by_image) | set(preds_by_image))
    match_log = []

    tables = {}
    recalls = {}
    for rname, rng in area_ranges.items():
        all_scores, all_tp, all_ig = [], [], []
        total_gt = 0
        for iid in image_ids:
            log = match_log if rname == "all" else None
            s, tp, ig, n_gt = _match_image(
                preds_by_image.get(iid, []), gts_by_image.get(iid, []),
                falloff, thr_count, rng, log=log, image_id=iid)
            all_scores.append(s)
            all_tp.append(tp)
            all_ig.append(ig)
            total_gt += n_gt
        scores = np.concatenate(all_scores) if all_scores else np.zeros(0)
        tp = np.concatenate(all_tp, axis=1) if all_tp else np.zeros((thr_count, 0), bool)
        ig = np.concatenate(all_ig, axis=1) if all_ig else np.zeros((thr_count, 0), bool)
        prec, recall = _accumulate(scores, tp, ig, total_gt)
        tables[rname] = prec
        recalls[rname] = recall

    def ap_of(name, ti=None):
        p = tables[name]
        if ti is None:
            return float(p.mean())
        return float(p[ti].mean())

    t50 = int(np.argmin(np.abs(OKS_THRESHOLDS - 0.50)))
    t75 = int(np.argmin(np.abs(OKS_THRESHOLDS - 0.75)))
    return EvalReport(
        ap=ap_of("all"),
        ap50=ap_of("all", t50),
        ap75=ap_of("all", t75),
        ap_medium=ap_of("medium") if "medium" in tables else 0.0,
        ap_large=ap_of("large") if "large" in tables else 0.0,
        ar=float(recalls["all"].mean()),
        precision_tables=tables,
        match_log=match_log,
    )


# ---------------------------------------------------------------------------
# COCO-format ingestion
# ---------------------------------------------------------------------------

def load_coco_annotations(path):
    """Read a COCO-keypoint annotation JSON; returns (gts_by_image, meta)."""
    with open(path) as f:
        data = json.load(f)
    gts = {img["id"]: [] for img in data.get("images", [])}
    for ann in data.get("annotations", []):
        gts.setdefault(ann["image_id"], []).append(ann)
    meta = data.get("posepyr_meta", {})
    meta.setdefault("images", data.get("images", []))
    return gts, meta


def load_results(path):
    with open(path) as f:
        results = json.load(f)
    by_image = {}
    for r in results:
        by_image.setdefault(r["image_id"], []).append(r)
    return by_image
