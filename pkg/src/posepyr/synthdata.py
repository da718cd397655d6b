"""Deterministic stick-figure scene generator with scale and crowding knobs.

Each person is an articulated skeleton (head disk + limb segments) rendered
anti-aliased over a noise background. Annotations carry exact keypoint
coordinates, visibility (occluded joints stay visible-but-occluded), and
bbox-based area. Generation is per-image seeded, so splits are reproducible
and images are independent.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, asdict

import numpy as np
from PIL import Image

from .supervision import Annotation

KEYPOINT_NAMES_5 = ["head", "left_hand", "right_hand", "left_foot", "right_foot"]
FLIP_INDEX_5 = [0, 2, 1, 4, 3]
KEYPOINT_NAMES_17 = [
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
]
FLIP_INDEX_17 = [0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15]
DEFAULT_OKS_FALLOFF = 0.08


@dataclass
class SceneConfig:
    image_size: int = 128
    persons_min: int = 1
    persons_max: int = 3
    scale_min: float = 40.0       # person diagonal, px
    scale_max: float = 110.0
    crowding: float = 0.0
    num_keypoints: int = 5
    seed: int = 0

    def validate(self):
        if not (0.0 <= self.crowding <= 1.0):
            raise ValueError("crowding must lie in [0, 1]")
        if self.scale_max > self.image_size * 1.5:
            raise ValueError("scale_max too large for the image")
        if self.num_keypoints not in (5, 17):
            raise ValueError("num_keypoints must be 5 or 17")

    @property
    def flip_index(self):
        return FLIP_INDEX_5 if self.num_keypoints == 5 else FLIP_INDEX_17

    @property
    def keypoint_names(self):
        return KEYPOINT_NAMES_5 if self.num_keypoints == 5 else KEYPOINT_NAMES_17


@dataclass
class Dataset:
    config: SceneConfig
    images: list                  # HWC float32 in [0,1]
    annotations: list             # list[list[Annotation]]


def _draw_disk(img, cx, cy, radius, color):
    h, w = img.shape[:2]
    x0, x1 = max(0, int(cx - radius - 2)), min(w, int(cx + radius + 3))
    y0, y1 = max(0, int(cy - radius - 2)), min(h, int(cy + radius + 3))
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    alpha = np.clip(radius + 0.5 - dist, 0.0, 1.0)[..., None]
    img[y0:y1, x0:x1] = img[y0:y1, x0:x1] * (1 - alpha) + np.asarray(color) * alpha


def _draw_segment(img, p0, p1, radius, color):
    h, w = img.shape[:2]
    x0 = max(0, int(min(p0[0], p1[0]) - radius - 2))
    x1 = min(w, int(max(p0[0], p1[0]) + radius + 3))
    y0 = max(0, int(min(p0[1], p1[1]) - radius - 2))
    y1 = min(h, int(max(p0[1], p1[1]) + radius + 3))
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    d = np.array(p1, dtype=np.float64) - np.array(p0, dtype=np.float64)
    len2 = max(float(d @ d), 1e-9)
    t = np.clip(((xx - p0[0]) * d[0] + (yy - p0[1]) * d[1]) / len2, 0.0, 1.0)
    px = p0[0] + t * d[0]
    py = p0[1] + t * d[1]
    dist = np.sqrt((xx - px) ** 2 + (yy - py) ** 2)
    alpha = np.clip(radius + 0.5 - dist, 0.0, 1.0)[..., None]
    img[y0:y1, x0:x1] = img[y0:y1, x0:x1] * (1 - alpha) + np.asarray(color) * alpha


def _skeleton_5(rng, center, diag):
    """Joint positions for the 5-keypoint figure; returns (keypoints, parts).

    `parts` is a list of (p0, p1, radius) segments plus the head disk used
    both for rendering and occlusion checks.
    """
    cx, cy = center
    tilt = rng.uniform(-0.25, 0.25)
    torso = 0.38 * diag
    neck = np.array([cx - np.sin(tilt) * torso / 2, cy - np.cos(tilt) * torso / 2])
    pelvis = np.array([cx + np.sin(tilt) * torso / 2, cy + np.cos(tilt) * torso / 2])
    head_r = 0.09 * diag
    head = neck + np.array([np.sin(tilt), -np.cos(tilt)]) * (head_r + 0.04 * diag)
    arm = 0.30 * diag
    leg = 0.34 * diag
    ang_l = rng.uniform(0.3, 1.3)
    ang_r = rng.uniform(0.3, 1.3)
    hand_l = neck + arm * np.array([-np.sin(ang_l), np.cos(ang_l) * 0.6 + 0.4])
    hand_r = neck + arm * np.array([np.sin(ang_r), np.cos(ang_r) * 0.6 + 0.4])
    lg_l = rng.uniform(-0.5, 0.1)
    lg_r = rng.uniform(-0.1, 0.5)
    foot_l = pelvis + leg * np.array([np.sin(lg_l) - 0.15, np.cos(lg_l) * 0.5 + 0.5])
    foot_r = pelvis + leg * np.array([np.sin(lg_r) + 0.15, np.cos(lg_r) * 0.5 + 0.5])
    thick = max(1.2, 0.035 * diag)
    parts = [
        ("segment", neck, pelvis, thick * 1.6),
        ("segment", neck, hand_l, thick),
        ("segment", neck, hand_r, thick),
        ("segment", pelvis, foot_l, thick),
        ("segment", pelvis, foot_r, thick),
        ("disk", head, None, head_r),
    ]
    kps = np.stack([head, hand_l, hand_r, foot_l, foot_r])
    return kps, parts


def _skeleton_17(rng, center, diag):
    kps5, parts = _skeleton_5(rng, center, diag)
    head, hand_l, hand_r, foot_l, foot_r = kps5
    neck = parts[0][1]
    pelvis = parts[0][2]
    head_r = parts[-1][3]
    nose = head
    eye_l = head + np.array([-0.35, -0.15]) * head_r
    eye_r = head + np.array([0.35, -0.15]) * head_r
    ear_l = head + np.array([-0.9, 0.0]) * head_r
    ear_r = head + np.array([0.9, 0.0]) * head_r
    sh_off = 0.12 * diag
    shoulder_l = neck + np.array([-sh_off, 0.0])
    shoulder_r = neck + np.array([sh_off, 0.0])
    elbow_l = 0.5 * (shoulder_l + hand_l)
    elbow_r = 0.5 * (shoulder_r + hand_r)
    hip_l = pelvis + np.array([-sh_off * 0.8, 0.0])
    hip_r = pelvis + np.array([sh_off * 0.8, 0.0])
    knee_l = 0.5 * (hip_l + foot_l)
    knee_r = 0.5 * (hip_r + foot_r)
    kps = np.stack([nose, eye_l, eye_r, ear_l, ear_r,
                    shoulder_l, shoulder_r, elbow_l, elbow_r, hand_l, hand_r,
                    hip_l, hip_r, knee_l, knee_r, foot_l, foot_r])
    return kps, parts


def _covered(pt, parts):
    x, y = pt
    for kind, p0, p1, radius in parts:
        if kind == "disk":
            if (x - p0[0]) ** 2 + (y - p0[1]) ** 2 <= radius ** 2:
                return True
        else:
            d = np.array(p1) - np.array(p0)
            len2 = max(float(d @ d), 1e-9)
            t = np.clip(((x - p0[0]) * d[0] + (y - p0[1]) * d[1]) / len2, 0.0, 1.0)
            if (x - p0[0] - t * d[0]) ** 2 + (y - p0[1] - t * d[1]) ** 2 <= radius ** 2:
                return True
    return False


def generate_scene(config: SceneConfig, index: int):
    config.validate()
    rng = np.random.default_rng([config.seed, index])
    s = config.image_size
    img = rng.uniform(0.05, 0.30, (s, s, 3)).astype(np.float32)

    n_persons = int(rng.integers(config.persons_min, config.persons_max + 1))
    anchor = rng.uniform(0.3 * s, 0.7 * s, 2)
    margin = 2.0

    persons = []
    for pid in range(n_persons):
        diag = rng.uniform(config.scale_min, config.scale_max)
        half_w = 0.45 * diag
        half_h = 0.62 * diag
        lo_x, hi_x = margin + half_w, s - margin - half_w
        lo_y, hi_y = margin + half_h, s - margin - half_h
        if lo_x >= hi_x or lo_y >= hi_y:
            diag = min(diag, (s - 2 * margin) / 1.4)
            half_w, half_h = 0.45 * diag, 0.62 * diag
            lo_x, hi_x = margin + half_w, s - margin - half_w
            lo_y, hi_y = margin + half_h, s - margin - half_h
        u = rng.uniform([lo_x, lo_y], [hi_x, hi_y])
        center = (1.0 - config.crowding) * u + config.crowding * np.clip(
            anchor, [lo_x, lo_y], [hi_x, hi_y])
        maker = _skeleton_5 if config.num_keypoints == 5 else _skeleton_17
        kps, parts = maker(rng, center, diag)
        color = rng.uniform(0.45, 1.0, 3)
        persons.append({"kps": kps, "parts": parts, "color": color, "pid": pid})

    for p in persons:
        for kind, p0, p1, radius in p["parts"]:
            if kind == "disk":
                _draw_disk(img, p0[0], p0[1], radius, p["color"])
            else:
                _draw_segment(img, p0, p1, radius, p["color"])

    annos = []
    for i, p in enumerate(persons):
        kps = p["kps"]
        vis = np.full(len(kps), 2.0)
        for ki, pt in enumerate(kps):
            for later in persons[i + 1:]:
                if _covered(pt, later["parts"]):
                    vis[ki] = 1.0
                    break
        pts = np.array([[pt for kind, a, b, r in p["parts"] for pt in
                         ([a] if kind == "disk" else [a, b])]]).reshape(-1, 2)
        rad = max(r for _, _, _, r in p["parts"])
        x0 = max(0.0, pts[:, 0].min() - rad)
        y0 = max(0.0, pts[:, 1].min() - rad)
        x1 = min(float(s), pts[:, 0].max() + rad)
        y1 = min(float(s), pts[:, 1].max() + rad)
        bbox = (x0, y0, x1 - x0, y1 - y0)
        annos.append(Annotation(
            person_id=p["pid"],
            keypoints=np.column_stack([kps, vis]),
            area=float(bbox[2] * bbox[3]),
            bbox=bbox))
    np.clip(img, 0.0, 1.0, out=img)
    return img, annos


def generate_split(config: SceneConfig, n_images: int) -> Dataset:
    images, annos = [], []
    for i in range(n_images):
        img, ann = generate_scene(config, i)
        images.append(img)
        annos.append(ann)
    return Dataset(config=config, images=images, annotations=annos)


# ---------------------------------------------------------------------------
# export / import
# ---------------------------------------------------------------------------

def export(dataset: Dataset, path):
    """Write PNG images plus a COCO-keypoint annotation JSON."""
    cfg = dataset.config
    img_dir = os.path.join(path, "images")
    try:
        os.makedirs(img_dir, exist_ok=True)
        images, annotations = [], []
        ann_id = 1
        for i, (img, annos) in enumerate(zip(dataset.images, dataset.annotations)):
            fname = f"img_{i:06d}.png"
            arr = np.clip(img * 255.0 + 0.5, 0, 255).astype(np.uint8)
            Image.fromarray(arr).save(os.path.join(img_dir, fname))
            h, w = img.shape[:2]
            images.append({"id": i, "file_name": fname, "width": w, "height": h})
            for a in annos:
                annotations.append({
                    "id": ann_id,
                    "image_id": i,
                    "category_id": 1,
                    "keypoints": [float(v) for v in a.keypoints.reshape(-1)],
                    "num_keypoints": int((a.keypoints[:, 2] > 0).sum()),
                    "area": float(a.area),
                    "bbox": [float(v) for v in a.bbox] if a.bbox else None,
                    "iscrowd": int(a.iscrowd),
                })
                ann_id += 1
        doc = {
            "images": images,
            "annotations": annotations,
            "categories": [{
                "id": 1, "name": "person",
                "keypoints": list(cfg.keypoint_names),
                "skeleton": [],
            }],
            "posepyr_meta": {
                "scene_config": asdict(cfg),
                "flip_index": list(cfg.flip_index),
                "oks_falloff": [DEFAULT_OKS_FALLOFF] * cfg.num_keypoints,
            },
        }
        fd, tmp = tempfile.mkstemp(dir=path, suffix=".json.tmp")
        with os.fdopen(fd, "w") as f:
            json.dump(doc, f)
        os.replace(tmp, os.path.join(path, "annotations.json"))
    except OSError as e:
        raise OSError(f"failed to export dataset to {path}: {e}") from e


def load_dataset(path):
    """Re-ingest an exported dataset; returns (images, annos, meta).

    `images` are HWC float32 in [0,1]; `annos` mirror the Annotation lists.
    """
    ann_path = os.path.join(path, "annotations.json")
    try:
        with open(ann_path) as f:
            doc = json.load(f)
    except OSError as e:
        raise OSError(f"failed to read annotations from {ann_path}: {e}") from e
    images, annos = [], []
    by_image = {}
    for ann in doc["annotations"]:
        by_image.setdefault(ann["image_id"], []).append(ann)
    for rec in sorted(doc["images"], key=lambda r: r["id"]):
        img_path = os.path.join(path, "images", rec["file_name"])
        arr = np.asarray(Image.open(img_path), dtype=np.float32) / 255.0
        images.append(arr)
        ann_list = []
        for j, ann in enumerate(by_image.get(rec["id"], [])):
            kp = np.asarray(ann["keypoints"], dtype=np.float64).reshape(-1, 3)
            ann_list.append(Annotation(
                person_id=j, keypoints=kp, area=float(ann["area"]),
                bbox=tuple(ann["bbox"]) if ann.get("bbox") else None,
                iscrowd=int(ann.get("iscrowd", 0))))
        annos.append(ann_list)
    meta = doc.get("posepyr_meta", {})
    meta["image_ids"] = [rec["id"] for rec in sorted(doc["images"], key=lambda r: r["id"])]
    return images, annos, meta
