"""PNG emission for heatmaps and pose overlays (no interactive component)."""

import os

import numpy as np
from PIL import Image, ImageDraw


def save_heatmap_png(heatmap, path):
    """One keypoint-type heatmap as grayscale, clipped to [0, 1]."""
    arr = np.clip(np.asarray(heatmap, dtype=np.float64), 0.0, 1.0)
    img = Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8), mode="L")
    _atomic_save(img, path)


def save_pyramid_pngs(levels, out_dir, keypoint_indices=None):
    """Per-level, per-keypoint grayscale PNGs; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for li, lv in enumerate(levels):
        lv = np.asarray(lv)
        ks = keypoint_indices if keypoint_indices is not None else range(lv.shape[0])
        for k in ks:
            path = os.path.join(out_dir, f"level{li}_kp{k}.png")
            save_heatmap_png(lv[k], path)
            written.append(path)
    return written


def save_pose_overlay(image, poses, path, skeleton=None):
    """Draw predicted keypoints (and optional skeleton edges) over the image."""
    arr = np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    img = Image.fromarray(arr)
    draw = ImageDraw.Draw(img)
    colors = [(255, 64, 64), (64, 255, 64), (64, 128, 255), (255, 255, 0),
              (255, 0, 255), (0, 255, 255)]
    for pi, pose in enumerate(poses):
        color = colors[pi % len(colors)]
        kps = pose.keypoints
        present = kps[:, 2] > 0
        if skeleton:
            for a, b in skeleton:
                if present[a] and present[b]:
                    draw.line([tuple(kps[a, :2]), tuple(kps[b, :2])], fill=color, width=2)
        for k in np.nonzero(present)[0]:
            x, y = kps[k, :2]
            draw.ellipse([x - 2, y - 2, x + 2, y + 2], fill=color)
    _atomic_save(img, path)


def _atomic_save(img, path):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    tmp = path + ".tmp"
    try:
        img.save(tmp, format="PNG")
        os.replace(tmp, path)
    except OSError as e:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"failed to write {path}: {e}") from e
