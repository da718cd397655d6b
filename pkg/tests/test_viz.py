"""PNG emission: gray levels, file naming, overlay pixels."""

import numpy as np
from PIL import Image

from posepyr.decode import Pose
from posepyr.viz import save_heatmap_png, save_pose_overlay, save_pyramid_pngs


def test_constant_heatmap_is_uniform_gray(tmp_path):
    path = tmp_path / "h.png"
    save_heatmap_png(np.full((8, 8), 0.5), str(path))
    arr = np.asarray(Image.open(path))
    assert arr.shape == (8, 8)
    assert np.all(arr == 128)   # round(0.5 * 255)


def test_heatmap_clipped_to_unit_range(tmp_path):
    path = tmp_path / "h.png"
    save_heatmap_png(np.array([[-1.0, 2.0]]), str(path))
    arr = np.asarray(Image.open(path))
    assert arr[0, 0] == 0 and arr[0, 1] == 255


def test_pyramid_file_layout(tmp_path):
    levels = [np.zeros((3, 4, 4)), np.zeros((3, 8, 8))]
    written = save_pyramid_pngs(levels, str(tmp_path), keypoint_indices=[0, 2])
    names = sorted(p.split("/")[-1] for p in written)
    assert names == ["level0_kp0.png", "level0_kp2.png",
                     "level1_kp0.png", "level1_kp2.png"]


def test_overlay_marks_keypoints(tmp_path):
    img = np.zeros((32, 32, 3), dtype=np.float32)
    kps = np.array([[10.0, 12.0, 0.9], [20.0, 25.0, 0.8]])
    pose = Pose(keypoints=kps, instance_score=0.85, tag_mean=0.0)
    path = tmp_path / "o.png"
    save_pose_overlay(img, [pose], str(path), skeleton=[(0, 1)])
    arr = np.asarray(Image.open(path))
    assert arr[12, 10].sum() > 0     # marker drawn at (x=10, y=12)
    assert arr[25, 20].sum() > 0
    mid = arr[(12 + 25) // 2, (10 + 20) // 2]
    assert mid.sum() > 0             # skeleton edge passes the midpoint
