"""OKS and AP/AR against hand-computed fixtures and protocol invariances."""

import numpy as np
import pytest

from posepyr.evaluation import (AREA_RANGES, EvalError, OKS_THRESHOLDS,
                                evaluate, oks)

K3 = np.full(3, 0.08)


def _kps(pts, v=2.0):
    return [c for (x, y) in pts for c in (x, y, v)]


def _gt(pts, area, v=2.0, iscrowd=0, gid=0):
    return {"keypoints": _kps(pts, v), "area": area, "iscrowd": iscrowd, "id": gid}


def _pred(pts, score, image_id=0):
    return {"image_id": image_id, "keypoints": _kps(pts), "score": score}


# ---------------------------------------------------------------------------
# OKS
# ---------------------------------------------------------------------------

def test_oks_perfect_is_one():
    pts = [(10.0, 10.0), (20.0, 10.0), (15.0, 20.0)]
    assert oks(np.array(_kps(pts)).reshape(-1, 3),
               np.array(_kps(pts)).reshape(-1, 3), 1000.0, K3) == pytest.approx(1.0)


def test_oks_unit_exponent():
    # displace every keypoint so d^2 = 2 * area * k^2 -> OKS = exp(-1)
    area = 1000.0
    d = np.sqrt(2 * area * 0.08 ** 2)
    gt = np.array([[10.0, 10.0, 2.0]])
    pr = np.array([[10.0 + d, 10.0, 2.0]])
    assert oks(pr, gt, area, np.array([0.08])) == pytest.approx(np.exp(-1.0), rel=1e-12)


def test_oks_ignores_invisible_keypoints():
    gt = np.array([[10.0, 10.0, 2.0], [50.0, 50.0, 0.0]])
    pr = np.array([[10.0, 10.0, 2.0], [999.0, 999.0, 2.0]])
    assert oks(pr, gt, 100.0, np.full(2, 0.08)) == pytest.approx(1.0)


def test_oks_scale_consistency():
    gt = np.array([[10.0, 10.0, 2.0], [20.0, 15.0, 2.0]])
    pr = gt + np.array([[1.0, -2.0, 0.0], [0.5, 1.0, 0.0]])
    base = oks(pr, gt, 300.0, np.full(2, 0.08))
    c = 3.7
    scaled = oks(pr * [c, c, 1.0], gt * [c, c, 1.0], 300.0 * c * c, np.full(2, 0.08))
    assert scaled == pytest.approx(base, rel=1e-12)


def test_oks_strictly_decreasing_in_distance():
    gt = np.array([[10.0, 10.0, 2.0]])
    prev = 1.0
    for d in (1.0, 2.0, 4.0, 8.0):
        cur = oks(np.array([[10.0 + d, 10.0, 2.0]]), gt, 100.0, np.array([0.08]))
        assert cur < prev
        prev = cur


def test_oks_rejects_degenerate_inputs():
    gt_novis = np.array([[1.0, 1.0, 0.0]])
    with pytest.raises(EvalError):
        oks(gt_novis, gt_novis, 10.0, np.array([0.08]))
    gt = np.array([[1.0, 1.0, 2.0]])
    with pytest.raises(EvalError):
        oks(gt, gt, 0.0, np.array([0.08]))


# ---------------------------------------------------------------------------
# hand-computed AP fixture
# ---------------------------------------------------------------------------

AREA = 2000.0   # medium bin: (32^2, 96^2]
GT1 = [(10.0, 10.0), (20.0, 10.0), (15.0, 20.0)]
GT2 = [(80.0, 80.0), (90.0, 80.0), (85.0, 90.0)]


def _fixture(dup=False):
    # pred B displaced so OKS(B, gt2) = 0.575 exactly:
    # every keypoint moved by d with d^2 = -2 * area * k^2 * ln(0.575)
    d = np.sqrt(-2.0 * AREA * 0.08 ** 2 * np.log(0.575))
    pred_b = [(x + d, y) for (x, y) in GT2]
    preds = [_pred(GT1, 0.9), _pred(pred_b, 0.8)]
    if dup:
        preds.insert(1, _pred(GT1, 0.85))
    gts = [_gt(GT1, AREA, gid=1), _gt(GT2, AREA, gid=2)]
    return {0: preds}, {0: gts}


def test_ap_fixture_hand_computed():
    preds, gts = _fixture()
    rep = evaluate(preds, gts, K3)
    # thresholds 0.50/0.55: both matched -> AP 1; the other eight: only the
    # perfect prediction matches -> 51 of 101 recall levels at precision 1
    expected_ap = (2 * 1.0 + 8 * (51 / 101)) / 10
    assert rep.ap == pytest.approx(expected_ap, abs=1e-9)
    assert rep.ap50 == pytest.approx(1.0, abs=1e-9)
    assert rep.ap75 == pytest.approx(51 / 101, abs=1e-9)
    assert rep.ar == pytest.approx((2 * 1.0 + 8 * 0.5) / 10, abs=1e-9)
    assert rep.ap_medium == pytest.approx(expected_ap, abs=1e-9)
    assert rep.ap_large == pytest.approx(0.0, abs=1e-9)


def test_duplicate_prediction_strictly_lowers_ap():
    preds, gts = _fixture()
    base = evaluate(preds, gts, K3).ap
    preds_dup, _ = _fixture(dup=True)
    dup = evaluate(preds_dup, gts, K3).ap
    assert dup < base
    # hand value: at 0.50/0.55 the mid-ranked duplicate costs precision
    # 2/3 over the upper half of the recall axis
    expected = (2 * ((51 + 50 * 2 / 3) / 101) + 8 * (51 / 101)) / 10
    assert dup == pytest.approx(expected, abs=1e-9)


def test_evaluate_invariant_to_orderings():
    preds, gts = _fixture()
    base = evaluate(preds, gts, K3).to_dict()
    flipped_gts = {0: list(reversed(gts[0]))}
    assert evaluate(preds, flipped_gts, K3).to_dict() == pytest.approx(base)
    relabeled_preds = {7: [dict(p, image_id=7) for p in preds[0]]}
    relabeled_gts = {7: gts[0]}
    assert evaluate(relabeled_preds, relabeled_gts, K3).to_dict() == pytest.approx(base)


def test_crowd_gt_is_ignore_region():
    preds = {0: [_pred(GT1, 0.9), _pred(GT2, 0.8)]}
    gts = {0: [_gt(GT1, AREA, gid=1), _gt(GT2, AREA, iscrowd=1, gid=2)]}
    rep = evaluate(preds, gts, K3)
    # the crowd match neither counts as TP nor as FP
    assert rep.ap == pytest.approx(1.0)
    assert rep.ar == pytest.approx(1.0)


def test_zero_visible_gt_is_ignored():
    preds = {0: [_pred(GT1, 0.9)]}
    gts = {0: [_gt(GT1, AREA, gid=1), _gt(GT2, AREA, v=0.0, gid=2)]}
    rep = evaluate(preds, gts, K3)
    assert rep.ap == pytest.approx(1.0)


def test_area_partition_exclusive():
    small, medium, large = 500.0, 2000.0, 10000.0
    pts = [GT1, GT2, [(40.0, 40.0), (50.0, 40.0), (45.0, 50.0)]]
    gts = {0: [_gt(pts[0], small, gid=1), _gt(pts[1], medium, gid=2),
               _gt(pts[2], large, gid=3)]}
    preds = {0: [_pred(p, 0.9 - 0.1 * i) for i, p in enumerate(pts)]}
    rep = evaluate(preds, gts, K3)
    assert rep.ap == pytest.approx(1.0)       # small gt still counts in "all"
    assert rep.ap_medium == pytest.approx(1.0)
    assert rep.ap_large == pytest.approx(1.0)
    # drop the large prediction: only AP_L collapses
    preds2 = {0: preds[0][:2]}
    rep2 = evaluate(preds2, gts, K3)
    assert rep2.ap_medium == pytest.approx(1.0)
    assert rep2.ap_large == pytest.approx(0.0)


def test_empty_predictions_zero_scores():
    gts = {0: [_gt(GT1, AREA)]}
    rep = evaluate({0: []}, gts, K3)
    assert rep.ap == 0.0 and rep.ar == 0.0


def test_thresholds_and_ranges_are_coco():
    assert len(OKS_THRESHOLDS) == 10
    assert OKS_THRESHOLDS[0] == 0.50 and OKS_THRESHOLDS[-1] == 0.95
    assert AREA_RANGES["medium"] == (32.0 ** 2, 96.0 ** 2)
    assert AREA_RANGES["large"][0] == 96.0 ** 2
