from __future__ import annotations

import numpy as np
import pytest

from oracles import flood_fill_components, optimal_match_count
from stentmap.metrics import (MatchCounts, StrutInstance, extract_struts,
                              match_struts, strut_metrics, voxel_metrics)
from stentmap.volume import LabelVolume, VoxelSpacing

SPACING = VoxelSpacing(10.0, 10.0, 200.0)


def label_of(mask2d, spacing=SPACING) -> LabelVolume:
    return LabelVolume(np.asarray(mask2d, bool)[:, :, None], "stent", spacing)


def strut(frame, cx_um, cy_um) -> StrutInstance:
    return StrutInstance(frame, (cx_um, cy_um), 1, np.zeros((1, 2), dtype=int))


def test_single_square_centroid():
    mask = np.zeros((10, 10), dtype=bool)
    mask[2:5, 3:6] = True
    struts = extract_struts(label_of(mask))
    assert len(struts) == 1
    assert struts[0].voxel_count == 9
    assert struts[0].centroid_um == (30.0, 40.0)
    assert struts[0].frame == 0


def test_diagonal_squares_are_one_component():
    mask = np.zeros((10, 10), dtype=bool)
    mask[2:4, 2:4] = True
    mask[4:6, 4:6] = True   # touches only at the corner
    assert len(extract_struts(label_of(mask))) == 1


def test_empty_mask_gives_no_struts():
    assert extract_struts(label_of(np.zeros((5, 5), dtype=bool))) == []


def test_components_match_flood_fill_oracle(rng):
    for _ in range(25):
        mask = rng.random((64, 64)) > 0.82
        struts = extract_struts(label_of(mask))
        ours = {frozenset(map(tuple, s.voxels)) for s in struts}
        oracle = set(flood_fill_components(mask))
        assert ours == oracle


def test_match_within_radius_is_tp():
    counts = match_struts([strut(0, 0.0, 0.0)], [strut(0, 0.0, 40.0)])
    assert (counts.tp, counts.fp, counts.fn) == (1, 0, 0)
    assert counts.pairs[0][2] == pytest.approx(40.0)


def test_match_outside_radius_is_fp_and_fn():
    counts = match_struts([strut(0, 0.0, 60.0)], [strut(0, 0.0, 0.0)])
    assert (counts.tp, counts.fp, counts.fn) == (0, 1, 1)


def test_two_predictions_one_gt():
    preds = [strut(0, 0.0, 10.0), strut(0, 0.0, -20.0)]
    gts = [strut(0, 0.0, 0.0)]
    counts = match_struts(preds, gts)
    assert (counts.tp, counts.fp, counts.fn) == (1, 1, 0)
    assert optimal_match_count([p.centroid_um for p in preds],
                               [g.centroid_um for g in gts], 50.0) == counts.tp
    # nearest pair wins
    assert counts.pairs[0][0] == 0


def test_matching_is_frame_scoped():
    counts = match_struts([strut(0, 0.0, 0.0)], [strut(1, 0.0, 0.0)])
    assert (counts.tp, counts.fp, counts.fn) == (0, 1, 1)


def test_matching_translation_invariance(rng):
    preds = [strut(0, float(x), float(y))
             for x, y in rng.uniform(0, 500, size=(8, 2))]
    gts = [strut(0, float(x), float(y))
           for x, y in rng.uniform(0, 500, size=(6, 2))]
    base = match_struts(preds, gts)
    shift = (1234.5, -777.25)
    moved_p = [strut(0, p.centroid_um[0] + shift[0], p.centroid_um[1] + shift[1])
               for p in preds]
    moved_g = [strut(0, g.centroid_um[0] + shift[0], g.centroid_um[1] + shift[1])
               for g in gts]
    moved = match_struts(moved_p, moved_g)
    assert (base.tp, base.fp, base.fn) == (moved.tp, moved.fp, moved.fn)


def test_greedy_equals_optimal_on_well_separated(rng):
    # gt struts pairwise > 2 * radius apart; predictions jittered around them
    for _ in range(50):
        n = int(rng.integers(1, 7))
        gts = []
        while len(gts) < n:
            cand = rng.uniform(0, 2000, size=2)
            if all(np.hypot(*(cand - np.array(g))) > 120 for g in gts):
                gts.append(tuple(cand))
        preds = []
        for g in gts:
            if rng.random() < 0.8:   # detected, within radius
                ang, rad = rng.uniform(0, 2 * np.pi), rng.uniform(0, 45)
                preds.append((g[0] + rad * np.cos(ang), g[1] + rad * np.sin(ang)))
        for _ in range(int(rng.integers(0, 3))):   # spurious detections
            preds.append(tuple(rng.uniform(3000, 4000, size=2)))

        counts = match_struts([strut(0, *p) for p in preds],
                              [strut(0, *g) for g in gts])
        assert counts.tp == optimal_match_count(preds, gts, 50.0)


def test_strut_metric_formulas_exact():
    m = strut_metrics(MatchCounts(tp=8, fp=2, fn=0))
    assert m["precision"] == pytest.approx(0.800)
    assert m["dice"] == pytest.approx(16 / 18)
    assert round(m["dice"], 3) == 0.889
    assert m["iou"] == pytest.approx(0.800)

    perfect = strut_metrics(MatchCounts(tp=5, fp=0, fn=0))
    assert perfect == {"precision": 1.0, "dice": 1.0, "iou": 1.0}

    absent = strut_metrics(MatchCounts())
    assert absent == {"precision": None, "dice": None, "iou": None}


def test_voxel_metrics_identity_and_disjoint(rng):
    mask = rng.random((8, 8, 4)) > 0.5
    a = LabelVolume(mask, "lumen", SPACING)
    assert voxel_metrics(a, a) == {"precision": 1.0, "recall": 1.0,
                                   "dice": 1.0, "iou": 1.0}
    b = LabelVolume(~mask, "lumen", SPACING)
    assert voxel_metrics(a, b) == {"precision": 0.0, "recall": 0.0,
                                   "dice": 0.0, "iou": 0.0}


def test_voxel_metrics_swap_symmetry(rng):
    p = LabelVolume(rng.random((8, 8, 4)) > 0.6, "lumen", SPACING)
    g = LabelVolume(rng.random((8, 8, 4)) > 0.6, "lumen", SPACING)
    m_pg = voxel_metrics(p, g)
    m_gp = voxel_metrics(g, p)
    assert m_pg["precision"] == pytest.approx(m_gp["recall"])
    assert m_pg["recall"] == pytest.approx(m_gp["precision"])
    assert m_pg["dice"] == pytest.approx(m_gp["dice"])
    assert m_pg["iou"] == pytest.approx(m_gp["iou"])


def test_strut_swap_symmetry(rng):
    preds = [strut(0, float(x), float(y)) for x, y in rng.uniform(0, 300, (7, 2))]
    gts = [strut(0, float(x), float(y)) for x, y in rng.uniform(0, 300, (5, 2))]
    pg = match_struts(preds, gts)
    gp = match_struts(gts, preds)
    assert (pg.tp, pg.fp, pg.fn) == (gp.tp, gp.fn, gp.fp)


def test_voxel_metrics_shape_mismatch():
    a = LabelVolume(np.zeros((4, 4, 2), bool), "lumen", SPACING)
    b = LabelVolume(np.zeros((4, 4, 3), bool), "lumen", SPACING)
    with pytest.raises(ValueError, match="mismatch"):
        voxel_metrics(a, b)
