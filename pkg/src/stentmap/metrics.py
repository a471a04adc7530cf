"""Strut-level centroid-matching metrics and voxel-level overlap metrics.

Struts are per-frame 8-connected components of a binary mask. A prediction
counts as a true positive when its centroid lies within 50 µm of an unmatched
ground-truth centroid in the same frame; matching is one-to-one, nearest pair
first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .volume import LabelVolume

MATCH_RADIUS_UM = 50.0

_EIGHT_CONN = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class StrutInstance:
    """One connected strut cross-section with its physical-space centroid."""

    frame: int
    centroid_um: tuple[float, float]
    voxel_count: int
    voxels: np.ndarray  # (n, 2) in-frame (x, y) indices

    def __post_init__(self):
        if self.voxel_count < 1:
            raise ValueError("a strut instance needs at least one voxel")


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    pairs: list[tuple[int, int, float]] = field(default_factory=list)

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp + other.tp, self.fp + other.fp,
                           self.fn + other.fn, self.pairs + other.pairs)


def extract_struts(mask: LabelVolume) -> list[StrutInstance]:
    """Per-frame 8-connected components with spacing-weighted centroids (µm)."""
    dx, dy = mask.spacing.dx_um, mask.spacing.dy_um
    struts: list[StrutInstance] = []
    for f in range(mask.shape[2]):
        labels, n = ndimage.label(mask.mask[:, :, f], structure=_EIGHT_CONN)
        for comp in range(1, n + 1):
            xs, ys = np.nonzero(labels == comp)
            centroid = (float(xs.mean()) * dx, float(ys.mean()) * dy)
            struts.append(StrutInstance(f, centroid, int(xs.size),
                                        np.stack([xs, ys], axis=1)))
    return struts


def match_struts(pred: list[StrutInstance], gt: list[StrutInstance],
                 radius_um: float = MATCH_RADIUS_UM) -> MatchCounts:
    """Greedy one-to-one matching by ascending centroid distance, per frame.

    Pairs farther apart than ``radius_um`` never match; leftovers count as
    FP (predictions) and FN (ground truth). Ties break on (distance, pred
    index, gt index).
    """
    candidates = []
    for pi, p in enumerate(pred):
        for gi, g in enumerate(gt):
            if p.frame != g.frame:
                continue
            d = float(np.hypot(p.centroid_um[0] - g.centroid_um[0],
                               p.centroid_um[1] - g.centroid_um[1]))
            if d <= radius_um:
                candidates.append((d, pi, gi))
    candidates.sort()

    used_pred: set[int] = set()
    used_gt: set[int] = set()
    pairs: list[tuple[int, int, float]] = []
    for d, pi, gi in candidates:
        if pi in used_pred or gi in used_gt:
            continue
        used_pred.add(pi)
        used_gt.add(gi)
        pairs.append((pi, gi, d))

    return MatchCounts(tp=len(pairs), fp=len(pred) - len(pairs),
                       fn=len(gt) - len(pairs), pairs=pairs)


def strut_metrics(counts: MatchCounts) -> dict[str, float | None]:
    """Instance-count precision, dice, and IoU; None when all counts are zero."""
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    if tp + fp + fn == 0:
        return {"precision": None, "dice": None, "iou": None}
    precision = tp / (tp + fp) if tp + fp else 0.0
    dice = 2 * tp / (2 * tp + fp + fn)
    iou = tp / (tp + fn + fp)
    return {"precision": precision, "dice": dice, "iou": iou}


def voxel_metrics(pred: LabelVolume, gt: LabelVolume) -> dict[str, float]:
    """Voxel-wise precision/recall/dice/iou over the whole volume."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    p = pred.mask
    g = gt.mask
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    if tp + fp + fn == 0:
        # Both masks empty: perfect (vacuous) agreement.
        return {"precision": 1.0, "recall": 1.0, "dice": 1.0, "iou": 1.0}
    return {
        "precision": tp / (tp + fp) if tp + fp else 0.0,
        "recall": tp / (tp + fn) if tp + fn else 0.0,
        "dice": 2 * tp / (2 * tp + fp + fn),
        "iou": tp / (tp + fp + fn),
    }
