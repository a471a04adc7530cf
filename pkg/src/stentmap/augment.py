"""Sliding-window augmentation over the concatenated rotational dimension.

A polar pullback is one continuous helical acquisition, so laying all frames
side by side along the A-line axis gives a single wide 2D array from which
any window of one frame's width is a physically valid frame. Shifting the
window start by a sub-frame offset and striding by the frame width yields a
whole new pullback. No wraparound: the acquisition has real endpoints.

Photometric augmentation is limited to global intensity scaling; anything
else (noise injection, contrast warps, rotations of Cartesian frames) breaks
the imaging model and is deliberately absent.
"""

from __future__ import annotations

import numpy as np

from .volume import POLAR, LabelVolume, PolarFrameSeq, Volume


def concat_pullback(volume: Volume) -> PolarFrameSeq:
    """Lay the frames of a polar pullback side by side (frame-major order)."""
    if volume.coord_system != POLAR:
        raise ValueError("concat_pullback expects a polar volume")
    ns, na, nf = volume.shape
    alines = volume.data.transpose(0, 2, 1).reshape(ns, nf * na)
    return PolarFrameSeq(alines, na, volume.spacing)


def concat_labels(label: LabelVolume) -> PolarFrameSeq:
    """Same concatenation for a label volume (columns stay aligned 1:1)."""
    ns, na, nf = label.shape
    alines = label.mask.transpose(0, 2, 1).reshape(ns, nf * na)
    return PolarFrameSeq(alines, na, label.spacing)


def seq_to_volume(seq: PolarFrameSeq) -> Volume:
    """Inverse of :func:`concat_pullback`; lossless."""
    ns = seq.alines.shape[0]
    data = seq.alines.reshape(ns, seq.n_frames, seq.alines_per_frame).transpose(0, 2, 1)
    return Volume(np.ascontiguousarray(data), seq.spacing, POLAR)


def seq_to_labels(seq: PolarFrameSeq, target: str) -> LabelVolume:
    ns = seq.alines.shape[0]
    mask = seq.alines.reshape(ns, seq.n_frames, seq.alines_per_frame).transpose(0, 2, 1)
    return LabelVolume(np.ascontiguousarray(mask), target, seq.spacing)


def window_frame(seq: PolarFrameSeq, offset: int) -> np.ndarray:
    """One frame-width window starting at A-line ``offset`` (no wraparound)."""
    w = seq.alines_per_frame
    if not 0 <= offset <= seq.total_alines - w:
        raise ValueError(
            f"offset {offset} out of range [0, {seq.total_alines - w}]")
    return seq.alines[:, offset:offset + w]


def window_pullback(seq: PolarFrameSeq, offset: int) -> PolarFrameSeq:
    """Re-frame the pullback with every window shifted by ``offset`` A-lines.

    For offset 0 this is the identity (all F frames); otherwise the last
    partial window is dropped, giving F - 1 frames. The stride equals the
    window width, so output frame k covers source A-lines
    [offset + k*w, offset + (k+1)*w).
    """
    w = seq.alines_per_frame
    if not 0 <= offset < w:
        raise ValueError(f"offset {offset} outside [0, {w})")
    if offset == 0:
        return PolarFrameSeq(seq.alines.copy(), w, seq.spacing)
    n_out = seq.n_frames - 1
    return PolarFrameSeq(seq.alines[:, offset:offset + n_out * w], w, seq.spacing)


def windowed_case(volume: Volume, labels: dict[str, LabelVolume],
                  offset: int) -> tuple[Volume, dict[str, LabelVolume]]:
    """Apply the same window shift to a pullback and all its label volumes."""
    out_vol = seq_to_volume(window_pullback(concat_pullback(volume), offset))
    out_labels = {
        target: seq_to_labels(window_pullback(concat_labels(lbl), offset), target)
        for target, lbl in labels.items()
    }
    return out_vol, out_labels


def scale_intensity(volume: Volume, factor: float) -> Volume:
    """Global intensity scaling, the one photometric augmentation that keeps
    the imaging model valid. ``factor`` must stay within [0.9, 1.1]."""
    if not 0.9 <= factor <= 1.1:
        raise ValueError("intensity scale factor must lie in [0.9, 1.1]")
    data = np.clip(volume.data * np.float32(factor), 0.0, 1.0)
    return Volume(data, volume.spacing, volume.coord_system)
