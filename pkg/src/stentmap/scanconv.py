"""Scan conversion between polar A-line frames and Cartesian images.

A polar frame has shape (samples_per_aline, n_alines): rows are radial depth
samples, columns are A-lines at angles ``theta_a = 2*pi*a / n_alines``. The
A-line at theta = 0 maps onto the +x ray from the image center; pixels beyond
the outermost radial sample are set to 0.
"""

from __future__ import annotations

import numpy as np

from .volume import CARTESIAN, POLAR, LabelVolume, Volume, VoxelSpacing


def _bilinear_polar(frame: np.ndarray, r: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Sample ``frame[r, a]`` bilinearly; the A-line axis wraps, radius clamps."""
    n_samples, n_alines = frame.shape
    r0 = np.floor(r).astype(np.int64)
    a0 = np.floor(a).astype(np.int64)
    fr = r - r0
    fa = a - a0
    r1 = np.minimum(r0 + 1, n_samples - 1)
    r0 = np.clip(r0, 0, n_samples - 1)
    a0m = np.mod(a0, n_alines)
    a1m = np.mod(a0 + 1, n_alines)
    top = frame[r0, a0m] * (1.0 - fa) + frame[r0, a1m] * fa
    bot = frame[r1, a0m] * (1.0 - fa) + frame[r1, a1m] * fa
    return top * (1.0 - fr) + bot * fr


def polar_to_cartesian(frame: np.ndarray, out_size: int,
                       center: tuple[float, float] | None = None,
                       radial_scale: float = 1.0) -> np.ndarray:
    """Scan-convert one polar frame onto an ``out_size`` x ``out_size`` grid.

    ``radial_scale`` is Cartesian pixels per radial sample (1.0 keeps the
    radial pitch as the pixel pitch).
    """
    frame = np.asarray(frame, dtype=np.float32)
    if frame.ndim != 2 or frame.shape[1] < 1:
        raise ValueError("polar frame must be 2D with at least one A-line")
    if out_size < 2:
        raise ValueError("out_size must be >= 2")
    n_samples, n_alines = frame.shape
    if center is None:
        center = ((out_size - 1) / 2.0, (out_size - 1) / 2.0)
    cx, cy = center

    x = np.arange(out_size, dtype=np.float64)[:, None] - cx
    y = np.arange(out_size, dtype=np.float64)[None, :] - cy
    r = np.hypot(x, y) / radial_scale
    theta = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    a = theta * (n_alines / (2.0 * np.pi))

    inside = r <= (n_samples - 1)
    out = np.zeros((out_size, out_size), dtype=np.float32)
    out[inside] = _bilinear_polar(frame, r[inside], a[inside]).astype(np.float32)
    return out


def cartesian_to_polar(image: np.ndarray, n_alines: int, samples_per_aline: int,
                       center: tuple[float, float] | None = None,
                       radial_scale: float = 1.0) -> np.ndarray:
    """Resample a Cartesian image onto a polar (samples x A-lines) grid.

    Inverse of :func:`polar_to_cartesian`; points sampled outside the image
    are 0.
    """
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 2:
        raise ValueError("image must be 2D")
    if n_alines < 1 or samples_per_aline < 1:
        raise ValueError("n_alines and samples_per_aline must be >= 1")
    if center is None:
        center = ((image.shape[0] - 1) / 2.0, (image.shape[1] - 1) / 2.0)
    cx, cy = center

    theta = 2.0 * np.pi * np.arange(n_alines, dtype=np.float64) / n_alines
    r = np.arange(samples_per_aline, dtype=np.float64)[:, None] * radial_scale
    px = cx + r * np.cos(theta)[None, :]
    py = cy + r * np.sin(theta)[None, :]

    nx, ny = image.shape
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    fx = px - x0
    fy = py - y0
    valid = (px >= 0) & (px <= nx - 1) & (py >= 0) & (py <= ny - 1)

    x0c = np.clip(x0, 0, nx - 1)
    x1c = np.clip(x0 + 1, 0, nx - 1)
    y0c = np.clip(y0, 0, ny - 1)
    y1c = np.clip(y0 + 1, 0, ny - 1)
    top = image[x0c, y0c] * (1.0 - fy) + image[x0c, y1c] * fy
    bot = image[x1c, y0c] * (1.0 - fy) + image[x1c, y1c] * fy
    out = (top * (1.0 - fx) + bot * fx).astype(np.float32)
    out[~valid] = 0.0
    return out


def scan_convert_volume(volume: Volume, out_size: int,
                        radial_scale: float = 1.0) -> Volume:
    """Scan-convert every frame of a polar pullback to Cartesian.

    The Cartesian in-plane spacing becomes ``dx_um / radial_scale``.
    """
    if volume.coord_system != POLAR:
        raise ValueError("scan_convert_volume expects a polar volume")
    frames = [polar_to_cartesian(volume.frame(f), out_size, radial_scale=radial_scale)
              for f in range(volume.n_frames)]
    data = np.clip(np.stack(frames, axis=2), 0.0, 1.0)
    s = volume.spacing
    spacing = VoxelSpacing(s.dx_um / radial_scale, s.dx_um / radial_scale, s.dz_um)
    return Volume(data, spacing, CARTESIAN)


def scan_convert_labels(label: LabelVolume, out_size: int,
                        radial_scale: float = 1.0) -> LabelVolume:
    """Scan-convert a polar label volume; interpolated occupancy >= 0.5 is kept."""
    frames = [polar_to_cartesian(label.mask[:, :, f].astype(np.float32), out_size,
                                 radial_scale=radial_scale)
              for f in range(label.mask.shape[2])]
    mask = np.stack(frames, axis=2) >= 0.5
    s = label.spacing
    spacing = VoxelSpacing(s.dx_um / radial_scale, s.dx_um / radial_scale, s.dz_um)
    return LabelVolume(mask, label.target, spacing)
