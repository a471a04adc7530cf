"""Signed stent-to-lumen distances and their color coding.

The lumen boundary is the set of mask voxels with at least one six-neighbor
outside the mask. Every voxel gets the exact anisotropic Euclidean distance
(voxel center to voxel center) to that boundary set, signed + inside the
luminal interior (malapposition side) and - outside (tissue-coverage side).
Distances map to a hue code on [0, 180]: 180 at contact, falling linearly to
0 at the clamp distance (default 0.3 mm) and beyond.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .metrics import StrutInstance, extract_struts
from .volume import LabelVolume, VoxelSpacing

WELL = "well"
MALAPPOSED = "malapposed"
COVERED = "covered"


@dataclass(frozen=True)
class AppositionConfig:
    clamp_mm: float = 0.3       # distances at or beyond this code to hue 0
    hue_max: float = 180.0
    per_strut_uniform: bool = False  # color whole strut by its centroid distance

    def __post_init__(self):
        if self.clamp_mm <= 0:
            raise ValueError("clamp_mm must be > 0")
        if self.hue_max != 180.0:
            raise ValueError("the hue scale is fixed at 180")


@dataclass(frozen=True)
class DistanceField:
    """Per-voxel signed distance (mm) to the lumen boundary surface."""

    values: np.ndarray
    spacing: VoxelSpacing

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


def lumen_boundary(lumen: LabelVolume) -> np.ndarray:
    """Mask voxels with >= 1 six-neighbor outside the mask (array edges count
    as outside)."""
    mask = lumen.mask
    if not mask.any():
        raise ValueError("lumen mask is empty")
    interior = ndimage.binary_erosion(
        mask, structure=ndimage.generate_binary_structure(3, 1), border_value=0)
    return mask & ~interior


def distance_field(lumen: LabelVolume) -> DistanceField:
    """Exact anisotropic EDT to the lumen boundary set, signed by interior
    membership.

    Distances are accumulated in µm (products of index offsets and spacing)
    and converted to mm only at the end, so that with exactly representable
    spacings the result is bit-identical to a brute-force nearest-boundary
    scan using the same metric.
    """
    boundary = lumen_boundary(lumen)
    sx, sy, sz = lumen.spacing.as_um
    ix, iy, iz = ndimage.distance_transform_edt(
        ~boundary, sampling=(sx, sy, sz),
        return_distances=False, return_indices=True)

    nx, ny, nf = boundary.shape
    gx = np.arange(nx, dtype=np.float64)[:, None, None]
    gy = np.arange(ny, dtype=np.float64)[None, :, None]
    gz = np.arange(nf, dtype=np.float64)[None, None, :]
    ex = (gx - ix) * sx
    ey = (gy - iy) * sy
    ez = (gz - iz) * sz
    d_mm = np.sqrt(ex * ex + ey * ey + ez * ez) * 1e-3
    signed = np.where(lumen.mask, d_mm, -d_mm)
    return DistanceField(signed, lumen.spacing)


def hue_code(d_mm, config: AppositionConfig = AppositionConfig()):
    """Map signed distance(s) to the hue code 180*(1 - min(|d|, D)/D)."""
    d = np.abs(np.asarray(d_mm, dtype=np.float64))
    code = config.hue_max * (1.0 - np.minimum(d, config.clamp_mm) / config.clamp_mm)
    return float(code) if np.isscalar(d_mm) else code


def codes_to_rgb(codes: np.ndarray) -> np.ndarray:
    """Vectorized hue-code -> 8-bit RGB: 0 is full red, 180 is full green."""
    codes = np.asarray(codes, dtype=np.float64)
    if codes.size and (codes.min() < 0 or codes.max() > 180):
        raise ValueError("hue codes must lie in [0, 180]")
    # The code spans 120 degrees of hue at full saturation and value.
    h = codes * (120.0 / 180.0) / 60.0
    i = np.minimum(np.floor(h).astype(np.int64), 2)
    f = h - i
    r = np.select([i == 0, i == 1], [np.ones_like(f), 1.0 - f], default=0.0)
    g = np.select([i == 0, i == 1], [f, np.ones_like(f)], default=1.0)
    b = np.zeros_like(f)
    rgb = np.stack([r, g, b], axis=-1)
    return np.round(rgb * 255.0).astype(np.uint8)


def code_to_rgb(code: float) -> tuple[int, int, int]:
    """Single hue code -> (R, G, B) triple."""
    rgb = codes_to_rgb(np.asarray([code]))[0]
    return (int(rgb[0]), int(rgb[1]), int(rgb[2]))


@dataclass(frozen=True)
class PointCloud:
    """Stent voxels as colored points at physical coordinates (µm)."""

    xyz_um: np.ndarray   # (n, 3) float32
    rgb: np.ndarray      # (n, 3) uint8
    codes: np.ndarray    # (n,) float64


def _strut_centroid_distance(strut: StrutInstance, df: DistanceField) -> float:
    """Signed distance at the member voxel closest to the strut centroid."""
    dx, dy = df.spacing.dx_um, df.spacing.dy_um
    xs = strut.voxels[:, 0] * dx
    ys = strut.voxels[:, 1] * dy
    k = int(np.argmin((xs - strut.centroid_um[0]) ** 2
                      + (ys - strut.centroid_um[1]) ** 2))
    vx, vy = strut.voxels[k]
    return float(df.values[vx, vy, strut.frame])


def color_stents(stent: LabelVolume, df: DistanceField,
                 config: AppositionConfig = AppositionConfig()) -> PointCloud:
    """One colored point per stent voxel; hue from the voxel's own distance,
    or from the strut centroid distance when ``per_strut_uniform`` is set."""
    if stent.shape != df.shape:
        raise ValueError(f"shape mismatch {stent.shape} vs {df.shape}")
    xs, ys, zs = np.nonzero(stent.mask)
    sx, sy, sz = stent.spacing.as_um
    xyz = np.stack([xs * sx, ys * sy, zs * sz], axis=1).astype(np.float32)

    if config.per_strut_uniform:
        codes = np.empty(xs.size, dtype=np.float64)
        voxel_to_point = {(int(x), int(y), int(z)): i
                          for i, (x, y, z) in enumerate(zip(xs, ys, zs))}
        for strut in extract_struts(stent):
            code = hue_code(_strut_centroid_distance(strut, df), config)
            for vx, vy in strut.voxels:
                codes[voxel_to_point[(int(vx), int(vy), strut.frame)]] = code
    else:
        codes = hue_code(df.values[xs, ys, zs], config)

    return PointCloud(xyz, codes_to_rgb(codes), codes)


@dataclass(frozen=True)
class StrutRecord:
    frame: int
    centroid_um: tuple[float, float]
    distance_mm: float
    hue: float
    label: str


@dataclass(frozen=True)
class Segment:
    frame_start: int   # inclusive
    frame_stop: int    # exclusive
    label: str
    length_mm: float


@dataclass
class AppositionReport:
    struts: list[StrutRecord]
    segments: list[Segment]
    frame_pitch_mm: float
    clamp_mm: float

    def to_dict(self) -> dict:
        return {
            "clamp_mm": self.clamp_mm,
            "frame_pitch_mm": self.frame_pitch_mm,
            "struts": [{
                "frame": s.frame,
                "centroid_um": list(s.centroid_um),
                "distance_mm": s.distance_mm,
                "hue": s.hue,
                "label": s.label,
            } for s in self.struts],
            "segments": [{
                "frame_start": s.frame_start,
                "frame_stop": s.frame_stop,
                "label": s.label,
                "length_mm": s.length_mm,
            } for s in self.segments],
        }


def classify_distance(d_mm: float, clamp_mm: float) -> str:
    if d_mm > clamp_mm:
        return MALAPPOSED
    if d_mm < -clamp_mm:
        return COVERED
    return WELL


def apposition_report(stent: LabelVolume, df: DistanceField,
                      config: AppositionConfig = AppositionConfig()) -> AppositionReport:
    """Per-strut classification plus maximal runs of non-well frames.

    A frame's class comes from the median signed centroid distance of its
    struts; frames without struts count as well. Segment length is the run's
    frame count times the frame pitch.
    """
    if stent.shape != df.shape:
        raise ValueError(f"shape mismatch {stent.shape} vs {df.shape}")
    n_frames = stent.shape[2]
    dz_mm = stent.spacing.dz_um / 1000.0

    records: list[StrutRecord] = []
    per_frame: dict[int, list[float]] = {}
    for strut in extract_struts(stent):
        d = _strut_centroid_distance(strut, df)
        records.append(StrutRecord(strut.frame, strut.centroid_um, d,
                                   hue_code(d, config),
                                   classify_distance(d, config.clamp_mm)))
        per_frame.setdefault(strut.frame, []).append(d)

    frame_labels = []
    for f in range(n_frames):
        ds = per_frame.get(f)
        if not ds:
            frame_labels.append(WELL)
        else:
            frame_labels.append(classify_distance(float(np.median(ds)),
                                                  config.clamp_mm))

    segments: list[Segment] = []
    start = 0
    for f in range(1, n_frames + 1):
        if f == n_frames or frame_labels[f] != frame_labels[start]:
            if frame_labels[start] != WELL:
                segments.append(Segment(start, f, frame_labels[start],
                                        (f - start) * dz_mm))
            start = f
    return AppositionReport(records, segments, dz_mm, config.clamp_mm)
