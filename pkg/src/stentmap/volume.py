"""Core data model for IV-OCT pullbacks: volumes, labels, and raw-container I/O.

A pullback is stored as a 3D scalar array indexed ``(x, y, frame)``. For polar
volumes ``x`` is the radial sample along an A-line and ``y`` is the A-line
index within the frame. On disk a volume is a ``<name>.meta`` text sidecar
plus a ``<name>.raw`` little-endian binary in x-fastest, frame-slowest order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CARTESIAN = "cartesian"
POLAR = "polar"
_COORD_SYSTEMS = (CARTESIAN, POLAR)
_LABEL_TARGETS = ("stent", "lumen")

_MAGIC = "stentmap-volume 1"

# A-lines per frame when the acquisition metadata does not say otherwise.
DEFAULT_ALINES_PER_FRAME = 512


class VolumeFormatError(Exception):
    """Raised when a volume container on disk is malformed or inconsistent."""


@dataclass(frozen=True)
class VoxelSpacing:
    """Physical voxel pitch: in-plane (dx, dy) and inter-frame (dz), in µm."""

    dx_um: float
    dy_um: float
    dz_um: float

    def __post_init__(self):
        for name in ("dx_um", "dy_um", "dz_um"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"spacing {name} must be finite and > 0, got {v}")

    @property
    def as_um(self) -> tuple[float, float, float]:
        return (self.dx_um, self.dy_um, self.dz_um)

    @property
    def as_mm(self) -> tuple[float, float, float]:
        return (self.dx_um / 1000.0, self.dy_um / 1000.0, self.dz_um / 1000.0)


# 7 mm over 512 in-plane pixels and 75 mm over 375 frames.
CLINICAL_SPACING = VoxelSpacing(7000.0 / 512.0, 7000.0 / 512.0, 75000.0 / 375.0)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Volume:
    """Immutable 3D scalar image with physical spacing.

    ``data`` is float32, indexed ``(x, y, frame)``, with intensities in [0, 1].
    """

    data: np.ndarray
    spacing: VoxelSpacing
    coord_system: str = CARTESIAN

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume data contains non-finite values")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("volume intensities must lie in [0, 1]")
        if self.coord_system not in _COORD_SYSTEMS:
            raise ValueError(f"unknown coord_system {self.coord_system!r}")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_frames(self) -> int:
        return self.data.shape[2]

    def frame(self, index: int) -> np.ndarray:
        return self.data[:, :, index]


@dataclass(frozen=True)
class LabelVolume:
    """Binary mask paired with a Volume; ``target`` names what it marks."""

    mask: np.ndarray
    target: str
    spacing: VoxelSpacing

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 3:
            raise ValueError(f"label mask must be 3D, got shape {mask.shape}")
        if self.target not in _LABEL_TARGETS:
            raise ValueError(f"unknown label target {self.target!r}")
        object.__setattr__(self, "mask", _freeze(mask))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.mask.shape


@dataclass(frozen=True)
class PolarFrameSeq:
    """All frames of a polar pullback concatenated along the A-line axis.

    ``alines`` has shape (samples_per_aline, total_alines); column
    ``f * alines_per_frame + a`` is A-line ``a`` of frame ``f``.
    """

    alines: np.ndarray
    alines_per_frame: int
    spacing: VoxelSpacing

    def __post_init__(self):
        alines = np.asarray(self.alines)
        if alines.ndim != 2:
            raise ValueError("alines must be 2D (samples x total A-lines)")
        if self.alines_per_frame <= 0:
            raise ValueError("alines_per_frame must be positive")
        if alines.shape[1] % self.alines_per_frame != 0:
            raise ValueError(
                f"total A-lines {alines.shape[1]} is not a multiple of "
                f"alines_per_frame {self.alines_per_frame}"
            )
        object.__setattr__(self, "alines", _freeze(alines))

    @property
    def n_frames(self) -> int:
        return self.alines.shape[1] // self.alines_per_frame

    @property
    def total_alines(self) -> int:
        return self.alines.shape[1]


def _container_paths(path: str | Path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".meta", ".raw"):
        p = p.with_suffix("")
    return p.with_suffix(p.suffix + ".meta"), p.with_suffix(p.suffix + ".raw")


def _format_floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _write_meta(meta_path: Path, fields: dict[str, str]) -> None:
    lines = [_MAGIC] + [f"{k}: {v}" for k, v in fields.items()]
    meta_path.write_text("\n".join(lines) + "\n")


def _read_meta(meta_path: Path) -> dict[str, str]:
    if not meta_path.exists():
        raise VolumeFormatError(f"missing sidecar {meta_path}")
    lines = meta_path.read_text().splitlines()
    if not lines or lines[0].strip() != _MAGIC:
        raise VolumeFormatError(f"{meta_path}: not a {_MAGIC!r} sidecar")
    fields: dict[str, str] = {}
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        m = re.match(r"([a-z_]+):\s*(.*)", line)
        if not m:
            raise VolumeFormatError(f"{meta_path}: malformed line {line!r}")
        fields[m.group(1)] = m.group(2)
    return fields


def _parse_spacing(text: str) -> VoxelSpacing:
    parts = text.split()
    if len(parts) != 3:
        raise VolumeFormatError(f"spacing_um needs 3 values, got {text!r}")
    return VoxelSpacing(*(float(p) for p in parts))


def _read_raw(raw_path: Path, dims: tuple[int, int, int], dtype: np.dtype) -> np.ndarray:
    if not raw_path.exists():
        raise VolumeFormatError(f"missing raw payload {raw_path}")
    nx, ny, nf = dims
    expected = nx * ny * nf * dtype.itemsize
    payload = raw_path.read_bytes()
    if len(payload) != expected:
        raise VolumeFormatError(
            f"{raw_path}: payload is {len(payload)} bytes, expected {expected} "
            f"for dims {nx}x{ny}x{nf} {dtype.name}"
        )
    flat = np.frombuffer(payload, dtype=dtype)
    # File order is x-fastest, frame-slowest.
    return flat.reshape(nf, ny, nx).transpose(2, 1, 0)


def save_volume(volume: Volume, path: str | Path) -> Path:
    """Write ``<path>.meta`` + ``<path>.raw``; round-trips bit-exactly."""
    meta_path, raw_path = _container_paths(path)
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    nx, ny, nf = volume.shape
    _write_meta(meta_path, {
        "kind": "image",
        "dims": f"{nx} {ny} {nf}",
        "spacing_um": _format_floats(volume.spacing.as_um),
        "coord_system": volume.coord_system,
        "dtype": "float32",
        "normalized": "true",
        "alines_per_frame": str(ny if volume.coord_system == POLAR
                                else DEFAULT_ALINES_PER_FRAME),
    })
    np.ascontiguousarray(volume.data.transpose(2, 1, 0)).astype("<f4").tofile(raw_path)
    return meta_path.with_suffix("")


def load_volume(path: str | Path) -> Volume:
    """Read a volume container; applies min-max normalization only if the
    sidecar says the payload is not normalized."""
    meta_path, raw_path = _container_paths(path)
    fields = _read_meta(meta_path)
    if fields.get("kind", "image") != "image":
        raise VolumeFormatError(f"{meta_path}: kind is {fields.get('kind')!r}, not image")
    dims = tuple(int(d) for d in fields["dims"].split())
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise VolumeFormatError(f"{meta_path}: bad dims {fields['dims']!r}")
    spacing = _parse_spacing(fields["spacing_um"])
    dtype = np.dtype(fields.get("dtype", "float32")).newbyteorder("<")
    data = _read_raw(raw_path, dims, dtype).astype(np.float32)
    if fields.get("normalized", "true") != "true":
        lo, hi = float(data.min()), float(data.max())
        data = (data - lo) / (hi - lo) if hi > lo else np.zeros_like(data)
    return Volume(data, spacing, fields.get("coord_system", CARTESIAN))


def save_label_volume(label: LabelVolume, path: str | Path,
                      coord_system: str = CARTESIAN) -> Path:
    meta_path, raw_path = _container_paths(path)
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    nx, ny, nf = label.shape
    _write_meta(meta_path, {
        "kind": "label",
        "target": label.target,
        "dims": f"{nx} {ny} {nf}",
        "spacing_um": _format_floats(label.spacing.as_um),
        "coord_system": coord_system,
        "dtype": "uint8",
    })
    np.ascontiguousarray(label.mask.transpose(2, 1, 0)).astype(np.uint8).tofile(raw_path)
    return meta_path.with_suffix("")


def load_label_volume(path: str | Path) -> LabelVolume:
    meta_path, raw_path = _container_paths(path)
    fields = _read_meta(meta_path)
    if fields.get("kind") != "label":
        raise VolumeFormatError(f"{meta_path}: kind is {fields.get('kind')!r}, not label")
    dims = tuple(int(d) for d in fields["dims"].split())
    spacing = _parse_spacing(fields["spacing_um"])
    data = _read_raw(raw_path, dims, np.dtype(np.uint8))
    return LabelVolume(data.astype(bool), fields["target"], spacing)


def load_case(path: str | Path) -> tuple[Volume, dict[str, LabelVolume]]:
    """Load ``<stem>`` image plus any paired ``<stem>.stent`` / ``<stem>.lumen``
    label containers sitting next to it."""
    volume = load_volume(path)
    stem = Path(path)
    if stem.suffix in (".meta", ".raw"):
        stem = stem.with_suffix("")
    labels: dict[str, LabelVolume] = {}
    for target in _LABEL_TARGETS:
        candidate = stem.parent / f"{stem.name}.{target}"
        if candidate.with_suffix(candidate.suffix + ".meta").exists():
            labels[target] = load_label_volume(candidate)
    return volume, labels


def save_case(volume: Volume, labels: dict[str, LabelVolume], path: str | Path) -> Path:
    stem = save_volume(volume, path)
    for target, label in labels.items():
        save_label_volume(label, stem.parent / f"{stem.name}.{target}",
                          coord_system=volume.coord_system)
    return stem


def ingest_png_stack(directory: str | Path, spacing: VoxelSpacing,
                     coord_system: str = CARTESIAN) -> Volume:
    """Build a Volume from a directory of ``frame_%05d.png`` grayscale frames."""
    from PIL import Image

    directory = Path(directory)
    frames = sorted(directory.glob("frame_*.png"))
    if not frames:
        raise VolumeFormatError(f"no frame_*.png files in {directory}")
    planes = []
    for f in frames:
        img = np.asarray(Image.open(f).convert("I"))
        planes.append(img.astype(np.float32))
    stack = np.stack(planes, axis=2)
    peak = float(stack.max())
    if peak > 0:
        stack /= peak
    # PNG rows are y, columns are x; volume indexing is (x, y, frame).
    return Volume(stack.transpose(1, 0, 2), spacing, coord_system)
