"""Synthetic IV-OCT pullback generator with exact ground truth.

The vessel is rendered A-line by A-line in polar coordinates: zero signal
inside the lumen, an exponentially attenuated wall echo beyond it, saturated
discs where stent struts cross the frame, and a deep shadow behind each
strut. Struts ride an ideal helix with per-strut jitter; scripted frame
ranges place them apposed on the wall, floating inside the lumen
(malapposed), or buried under tissue (covered). Everything is deterministic
given the seed, with independent per-frame and per-strut RNG streams so frame
rendering can be parallelized without changing the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .volume import POLAR, LabelVolume, Volume, VoxelSpacing

APPOSED = "apposed"
MALAPPOSED = "malapposed"
COVERED = "covered"
_MODES = (APPOSED, MALAPPOSED, COVERED)


@dataclass(frozen=True)
class StentPattern:
    """Helical strut layout: pitch in frames per turn, strut count per turn."""

    pitch_frames: float = 12.0
    struts_per_turn: int = 72
    strut_radius_mm: float = 0.04
    jitter: float = 0.2   # uniform +/- fraction of the strut spacing

    def __post_init__(self):
        if self.pitch_frames <= 0 or self.struts_per_turn < 0:
            raise ValueError("pitch_frames must be > 0 and struts_per_turn >= 0")
        if self.strut_radius_mm <= 0:
            raise ValueError("strut_radius_mm must be > 0")
        if not 0.0 <= self.jitter <= 0.5:
            raise ValueError("jitter must lie in [0, 0.5]")


@dataclass(frozen=True)
class Optics:
    wall_reflectance: float = 0.85
    attenuation_per_mm: float = 1.8
    strut_saturation: float = 1.0
    shadow_attenuation: float = 0.05
    dim_strut_fraction: float = 0.0   # fraction of struts rendered dim
    dim_strut_saturation: float = 0.4


@dataclass(frozen=True)
class Speckle:
    """Multiplicative per-voxel noise: (1 - strength) + strength * Exp(1)."""

    law: str = "exponential"
    strength: float = 1.0

    def __post_init__(self):
        if self.law != "exponential":
            raise ValueError("only the exponential speckle law is modeled")
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError("speckle strength must lie in [0, 1]")


@dataclass(frozen=True)
class SegmentScript:
    """Apposition mode over the half-open frame range [start, stop)."""

    frame_start: int
    frame_stop: int
    mode: str
    offset_mm: float = 0.0   # malapposition gap or coverage thickness

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.frame_stop <= self.frame_start or self.frame_start < 0:
            raise ValueError("segment frame range must be non-empty and >= 0")
        if self.offset_mm < 0:
            raise ValueError("offset_mm must be >= 0")
        if self.mode != APPOSED and self.offset_mm == 0.0:
            raise ValueError(f"{self.mode} segments need offset_mm > 0")


@dataclass(frozen=True)
class Bifurcation:
    """Angular sector with no vessel wall over a frame range."""

    frame_start: int
    frame_stop: int
    theta_start: float
    theta_stop: float


@dataclass(frozen=True)
class PhantomSpec:
    frames: int = 32
    samples_per_aline: int = 128
    alines_per_frame: int = 256
    spacing: VoxelSpacing = VoxelSpacing(18.0, 18.0, 200.0)
    lumen_radius_mm: float | tuple[float, ...] = 0.6
    stent: StentPattern = StentPattern()
    segments: tuple[SegmentScript, ...] = ()
    optics: Optics = Optics()
    speckle: Speckle = Speckle()
    bifurcations: tuple[Bifurcation, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        radii = self.radius_profile()
        if radii.shape != (self.frames,):
            raise ValueError("lumen_radius_mm profile length must equal frames")
        if self.stent.strut_radius_mm >= radii.min():
            raise ValueError("strut radius must be smaller than the lumen radius")
        max_depth = self.samples_per_aline * self.spacing.dx_um / 1000.0
        covered: list[tuple[int, int]] = []
        for seg in self.segments:
            if seg.frame_stop > self.frames:
                raise ValueError(f"segment {seg} exceeds frame count {self.frames}")
            for s, e in covered:
                if seg.frame_start < e and s < seg.frame_stop:
                    raise ValueError("segment frame ranges overlap")
            covered.append((seg.frame_start, seg.frame_stop))
            rmin = radii[seg.frame_start:seg.frame_stop].min()
            rmax = radii[seg.frame_start:seg.frame_stop].max()
            if seg.mode == MALAPPOSED and seg.offset_mm + self.stent.strut_radius_mm >= rmin:
                raise ValueError("malapposition gap pushes struts through the catheter axis")
            if seg.mode == COVERED and rmax + seg.offset_mm + self.stent.strut_radius_mm >= max_depth:
                raise ValueError("coverage thickness pushes struts beyond the imaging depth")

    def radius_profile(self) -> np.ndarray:
        if np.isscalar(self.lumen_radius_mm):
            return np.full(self.frames, float(self.lumen_radius_mm))
        return np.asarray(self.lumen_radius_mm, dtype=np.float64)

    def mode_of_frame(self, frame: int) -> tuple[str, float]:
        for seg in self.segments:
            if seg.frame_start <= frame < seg.frame_stop:
                return seg.mode, seg.offset_mm
        return APPOSED, 0.0


@dataclass(frozen=True)
class StrutSite:
    frame: int
    theta: float
    radius_mm: float      # radial position of the strut center
    saturation: float


def plan_struts(spec: PhantomSpec) -> list[StrutSite]:
    """Place strut centers along the jittered helix and assign each its
    radial position from the segment mode of its frame."""
    pat = spec.stent
    radii = spec.radius_profile()
    if pat.struts_per_turn == 0:
        return []
    total = int(math.floor(spec.frames / pat.pitch_frames * pat.struts_per_turn))
    sites: list[StrutSite] = []
    for j in range(total):
        rng = np.random.default_rng([spec.seed, 7, j])
        u = (j + 0.5) / pat.struts_per_turn
        u += rng.uniform(-pat.jitter, pat.jitter) / pat.struts_per_turn
        frame = int(math.floor(u * pat.pitch_frames))
        if not 0 <= frame < spec.frames:
            continue
        theta = (2.0 * math.pi * u) % (2.0 * math.pi)
        mode, offset = spec.mode_of_frame(frame)
        r_wall = float(radii[frame])
        if mode == MALAPPOSED:
            r_c = r_wall - offset
        elif mode == COVERED:
            r_c = r_wall + offset
        else:
            r_c = r_wall
        dim = spec.optics.dim_strut_fraction > 0 and \
            rng.uniform() < spec.optics.dim_strut_fraction
        sat = spec.optics.dim_strut_saturation if dim else spec.optics.strut_saturation
        sites.append(StrutSite(frame, theta, r_c, sat))
    return sites


def _render_frame(spec: PhantomSpec, frame: int, radius_mm: float,
                  struts: list[StrutSite]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ns, na = spec.samples_per_aline, spec.alines_per_frame
    dr_mm = spec.spacing.dx_um / 1000.0
    opt = spec.optics
    rng = np.random.default_rng([spec.seed, 1, frame])

    theta = 2.0 * np.pi * np.arange(na) / na
    r = np.arange(ns, dtype=np.float64)[:, None] * dr_mm

    r_wall = np.full(na, radius_mm)
    for bif in spec.bifurcations:
        if bif.frame_start <= frame < bif.frame_stop:
            in_sector = (theta >= bif.theta_start) & (theta < bif.theta_stop)
            r_wall[in_sector] = np.inf

    depth = r - r_wall[None, :]
    image = np.where(depth >= 0.0,
                     opt.wall_reflectance * np.exp(-opt.attenuation_per_mm
                                                   * np.maximum(depth, 0.0)),
                     0.0)
    lumen = r < r_wall[None, :]

    s = spec.speckle.strength
    if s > 0.0:
        image = image * ((1.0 - s) + s * rng.exponential(1.0, size=image.shape))

    stent = np.zeros((ns, na), dtype=bool)
    frame_struts = [st for st in struts if st.frame == frame]
    if frame_struts:
        x = r * np.cos(theta)[None, :]
        y = r * np.sin(theta)[None, :]
        rows = np.arange(ns)[:, None]
        rad2 = spec.stent.strut_radius_mm ** 2
        for st in frame_struts:
            sx = st.radius_mm * math.cos(st.theta)
            sy = st.radius_mm * math.sin(st.theta)
            disc = (x - sx) ** 2 + (y - sy) ** 2 <= rad2
            if not disc.any():
                continue
            stent |= disc
            hit = disc.any(axis=0)
            exit_row = np.where(hit, (disc * rows).max(axis=0), -1)
            shadow = (rows > exit_row[None, :]) & hit[None, :]
            image[shadow] *= opt.shadow_attenuation
        # Saturated reflections overwrite shadowed/speckled tissue.
        for st in frame_struts:
            sx = st.radius_mm * math.cos(st.theta)
            sy = st.radius_mm * math.sin(st.theta)
            disc = (x - sx) ** 2 + (y - sy) ** 2 <= rad2
            image[disc] = st.saturation

    return np.clip(image, 0.0, 1.0), stent, lumen


def generate_phantom(spec: PhantomSpec) -> tuple[Volume, LabelVolume, LabelVolume]:
    """Render the pullback and its exact strut / lumen-interior labels.

    Returns
    -------
    (volume, stent_labels, lumen_labels)
        ``volume`` is polar with shape (samples_per_aline, alines_per_frame,
        frames); the labels share that shape.
    """
    radii = spec.radius_profile()
    struts = plan_struts(spec)
    images, stents, lumens = [], [], []
    for f in range(spec.frames):
        img, st, lu = _render_frame(spec, f, float(radii[f]), struts)
        images.append(img)
        stents.append(st)
        lumens.append(lu)
    volume = Volume(np.stack(images, axis=2), spec.spacing, POLAR)
    stent = LabelVolume(np.stack(stents, axis=2), "stent", spec.spacing)
    lumen = LabelVolume(np.stack(lumens, axis=2), "lumen", spec.spacing)
    return volume, stent, lumen


def expected_apposition(spec: PhantomSpec) -> list[tuple[str, float]]:
    """Analytic (mode, strut-to-boundary distance in mm) per frame, read from
    the segment script independently of any rendering."""
    return [spec.mode_of_frame(f) for f in range(spec.frames)]
