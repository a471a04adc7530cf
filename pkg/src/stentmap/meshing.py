"""Lumen surface extraction and binary PLY export.

Meshes come from a 0.5 iso-surface of the binary lumen mask (marching cubes
on a zero-padded copy so surfaces close at the volume border), with vertices
in physical µm and outward-oriented faces. PLY files are binary little-endian:
float32 x/y/z plus 8-bit RGBA per vertex, and a vertex-index list per face.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from skimage import measure

from .apposition import PointCloud
from .volume import LabelVolume

LUMEN_ALPHA = 128   # lumen surfaces export semi-transparent
POINT_ALPHA = 255


@dataclass(frozen=True)
class Mesh:
    vertices_um: np.ndarray  # (v, 3) float32
    faces: np.ndarray        # (f, 3) int32


def _signed_volume(verts: np.ndarray, faces: np.ndarray) -> float:
    a = verts[faces[:, 0]]
    b = verts[faces[:, 1]]
    c = verts[faces[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def lumen_mesh(lumen: LabelVolume) -> Mesh:
    """Triangulated 0.5 iso-surface of the mask, vertices in µm, outward
    normals (positive enclosed volume under the right-hand rule)."""
    if not lumen.mask.any():
        raise ValueError("lumen mask is empty")
    padded = np.pad(lumen.mask, 1).astype(np.float32)
    spacing = lumen.spacing.as_um
    verts, faces, _normals, _values = measure.marching_cubes(
        padded, level=0.5, spacing=spacing)
    verts = verts - np.asarray(spacing)  # undo the one-voxel pad offset
    if _signed_volume(verts, faces) < 0:
        faces = faces[:, ::-1]
    return Mesh(verts.astype(np.float32), faces.astype(np.int32))


_PLY_VERTEX_PROPS = (
    "property float x\n"
    "property float y\n"
    "property float z\n"
    "property uchar red\n"
    "property uchar green\n"
    "property uchar blue\n"
    "property uchar alpha\n"
)


def _header(n_vertices: int, n_faces: int | None) -> bytes:
    head = "ply\nformat binary_little_endian 1.0\n"
    head += f"element vertex {n_vertices}\n" + _PLY_VERTEX_PROPS
    if n_faces is not None:
        head += f"element face {n_faces}\n"
        head += "property list uchar int vertex_indices\n"
    head += "end_header\n"
    return head.encode("ascii")


def _pack_vertices(xyz_um: np.ndarray, rgba: np.ndarray) -> bytes:
    n = xyz_um.shape[0]
    rec = np.zeros(n, dtype=np.dtype([("xyz", "<f4", 3), ("rgba", "u1", 4)]))
    rec["xyz"] = xyz_um.astype("<f4")
    rec["rgba"] = rgba
    return rec.tobytes()


def export_ply(obj: PointCloud | Mesh, path: str | Path,
               colors: np.ndarray | None = None,
               alpha: int | None = None) -> Path:
    """Write a point cloud or mesh as binary little-endian PLY.

    ``colors`` (n, 3) uint8 overrides the point cloud's own colors and is
    required for meshes unless a uniform gray is acceptable.
    """
    path = Path(path)
    if isinstance(obj, PointCloud):
        xyz = obj.xyz_um
        rgb = obj.rgb if colors is None else np.asarray(colors, dtype=np.uint8)
        a = POINT_ALPHA if alpha is None else alpha
        faces = None
    else:
        xyz = obj.vertices_um
        rgb = (np.full((xyz.shape[0], 3), 200, dtype=np.uint8)
               if colors is None else np.asarray(colors, dtype=np.uint8))
        a = LUMEN_ALPHA if alpha is None else alpha
        faces = obj.faces
    if rgb.shape != (xyz.shape[0], 3):
        raise ValueError(f"need one color per vertex: {rgb.shape} vs {xyz.shape}")

    rgba = np.concatenate(
        [rgb, np.full((xyz.shape[0], 1), a, dtype=np.uint8)], axis=1)
    payload = _pack_vertices(xyz, rgba)
    if faces is not None:
        face_rec = bytearray()
        for tri in faces:
            face_rec += struct.pack("<Biii", 3, int(tri[0]), int(tri[1]), int(tri[2]))
        payload += bytes(face_rec)
        head = _header(xyz.shape[0], faces.shape[0])
    else:
        head = _header(xyz.shape[0], None)

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(head + payload)
    return path
