"""Geometric core: volume carriers, resampling, crop/flip/affine transforms.

Conventions used throughout the package:
  * voxel-center grid: index i maps to world position origin + i * spacing (mm)
  * images interpolate trilinearly, masks with nearest-neighbour
  * image data is stored float32, accumulation happens in float64
  * every operation is pure: inputs are immutable, outputs freshly allocated
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    GeometryMismatchError,
    NonBinaryMaskError,
    NonFiniteDataError,
    NonPositiveScaleError,
    NonPositiveSpacingError,
    OutOfBoundsError,
    ShapeMismatchError,
)

Triple = tuple[float, float, float]

GEOMETRY_ATOL = 1e-5  # mm tolerance when comparing spacing/origin


class Interp(enum.Enum):
    TRILINEAR = "trilinear"
    NEAREST = "nearest"


@dataclass(frozen=True, eq=False)
class Volume:
    """Dense 3D scalar grid with physical geometry.

    data holds intensities (SUV for PET, HU for CT) as a read-only float32
    array of shape (nx, ny, nz).
    """

    data: np.ndarray
    spacing: Triple
    origin: Triple

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Binary 3D grid (uint8 values in {0, 1}) sharing Volume geometry."""

    data: np.ndarray
    spacing: Triple
    origin: Triple

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]


def _check_spacing(spacing) -> Triple:
    s = tuple(float(v) for v in spacing)
    if len(s) != 3:
        raise NonPositiveSpacingError(f"spacing must have 3 components, got {len(s)}")
    if any(not math.isfinite(v) or v <= 0.0 for v in s):
        raise NonPositiveSpacingError(f"spacing must be positive and finite, got {s}")
    return s  # type: ignore[return-value]


def _check_origin(origin) -> Triple:
    o = tuple(float(v) for v in origin)
    if len(o) != 3:
        raise ShapeMismatchError(f"origin must have 3 components, got {len(o)}")
    if any(not math.isfinite(v) for v in o):
        raise NonFiniteDataError(f"origin components must be finite, got {o}")
    return o  # type: ignore[return-value]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def make_volume(data, spacing, origin=(0.0, 0.0, 0.0)) -> Volume:
    """Build a Volume from a dense 3D array, validating all invariants.

    Rejects non-3D input, non-positive spacing, and NaN/Inf intensities.
    The stored array is a fresh float32 copy, marked read-only.
    """
    arr = np.asarray(data)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ShapeMismatchError(f"expected a non-empty 3D array, got shape {arr.shape}")
    spacing = _check_spacing(spacing)
    origin = _check_origin(origin)
    if not np.isfinite(arr).all():
        raise NonFiniteDataError("volume data contains NaN or Inf")
    out = np.ascontiguousarray(arr, dtype=np.float32)
    if out is arr:
        out = out.copy()
    return Volume(_freeze(out), spacing, origin)


def make_mask(data, spacing, origin=(0.0, 0.0, 0.0)) -> LabelMask:
    """Build a LabelMask; values must already be exactly 0 or 1."""
    arr = np.asarray(data)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ShapeMismatchError(f"expected a non-empty 3D array, got shape {arr.shape}")
    spacing = _check_spacing(spacing)
    origin = _check_origin(origin)
    if arr.dtype.kind == "f" and not np.isfinite(arr).all():
        raise NonBinaryMaskError("mask data contains NaN or Inf")
    if not np.isin(arr, (0, 1)).all():
        raise NonBinaryMaskError("mask values must be exactly 0 or 1")
    out = np.ascontiguousarray(arr, dtype=np.uint8)
    if out is arr:
        out = out.copy()
    return LabelMask(_freeze(out), spacing, origin)


def same_geometry(a: Volume | LabelMask, b: Volume | LabelMask, atol: float = GEOMETRY_ATOL) -> bool:
    return (
        a.shape == b.shape
        and all(abs(x - y) <= atol for x, y in zip(a.spacing, b.spacing))
        and all(abs(x - y) <= atol for x, y in zip(a.origin, b.origin))
    )


def require_same_geometry(a: Volume | LabelMask, b: Volume | LabelMask, what: str = "grids") -> None:
    if not same_geometry(a, b):
        raise GeometryMismatchError(
            f"{what} disagree: shape {a.shape} vs {b.shape}, "
            f"spacing {a.spacing} vs {b.spacing}, origin {a.origin} vs {b.origin}"
        )


def _rebuild(like: Volume | LabelMask, data: np.ndarray, spacing: Triple | None = None,
             origin: Triple | None = None) -> Volume | LabelMask:
    spacing = like.spacing if spacing is None else spacing
    origin = like.origin if origin is None else origin
    if isinstance(like, LabelMask):
        return LabelMask(_freeze(np.ascontiguousarray(data, dtype=np.uint8)), spacing, origin)
    return Volume(_freeze(np.ascontiguousarray(data, dtype=np.float32)), spacing, origin)


# --- sampling engine ---------------------------------------------------------

def _sample_trilinear(data: np.ndarray, x, y, z, fill: float | None) -> np.ndarray:
    """Trilinear gather at continuous index coordinates (x, y, z).

    fill=None means edge-clamped sampling (coordinates are clipped to the
    grid); a float fill treats everything outside the grid as that constant,
    blending at the border like constant padding would.
    Accumulates in float64.
    """
    nx, ny, nz = data.shape
    src = data.astype(np.float64, copy=False)
    if fill is None:
        x = np.clip(x, 0.0, nx - 1.0)
        y = np.clip(y, 0.0, ny - 1.0)
        z = np.clip(z, 0.0, nz - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    z0 = np.floor(z).astype(np.int64)
    fx = x - x0
    fy = y - y0
    fz = z - z0
    acc = 0.0
    for dx in (0, 1):
        wx = fx if dx else 1.0 - fx
        ix = x0 + dx
        for dy in (0, 1):
            wy = fy if dy else 1.0 - fy
            iy = y0 + dy
            for dz in (0, 1):
                wz = fz if dz else 1.0 - fz
                iz = z0 + dz
                ixc = np.clip(ix, 0, nx - 1)
                iyc = np.clip(iy, 0, ny - 1)
                izc = np.clip(iz, 0, nz - 1)
                vals = src[ixc, iyc, izc]
                if fill is not None:
                    inside = (
                        (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (iz >= 0) & (iz < nz)
                    )
                    vals = np.where(inside, vals, fill)
                acc = acc + wx * wy * wz * vals
    return acc


def _sample_nearest(data: np.ndarray, x, y, z, fill=None) -> np.ndarray:
    """Nearest-neighbour gather; ties at .5 round up. Keeps the input dtype."""
    nx, ny, nz = data.shape
    ix = np.floor(np.asarray(x) + 0.5).astype(np.int64)
    iy = np.floor(np.asarray(y) + 0.5).astype(np.int64)
    iz = np.floor(np.asarray(z) + 0.5).astype(np.int64)
    if fill is None:
        ix = np.clip(ix, 0, nx - 1)
        iy = np.clip(iy, 0, ny - 1)
        iz = np.clip(iz, 0, nz - 1)
        return data[ix, iy, iz]
    inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (iz >= 0) & (iz < nz)
    out = data[np.clip(ix, 0, nx - 1), np.clip(iy, 0, ny - 1), np.clip(iz, 0, nz - 1)]
    return np.where(inside, out, np.asarray(fill, dtype=data.dtype))


# --- operations --------------------------------------------------------------

def resample(vol: Volume | LabelMask, target_spacing, interp: Interp) -> Volume | LabelMask:
    """Resample to a new uniform spacing, sampling output voxel centers in world space.

    Output size per axis is round(n_in * s_in / s_out), minimum 1. Images use
    edge-clamped trilinear interpolation; masks must use nearest. Origin is
    preserved. A target equal to the source spacing returns a bit-identical copy.
    """
    target = _check_spacing(target_spacing)
    if isinstance(vol, LabelMask) and interp is not Interp.NEAREST:
        raise NonBinaryMaskError("masks must be resampled with nearest interpolation")
    if target == vol.spacing:
        return _rebuild(vol, vol.data.copy())

    in_shape = vol.shape
    out_shape = tuple(
        max(1, int(math.floor(n * s_in / s_out + 0.5)))
        for n, s_in, s_out in zip(in_shape, vol.spacing, target)
    )
    # continuous input index of each output voxel center, per axis
    coords = []
    for axis in range(3):
        u = np.arange(out_shape[axis], dtype=np.float64) * (target[axis] / vol.spacing[axis])
        u = np.clip(u, 0.0, in_shape[axis] - 1.0)
        shape = [1, 1, 1]
        shape[axis] = out_shape[axis]
        coords.append(u.reshape(shape))
    x, y, z = coords
    if interp is Interp.NEAREST:
        out = _sample_nearest(vol.data, x, y, z)
    else:
        out = _sample_trilinear(vol.data, x, y, z, fill=None)
    return _rebuild(vol, np.broadcast_to(out, out_shape), spacing=target)


def crop(vol: Volume | LabelMask, start, size) -> Volume | LabelMask:
    """Extract the sub-volume [start, start+size); origin shifts by start * spacing."""
    start = tuple(int(v) for v in start)
    size = tuple(int(v) for v in size)
    for axis in range(3):
        if start[axis] < 0 or size[axis] < 1 or start[axis] + size[axis] > vol.shape[axis]:
            raise OutOfBoundsError(
                f"crop start={start} size={size} exceeds volume shape {vol.shape}"
            )
    sub = vol.data[
        start[0]:start[0] + size[0],
        start[1]:start[1] + size[1],
        start[2]:start[2] + size[2],
    ].copy()
    origin = tuple(o + st * sp for o, st, sp in zip(vol.origin, start, vol.spacing))
    return _rebuild(vol, sub, origin=origin)  # type: ignore[arg-type]


_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


def flip(vol: Volume | LabelMask, axes) -> Volume | LabelMask:
    """Reverse the data along each named axis ('x', 'y', 'z'); geometry unchanged."""
    idx = sorted({_AXIS_INDEX[a] if isinstance(a, str) else int(a) for a in axes})
    if not idx:
        return _rebuild(vol, vol.data.copy())
    return _rebuild(vol, np.flip(vol.data, axis=idx).copy())


def _rotation_matrix(rotation: Triple) -> np.ndarray:
    # intrinsic z-then-y-then-x composition: R = Rz @ Ry @ Rx
    rx, ry, rz = rotation
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]], dtype=np.float64)
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]], dtype=np.float64)
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]], dtype=np.float64)
    return Rz @ Ry @ Rx


def affine_warp(
    vol: Volume | LabelMask,
    rotation=(0.0, 0.0, 0.0),
    scale=(1.0, 1.0, 1.0),
    translation=(0.0, 0.0, 0.0),
    interp: Interp = Interp.TRILINEAR,
    fill: float = 0.0,
) -> Volume | LabelMask:
    """Affine warp about the volume center in world coordinates.

    The forward map sends a source point q to R @ S @ (q - c) + c + t; each
    output voxel is sampled by the inverse map, so positive translation moves
    content toward +axis. Out-of-field samples take the fill constant.
    Output shape, spacing, and origin match the input. Identity parameters
    return a bit-identical copy.
    """
    rotation = tuple(float(v) for v in rotation)
    scale = tuple(float(v) for v in scale)
    translation = tuple(float(v) for v in translation)
    if any(not math.isfinite(s) or s <= 0.0 for s in scale):
        raise NonPositiveScaleError(f"scale must be strictly positive, got {scale}")
    if isinstance(vol, LabelMask) and interp is not Interp.NEAREST:
        raise NonBinaryMaskError("masks must be warped with nearest interpolation")
    if rotation == (0.0, 0.0, 0.0) and scale == (1.0, 1.0, 1.0) and translation == (0.0, 0.0, 0.0):
        return _rebuild(vol, vol.data.copy())

    nx, ny, nz = vol.shape
    spacing = np.array(vol.spacing, dtype=np.float64)
    origin = np.array(vol.origin, dtype=np.float64)
    center = origin + (np.array([nx, ny, nz], dtype=np.float64) - 1.0) / 2.0 * spacing

    R = _rotation_matrix(rotation)
    inv = np.diag(1.0 / np.array(scale, dtype=np.float64)) @ R.T  # (R S)^-1 = S^-1 R^-1

    # world coordinates of every output voxel center
    gx = origin[0] + np.arange(nx, dtype=np.float64) * spacing[0]
    gy = origin[1] + np.arange(ny, dtype=np.float64) * spacing[1]
    gz = origin[2] + np.arange(nz, dtype=np.float64) * spacing[2]
    px, py, pz = np.meshgrid(gx, gy, gz, indexing="ij")
    dx = px - center[0] - translation[0]
    dy = py - center[1] - translation[1]
    dz = pz - center[2] - translation[2]
    qx = inv[0, 0] * dx + inv[0, 1] * dy + inv[0, 2] * dz + center[0]
    qy = inv[1, 0] * dx + inv[1, 1] * dy + inv[1, 2] * dz + center[1]
    qz = inv[2, 0] * dx + inv[2, 1] * dy + inv[2, 2] * dz + center[2]
    # back to continuous index coordinates
    ux = (qx - origin[0]) / spacing[0]
    uy = (qy - origin[1]) / spacing[1]
    uz = (qz - origin[2]) / spacing[2]

    if interp is Interp.NEAREST:
        out = _sample_nearest(vol.data, ux, uy, uz, fill=fill)
    else:
        out = _sample_trilinear(vol.data, ux, uy, uz, fill=float(fill))
    return _rebuild(vol, out)
