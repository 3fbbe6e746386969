"""Shared builders and independent oracles.

The oracles here are deliberately naive (recursive-style flood fill, dense
convolution, byte-by-byte NIfTI assembly) so library results are checked
against a second route, not against themselves.
"""

import math
import struct

import numpy as np
import pytest

from petprep import make_mask, make_volume


def vol(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 1:
        a = a.reshape(-1, 1, 1)
    return make_volume(a, spacing, origin)


def mask(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    a = np.asarray(data)
    if a.ndim == 1:
        a = a.reshape(-1, 1, 1)
    return make_mask(a, spacing, origin)


_OFFSETS_26 = [
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if (dx, dy, dz) != (0, 0, 0)
]


def neighbor_offsets(connectivity):
    if connectivity == 6:
        return [o for o in _OFFSETS_26 if abs(o[0]) + abs(o[1]) + abs(o[2]) == 1]
    if connectivity == 18:
        return [o for o in _OFFSETS_26 if abs(o[0]) + abs(o[1]) + abs(o[2]) <= 2]
    if connectivity == 26:
        return list(_OFFSETS_26)
    raise ValueError(connectivity)


def flood_components(arr, connectivity):
    """Stack-based flood fill, labels in first-visit raster order."""
    arr = np.asarray(arr) != 0
    nx, ny, nz = arr.shape
    labels = np.zeros(arr.shape, dtype=np.int32)
    offs = neighbor_offsets(connectivity)
    count = 0
    for seed in np.ndindex(arr.shape):
        if not arr[seed] or labels[seed]:
            continue
        count += 1
        labels[seed] = count
        stack = [seed]
        while stack:
            x, y, z = stack.pop()
            for dx, dy, dz in offs:
                u, v, w = x + dx, y + dy, z + dz
                if 0 <= u < nx and 0 <= v < ny and 0 <= w < nz:
                    if arr[u, v, w] and not labels[u, v, w]:
                        labels[u, v, w] = count
                        stack.append((u, v, w))
    return labels, count


def oracle_fp_fn_cm3(pred_arr, gt_arr, spacing, connectivity):
    """Component-overlap oracle: volumes of zero-overlap components."""
    voxel_mm3 = spacing[0] * spacing[1] * spacing[2]

    def one_side(src, other):
        labels, count = flood_components(src, connectivity)
        voxels = 0
        for label in range(1, count + 1):
            member = labels == label
            if not np.any(np.logical_and(member, other != 0)):
                voxels += int(np.count_nonzero(member))
        return voxels * voxel_mm3 / 1000.0

    return one_side(pred_arr, gt_arr), one_side(gt_arr, pred_arr)


def dense_gaussian_1d(signal, sigma_vox):
    """Naive O(n*k) convolution with a truncated renormalized kernel.

    Out-of-range taps reflect with the edge sample repeated, per the
    documented padding of the library kernels.
    """
    signal = np.asarray(signal, dtype=np.float64)
    n = len(signal)
    if sigma_vox == 0.0:
        return signal.copy()
    radius = int(math.ceil(4.0 * sigma_vox))
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-0.5 * (offsets / sigma_vox) ** 2)
    kernel = kernel / kernel.sum()

    def reflect(i):
        while i < 0 or i >= n:
            i = -1 - i if i < 0 else 2 * n - 1 - i
        return i

    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for k, off in enumerate(offsets):
            acc += kernel[k] * signal[reflect(i + off)]
        out[i] = acc
    return out


def build_nifti_bytes(
    data,
    spacing=(1.0, 1.0, 1.0),
    datatype=16,
    bitpix=None,
    scl_slope=1.0,
    scl_inter=0.0,
    dim=None,
    pixdim0=1.0,
    vox_offset=352.0,
    sizeof_hdr=348,
    magic=b"n+1\x00",
    sform_code=1,
    qform_code=0,
    srow=None,
    quatern=(0.0, 0.0, 0.0),
    qoffset=(0.0, 0.0, 0.0),
):
    """Assemble a NIfTI-1 file image byte by byte, no library involved."""
    data = np.asarray(data)
    nx, ny, nz = data.shape
    if dim is None:
        dim = (3, nx, ny, nz, 1, 1, 1, 1)
    if bitpix is None:
        bitpix = {2: 8, 4: 16, 8: 32, 16: 32, 64: 64}.get(datatype, 32)
    if srow is None:
        srow = (
            (spacing[0], 0.0, 0.0, 0.0),
            (0.0, spacing[1], 0.0, 0.0),
            (0.0, 0.0, spacing[2], 0.0),
        )
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, sizeof_hdr)
    struct.pack_into("<8h", hdr, 40, *dim)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, bitpix)
    struct.pack_into(
        "<8f", hdr, 76, pixdim0, spacing[0], spacing[1], spacing[2], 0.0, 0.0, 0.0, 0.0
    )
    struct.pack_into("<f", hdr, 108, vox_offset)
    struct.pack_into("<f", hdr, 112, scl_slope)
    struct.pack_into("<f", hdr, 116, scl_inter)
    struct.pack_into("<h", hdr, 252, qform_code)
    struct.pack_into("<h", hdr, 254, sform_code)
    struct.pack_into(
        "<6f", hdr, 256, quatern[0], quatern[1], quatern[2], qoffset[0], qoffset[1], qoffset[2]
    )
    struct.pack_into("<4f", hdr, 280, *srow[0])
    struct.pack_into("<4f", hdr, 296, *srow[1])
    struct.pack_into("<4f", hdr, 312, *srow[2])
    hdr[344:348] = magic
    pad = b"\x00" * (int(vox_offset) - 348) if vox_offset >= 348 else b"\x00\x00\x00\x00"
    return bytes(hdr) + pad + data.ravel(order="F").tobytes()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
