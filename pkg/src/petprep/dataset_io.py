"""Persistence: NIfTI-1 volumes, dataset manifests, stratified splitting.

The NIfTI support is deliberately narrow: little-endian NIfTI-1 single files
(.nii or .nii.gz), 3D, datatypes uint8/int16/int32/float32/float64, and only
axis-aligned orientations. Axis permutations and flips are reoriented to the
canonical +x/+y/+z layout on read; oblique affines are rejected rather than
silently resampled. The writer always emits float32, scl_slope 1, scl_inter
0, identity direction, and a fixed gzip mtime so identical volumes produce
byte-identical files.
"""

from __future__ import annotations

import csv
import gzip
import io
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    CorruptHeaderError,
    DuplicateCaseIdError,
    InvalidFractionError,
    ParseError,
    TooFewCasesError,
    UnknownTracerError,
    UnsupportedDatatypeError,
    UnsupportedOrientationError,
)
from .grid import LabelMask, Triple, Volume, make_mask, make_volume

_HEADER_SIZE = 348
_MAGIC_SINGLE = b"n+1\x00"
_MAGIC_PAIR = b"ni1\x00"

# NIfTI-1 datatype code -> numpy little-endian dtype
_DATATYPES = {
    2: np.dtype("<u1"),
    4: np.dtype("<i2"),
    8: np.dtype("<i4"),
    16: np.dtype("<f4"),
    64: np.dtype("<f8"),
}

TRACERS = ("FDG", "PSMA")

LESION_BINS = (
    ("0", 0, 0),
    ("1-5", 1, 5),
    ("6-20", 6, 20),
    (">20", 21, None),
)


# --- NIfTI-1 -----------------------------------------------------------------

def _read_file_bytes(path) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise CorruptHeaderError(f"{path}: bad gzip container: {e}") from None
    return raw


def _quaternion_matrix(b: float, c: float, d: float, qfac: float) -> np.ndarray:
    a_sq = 1.0 - (b * b + c * c + d * d)
    a = math.sqrt(a_sq) if a_sq > 0 else 0.0
    m = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ],
        dtype=np.float64,
    )
    m[:, 2] *= qfac
    return m


def _axis_decomposition(m: np.ndarray, path) -> tuple[list[int], list[int]]:
    """Map each index axis to (world axis, sign); reject oblique matrices."""
    perm = [0, 0, 0]
    signs = [0, 0, 0]
    for j in range(3):
        col = m[:, j]
        mags = np.abs(col)
        k = int(np.argmax(mags))
        if mags[k] == 0.0:
            raise CorruptHeaderError(f"{path}: orientation matrix has a zero column")
        rest = np.delete(mags, k)
        if np.any(rest > 1e-3 * mags[k]):
            raise UnsupportedOrientationError(
                f"{path}: oblique orientation; only axis-aligned volumes are supported"
            )
        perm[j] = k
        signs[j] = 1 if col[k] > 0 else -1
    if sorted(perm) != [0, 1, 2]:
        raise UnsupportedOrientationError(
            f"{path}: orientation matrix is not an axis permutation"
        )
    return perm, signs


def read_nifti(path, as_mask: bool = False) -> Volume | LabelMask:
    """Decode one NIfTI-1 file to a canonical-orientation volume.

    Voxel values become float32 with scl_slope/scl_inter applied (slope 0 is
    treated as 1, and untouched raw values pass through bit-exact when slope
    is 1 and inter is 0). With as_mask=True the decoded values must be
    exactly {0, 1} and a LabelMask is returned.
    """
    raw = _read_file_bytes(path)
    if len(raw) < _HEADER_SIZE:
        raise CorruptHeaderError(f"{path}: file shorter than the 348-byte header")

    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != _HEADER_SIZE:
        if struct.unpack_from(">i", raw, 0)[0] == _HEADER_SIZE:
            raise CorruptHeaderError(f"{path}: big-endian files are not supported")
        raise CorruptHeaderError(f"{path}: sizeof_hdr is {sizeof_hdr}, expected 348")

    magic = raw[344:348]
    if magic != _MAGIC_SINGLE:
        if magic == _MAGIC_PAIR:
            raise BadMagicError(f"{path}: two-file (.hdr/.img) layout is not supported")
        raise BadMagicError(f"{path}: magic is {magic!r}, expected {_MAGIC_SINGLE!r}")

    dim = struct.unpack_from("<8h", raw, 40)
    (datatype_code,) = struct.unpack_from("<h", raw, 70)
    (bitpix,) = struct.unpack_from("<h", raw, 72)
    pixdim = struct.unpack_from("<8f", raw, 76)
    (vox_offset_f,) = struct.unpack_from("<f", raw, 108)
    (scl_slope,) = struct.unpack_from("<f", raw, 112)
    (scl_inter,) = struct.unpack_from("<f", raw, 116)
    (qform_code,) = struct.unpack_from("<h", raw, 252)
    (sform_code,) = struct.unpack_from("<h", raw, 254)
    quat = struct.unpack_from("<6f", raw, 256)
    srow = struct.unpack_from("<12f", raw, 280)

    ndim = dim[0]
    if ndim < 3 or ndim > 7:
        raise CorruptHeaderError(f"{path}: dim[0] is {ndim}, expected a 3D volume")
    if any(dim[axis] > 1 for axis in range(4, ndim + 1)):
        raise CorruptHeaderError(f"{path}: has more than 3 non-trivial dimensions")
    shape = (int(dim[1]), int(dim[2]), int(dim[3]))
    if any(n < 1 for n in shape):
        raise CorruptHeaderError(f"{path}: non-positive dimension in {shape}")

    if datatype_code not in _DATATYPES:
        raise UnsupportedDatatypeError(
            f"{path}: datatype code {datatype_code} not supported "
            f"(supported: {sorted(_DATATYPES)})"
        )
    dtype = _DATATYPES[datatype_code]
    if bitpix != dtype.itemsize * 8:
        raise CorruptHeaderError(
            f"{path}: bitpix {bitpix} does not match datatype code {datatype_code}"
        )

    spacing = [abs(float(p)) for p in pixdim[1:4]]
    if any(not math.isfinite(s) or s <= 0.0 for s in spacing):
        raise CorruptHeaderError(f"{path}: non-positive pixdim {pixdim[1:4]}")

    if sform_code > 0:
        m = np.array(
            [srow[0:3], srow[4:7], srow[8:11]], dtype=np.float64
        )
        offset = [float(srow[3]), float(srow[7]), float(srow[11])]
    elif qform_code > 0:
        qfac = -1.0 if pixdim[0] < 0 else 1.0
        m = _quaternion_matrix(quat[0], quat[1], quat[2], qfac) @ np.diag(spacing)
        offset = [float(quat[3]), float(quat[4]), float(quat[5])]
    else:
        m = np.diag(spacing).astype(np.float64)
        offset = [0.0, 0.0, 0.0]
    perm, axis_signs = _axis_decomposition(m, path)

    offset_bytes = int(vox_offset_f)
    if offset_bytes < _HEADER_SIZE:
        raise CorruptHeaderError(f"{path}: vox_offset {offset_bytes} is inside the header")
    count = shape[0] * shape[1] * shape[2]
    if len(raw) < offset_bytes + count * dtype.itemsize:
        raise CorruptHeaderError(f"{path}: file truncated before the end of voxel data")
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=offset_bytes)
    data = flat.reshape(shape, order="F")

    slope = float(scl_slope)
    inter = float(scl_inter)
    if math.isnan(slope) or slope == 0.0:
        slope = 1.0
    if math.isnan(inter):
        inter = 0.0
    if slope != 1.0 or inter != 0.0:
        data = (data.astype(np.float64) * slope + inter).astype(np.float32)
    else:
        data = data.astype(np.float32)

    # reorient so storage axis w is world axis w with positive step
    inv = [perm.index(w) for w in range(3)]
    data = np.transpose(data, axes=inv)
    out_spacing = [spacing[inv[w]] for w in range(3)]
    origin = [0.0, 0.0, 0.0]
    for w in range(3):
        sign = axis_signs[inv[w]]
        if sign < 0:
            data = np.flip(data, axis=w)
            origin[w] = offset[w] - out_spacing[w] * (data.shape[w] - 1)
        else:
            origin[w] = offset[w]

    data = np.ascontiguousarray(data)
    spacing_t: Triple = (out_spacing[0], out_spacing[1], out_spacing[2])
    origin_t: Triple = (origin[0], origin[1], origin[2])
    if as_mask:
        return make_mask(data, spacing_t, origin_t)
    return make_volume(data, spacing_t, origin_t)


def write_nifti(vol: Volume | LabelMask, path) -> None:
    """Write a canonical single-file NIfTI-1 volume (gzip when path ends .gz)."""
    nx, ny, nz = vol.shape
    sx, sy, sz = (float(s) for s in vol.spacing)
    ox, oy, oz = (float(o) for o in vol.origin)

    hdr = bytearray(_HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, _HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, 16)  # float32
    struct.pack_into("<h", hdr, 72, 32)
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(_HEADER_SIZE + 4))
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)  # scl_inter
    struct.pack_into("<B", hdr, 123, 2)  # spatial units: mm
    struct.pack_into("<h", hdr, 252, 1)  # qform_code
    struct.pack_into("<h", hdr, 254, 1)  # sform_code
    struct.pack_into("<6f", hdr, 256, 0.0, 0.0, 0.0, ox, oy, oz)
    struct.pack_into("<4f", hdr, 280, sx, 0.0, 0.0, ox)
    struct.pack_into("<4f", hdr, 296, 0.0, sy, 0.0, oy)
    struct.pack_into("<4f", hdr, 312, 0.0, 0.0, sz, oz)
    hdr[344:348] = _MAGIC_SINGLE

    payload = np.ascontiguousarray(vol.data.astype("<f4", copy=False))
    raw = bytes(hdr) + b"\x00\x00\x00\x00" + payload.ravel(order="F").tobytes()

    if str(path).endswith(".gz"):
        buf = io.BytesIO()
        # fixed mtime and no embedded filename keep reruns byte-identical
        with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
            gz.write(raw)
        raw = buf.getvalue()
    with open(path, "wb") as f:
        f.write(raw)


# --- manifests ---------------------------------------------------------------

MANIFEST_COLUMNS = ("case_id", "tracer", "pet_path", "ct_path", "mask_path", "lesion_count")


@dataclass(frozen=True)
class ManifestEntry:
    case_id: str
    tracer: str
    pet_path: str
    ct_path: str
    mask_path: str
    lesion_count: int


@dataclass(frozen=True)
class DatasetManifest:
    """Case inventory; root is the directory relative paths resolve against."""

    entries: tuple[ManifestEntry, ...]
    root: str = "."

    def resolve(self, rel_path: str) -> str:
        if os.path.isabs(rel_path):
            return rel_path
        return os.path.join(self.root, rel_path)

    def by_id(self) -> dict[str, ManifestEntry]:
        return {e.case_id: e for e in self.entries}


def load_manifest(path) -> DatasetManifest:
    """Read and validate a manifest CSV; file paths stay as written."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ParseError(f"{path}: empty manifest, expected a header row")
    header = [c.strip() for c in rows[0]]
    if header != list(MANIFEST_COLUMNS):
        raise ParseError(
            f"{path}: bad header {header!r}, expected {list(MANIFEST_COLUMNS)!r}"
        )
    entries = []
    seen: set[str] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue  # blank line
        if len(row) != len(MANIFEST_COLUMNS):
            raise ParseError(
                f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} fields, got {len(row)}"
            )
        case_id, tracer, pet_path, ct_path, mask_path, lesion_raw = (c.strip() for c in row)
        if not case_id:
            raise ParseError(f"{path}:{lineno}: empty case_id")
        if case_id in seen:
            raise DuplicateCaseIdError(f"{path}:{lineno}: duplicate case_id {case_id!r}")
        seen.add(case_id)
        if tracer not in TRACERS:
            raise UnknownTracerError(
                f"{path}:{lineno}: tracer {tracer!r} not in {list(TRACERS)}"
            )
        try:
            lesion_count = int(lesion_raw)
        except ValueError:
            raise ParseError(
                f"{path}:{lineno}: lesion_count {lesion_raw!r} is not an integer"
            ) from None
        if lesion_count < 0:
            raise ParseError(f"{path}:{lineno}: negative lesion_count {lesion_count}")
        entries.append(
            ManifestEntry(
                case_id=case_id,
                tracer=tracer,
                pet_path=pet_path,
                ct_path=ct_path,
                mask_path=mask_path,
                lesion_count=lesion_count,
            )
        )
    root = os.path.dirname(os.path.abspath(path))
    return DatasetManifest(entries=tuple(entries), root=root)


def write_manifest(entries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for e in entries:
            writer.writerow(
                [e.case_id, e.tracer, e.pet_path, e.ct_path, e.mask_path, e.lesion_count]
            )


# --- stratified splitting ----------------------------------------------------

@dataclass(frozen=True)
class SplitResult:
    train: tuple[str, ...]
    test: tuple[str, ...]
    seed: int
    bin_summary: dict


def _bin_label(lesion_count: int) -> str:
    for label, lo, hi in LESION_BINS:
        if lesion_count >= lo and (hi is None or lesion_count <= hi):
            return label
    raise AssertionError(f"unbinnable lesion count {lesion_count}")


def stratified_split(manifest: DatasetManifest, test_fraction: float, seed: int) -> SplitResult:
    """Partition cases into train/test, stratified by lesion-count bin.

    Each bin contributes floor(bin_size * fraction) cases to test, and the
    leftover needed to hit the global target round(N * fraction) goes to the
    bins with the largest fractional remainders (ties broken by bin order).
    Within a bin, membership is a seeded shuffle of the case_ids sorted
    lexicographically, so the split is reproducible for a fixed seed.
    """
    n = len(manifest.entries)
    if n < 2:
        raise TooFewCasesError(f"need at least 2 cases to split, got {n}")
    if not (isinstance(test_fraction, (int, float)) and 0.0 < test_fraction < 1.0):
        raise InvalidFractionError(f"test_fraction must be in (0, 1), got {test_fraction!r}")

    bins: dict[str, list[str]] = {label: [] for label, _, _ in LESION_BINS}
    for e in manifest.entries:
        bins[_bin_label(e.lesion_count)].append(e.case_id)

    target_total = int(math.floor(n * test_fraction + 0.5))
    labels = [label for label, _, _ in LESION_BINS]
    sizes = {label: len(bins[label]) for label in labels}
    ideal = {label: sizes[label] * test_fraction for label in labels}
    take = {label: int(math.floor(ideal[label])) for label in labels}
    deficit = target_total - sum(take.values())
    by_remainder = sorted(
        range(len(labels)), key=lambda i: (-(ideal[labels[i]] - take[labels[i]]), i)
    )
    pos = 0
    while deficit > 0:
        label = labels[by_remainder[pos % len(labels)]]
        if take[label] < sizes[label]:
            take[label] += 1
            deficit -= 1
        pos += 1

    rng = np.random.Generator(np.random.Philox(key=seed & (2**64 - 1)))
    train: list[str] = []
    test: list[str] = []
    summary = {}
    for label in labels:
        members = sorted(bins[label])
        order = rng.permutation(len(members))
        chosen = {members[i] for i in order[: take[label]]}
        test.extend(sorted(chosen))
        train.extend(m for m in members if m not in chosen)
        summary[label] = {"train": len(members) - len(chosen), "test": len(chosen)}

    return SplitResult(
        train=tuple(sorted(train)),
        test=tuple(sorted(test)),
        seed=seed,
        bin_summary=summary,
    )
