/**
 * Single-file NIfTI-1 reader/writer matching the toolkit's semantics: little
 * endian only, datatype codes {2, 4, 8, 16, 64}, scl_slope/scl_inter applied
 * on read (slope 0 or NaN treated as 1), and axis-aligned orientation
 * matrices folded into a canonical x/y/z layout with positive steps. Oblique
 * files are rejected rather than resampled. Voxels are kept in a Float32Array
 * in Fortran order: index (i, j, k) lives at i + nx*(j + ny*k), exactly the
 * byte order on disk.
 */

import { readFileSync, writeFileSync } from 'fs';
import { gzipSync, gunzipSync } from 'zlib';

import {
  BadMagicError,
  CorruptHeaderError,
  NonBinaryMaskError,
  NonFiniteDataError,
  UnsupportedDatatypeError,
  UnsupportedOrientationError,
} from './errors.js';

export type Triple = [number, number, number];

export interface Volume {
  data: Float32Array;
  shape: Triple;
  spacing: Triple;
  origin: Triple;
}

const HEADER_SIZE = 348;
const MAGIC_SINGLE = [0x6e, 0x2b, 0x31, 0x00]; // "n+1\0"
const MAGIC_PAIR = [0x6e, 0x69, 0x31, 0x00]; // "ni1\0"

const DATATYPE_BYTES: Record<number, number> = { 2: 1, 4: 2, 8: 4, 16: 4, 64: 8 };

function checkGeometry(shape: Triple, spacing: Triple): void {
  if (shape.some((n) => !Number.isInteger(n) || n < 1)) {
    throw new CorruptHeaderError(`non-positive dimension in (${shape})`);
  }
  if (spacing.some((s) => !Number.isFinite(s) || s <= 0)) {
    throw new CorruptHeaderError(`non-positive spacing (${spacing})`);
  }
}

/** Wrap a buffer of voxel values; validates sizes and finiteness. */
export function volumeFrom(
  values: ArrayLike<number>,
  shape: Triple,
  spacing: Triple,
  origin: Triple = [0, 0, 0],
): Volume {
  checkGeometry(shape, spacing);
  const count = shape[0] * shape[1] * shape[2];
  if (values.length !== count) {
    throw new CorruptHeaderError(`buffer has ${values.length} values, shape needs ${count}`);
  }
  const data = Float32Array.from(values as ArrayLike<number>);
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new NonFiniteDataError(`non-finite voxel at flat index ${i}`);
    }
  }
  return {
    data,
    shape: [shape[0], shape[1], shape[2]],
    spacing: [spacing[0], spacing[1], spacing[2]],
    origin: [origin[0], origin[1], origin[2]],
  };
}

function decodeRaw(view: DataView, offset: number, code: number, count: number): Float64Array {
  const out = new Float64Array(count);
  switch (code) {
    case 2:
      for (let i = 0; i < count; i++) out[i] = view.getUint8(offset + i);
      break;
    case 4:
      for (let i = 0; i < count; i++) out[i] = view.getInt16(offset + i * 2, true);
      break;
    case 8:
      for (let i = 0; i < count; i++) out[i] = view.getInt32(offset + i * 4, true);
      break;
    case 16:
      for (let i = 0; i < count; i++) out[i] = view.getFloat32(offset + i * 4, true);
      break;
    case 64:
      for (let i = 0; i < count; i++) out[i] = view.getFloat64(offset + i * 8, true);
      break;
    default:
      throw new UnsupportedDatatypeError(`datatype code ${code} not supported`);
  }
  return out;
}

function quaternionMatrix(b: number, c: number, d: number, qfac: number): number[][] {
  const aSq = 1 - (b * b + c * c + d * d);
  const a = aSq > 0 ? Math.sqrt(aSq) : 0;
  const m = [
    [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
    [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
    [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
  ];
  for (let r = 0; r < 3; r++) m[r][2] *= qfac;
  return m;
}

/** storage axis j -> [world axis, +/-1]; throws on oblique or degenerate input */
function axisDecomposition(m: number[][], path: string): { perm: number[]; signs: number[] } {
  const perm = [0, 0, 0];
  const signs = [0, 0, 0];
  for (let j = 0; j < 3; j++) {
    const col = [m[0][j], m[1][j], m[2][j]];
    const mags = col.map(Math.abs);
    let k = 0;
    for (let r = 1; r < 3; r++) if (mags[r] > mags[k]) k = r;
    if (mags[k] === 0) {
      throw new CorruptHeaderError(`${path}: orientation matrix has a zero column`);
    }
    for (let r = 0; r < 3; r++) {
      if (r !== k && mags[r] > 1e-3 * mags[k]) {
        throw new UnsupportedOrientationError(
          `${path}: oblique orientation; only axis-aligned volumes are supported`,
        );
      }
    }
    perm[j] = k;
    signs[j] = col[k] > 0 ? 1 : -1;
  }
  if ([...perm].sort().join() !== '0,1,2') {
    throw new UnsupportedOrientationError(`${path}: orientation matrix is not an axis permutation`);
  }
  return { perm, signs };
}

export function readNifti(path: string, asMask = false): Volume {
  let raw: Buffer = readFileSync(path);
  if (raw.length >= 2 && raw[0] === 0x1f && raw[1] === 0x8b) {
    try {
      raw = gunzipSync(raw);
    } catch (e) {
      throw new CorruptHeaderError(`${path}: bad gzip container: ${e}`);
    }
  }
  if (raw.length < HEADER_SIZE) {
    throw new CorruptHeaderError(`${path}: file shorter than the 348-byte header`);
  }
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);

  const sizeofHdr = view.getInt32(0, true);
  if (sizeofHdr !== HEADER_SIZE) {
    if (view.getInt32(0, false) === HEADER_SIZE) {
      throw new CorruptHeaderError(`${path}: big-endian files are not supported`);
    }
    throw new CorruptHeaderError(`${path}: sizeof_hdr is ${sizeofHdr}, expected 348`);
  }

  const magic = [raw[344], raw[345], raw[346], raw[347]];
  if (!magic.every((b, i) => b === MAGIC_SINGLE[i])) {
    if (magic.every((b, i) => b === MAGIC_PAIR[i])) {
      throw new BadMagicError(`${path}: two-file (.hdr/.img) layout is not supported`);
    }
    throw new BadMagicError(`${path}: bad magic, expected "n+1\\0"`);
  }

  const dim: number[] = [];
  for (let i = 0; i < 8; i++) dim.push(view.getInt16(40 + i * 2, true));
  const datatypeCode = view.getInt16(70, true);
  const bitpix = view.getInt16(72, true);
  const pixdim: number[] = [];
  for (let i = 0; i < 8; i++) pixdim.push(view.getFloat32(76 + i * 4, true));
  const voxOffsetF = view.getFloat32(108, true);
  const sclSlopeRaw = view.getFloat32(112, true);
  const sclInterRaw = view.getFloat32(116, true);
  const qformCode = view.getInt16(252, true);
  const sformCode = view.getInt16(254, true);
  const quat: number[] = [];
  for (let i = 0; i < 6; i++) quat.push(view.getFloat32(256 + i * 4, true));
  const srow: number[] = [];
  for (let i = 0; i < 12; i++) srow.push(view.getFloat32(280 + i * 4, true));

  const ndim = dim[0];
  if (ndim < 3 || ndim > 7) {
    throw new CorruptHeaderError(`${path}: dim[0] is ${ndim}, expected a 3D volume`);
  }
  for (let axis = 4; axis <= ndim; axis++) {
    if (dim[axis] > 1) {
      throw new CorruptHeaderError(`${path}: has more than 3 non-trivial dimensions`);
    }
  }
  const shape: Triple = [dim[1], dim[2], dim[3]];
  if (shape.some((n) => n < 1)) {
    throw new CorruptHeaderError(`${path}: non-positive dimension in (${shape})`);
  }

  const itemBytes = DATATYPE_BYTES[datatypeCode];
  if (itemBytes === undefined) {
    throw new UnsupportedDatatypeError(
      `${path}: datatype code ${datatypeCode} not supported (supported: 2,4,8,16,64)`,
    );
  }
  if (bitpix !== itemBytes * 8) {
    throw new CorruptHeaderError(
      `${path}: bitpix ${bitpix} does not match datatype code ${datatypeCode}`,
    );
  }

  const spacing = pixdim.slice(1, 4).map(Math.abs);
  if (spacing.some((s) => !Number.isFinite(s) || s <= 0)) {
    throw new CorruptHeaderError(`${path}: non-positive pixdim (${pixdim.slice(1, 4)})`);
  }

  let m: number[][];
  let offset: number[];
  if (sformCode > 0) {
    m = [srow.slice(0, 3), srow.slice(4, 7), srow.slice(8, 11)];
    offset = [srow[3], srow[7], srow[11]];
  } else if (qformCode > 0) {
    const qfac = pixdim[0] < 0 ? -1 : 1;
    const q = quaternionMatrix(quat[0], quat[1], quat[2], qfac);
    m = q.map((row) => row.map((v, j) => v * spacing[j]));
    offset = [quat[3], quat[4], quat[5]];
  } else {
    m = [
      [spacing[0], 0, 0],
      [0, spacing[1], 0],
      [0, 0, spacing[2]],
    ];
    offset = [0, 0, 0];
  }
  const { perm, signs } = axisDecomposition(m, path);

  const offsetBytes = Math.trunc(voxOffsetF);
  if (offsetBytes < HEADER_SIZE) {
    throw new CorruptHeaderError(`${path}: vox_offset ${offsetBytes} is inside the header`);
  }
  const count = shape[0] * shape[1] * shape[2];
  if (raw.length < offsetBytes + count * itemBytes) {
    throw new CorruptHeaderError(`${path}: file truncated before the end of voxel data`);
  }
  const values = decodeRaw(view, offsetBytes, datatypeCode, count);

  const slope = Number.isNaN(sclSlopeRaw) || sclSlopeRaw === 0 ? 1 : sclSlopeRaw;
  const inter = Number.isNaN(sclInterRaw) ? 0 : sclInterRaw;
  const stored = new Float32Array(count);
  if (slope !== 1 || inter !== 0) {
    for (let i = 0; i < count; i++) stored[i] = Math.fround(values[i] * slope + inter);
  } else {
    for (let i = 0; i < count; i++) stored[i] = Math.fround(values[i]);
  }

  // gather into canonical order: world axis w <- storage axis inv[w]
  const inv = [perm.indexOf(0), perm.indexOf(1), perm.indexOf(2)];
  const outShape: Triple = [shape[inv[0]], shape[inv[1]], shape[inv[2]]];
  const outSpacing: Triple = [spacing[inv[0]], spacing[inv[1]], spacing[inv[2]]];
  const origin: Triple = [0, 0, 0];
  const flip = [false, false, false];
  for (let w = 0; w < 3; w++) {
    if (signs[inv[w]] < 0) {
      flip[w] = true;
      origin[w] = offset[w] - outSpacing[w] * (outShape[w] - 1);
    } else {
      origin[w] = offset[w];
    }
  }
  const data = new Float32Array(count);
  const [nx, ny, nz] = outShape;
  const sIdx = [0, 0, 0];
  for (let z = 0; z < nz; z++) {
    for (let y = 0; y < ny; y++) {
      for (let x = 0; x < nx; x++) {
        const out = [x, y, z];
        for (let w = 0; w < 3; w++) {
          sIdx[inv[w]] = flip[w] ? outShape[w] - 1 - out[w] : out[w];
        }
        data[x + nx * (y + ny * z)] =
          stored[sIdx[0] + shape[0] * (sIdx[1] + shape[1] * sIdx[2])];
      }
    }
  }

  for (let i = 0; i < count; i++) {
    if (!Number.isFinite(data[i])) {
      throw new NonFiniteDataError(`${path}: non-finite voxel at flat index ${i}`);
    }
    if (asMask && data[i] !== 0 && data[i] !== 1) {
      throw new NonBinaryMaskError(`${path}: mask voxel ${data[i]} is not 0 or 1`);
    }
  }
  return { data, shape: outShape, spacing: outSpacing, origin };
}

export function writeNifti(vol: Volume, path: string): void {
  checkGeometry(vol.shape, vol.spacing);
  const [nx, ny, nz] = vol.shape;
  const count = nx * ny * nz;
  if (vol.data.length !== count) {
    throw new CorruptHeaderError(`buffer has ${vol.data.length} values, shape needs ${count}`);
  }
  const buf = Buffer.alloc(HEADER_SIZE + 4 + count * 4);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);

  view.setInt32(0, HEADER_SIZE, true);
  const dims = [3, nx, ny, nz, 1, 1, 1, 1];
  dims.forEach((d, i) => view.setInt16(40 + i * 2, d, true));
  view.setInt16(70, 16, true); // float32
  view.setInt16(72, 32, true);
  const [sx, sy, sz] = vol.spacing;
  [1, sx, sy, sz, 0, 0, 0, 0].forEach((p, i) => view.setFloat32(76 + i * 4, p, true));
  view.setFloat32(108, HEADER_SIZE + 4, true);
  view.setFloat32(112, 1, true); // scl_slope
  view.setFloat32(116, 0, true); // scl_inter
  view.setUint8(123, 2); // spatial units: mm
  view.setInt16(252, 1, true); // qform_code
  view.setInt16(254, 1, true); // sform_code
  const [ox, oy, oz] = vol.origin;
  [0, 0, 0, ox, oy, oz].forEach((q, i) => view.setFloat32(256 + i * 4, q, true));
  [sx, 0, 0, ox].forEach((v, i) => view.setFloat32(280 + i * 4, v, true));
  [0, sy, 0, oy].forEach((v, i) => view.setFloat32(296 + i * 4, v, true));
  [0, 0, sz, oz].forEach((v, i) => view.setFloat32(312 + i * 4, v, true));
  MAGIC_SINGLE.forEach((b, i) => view.setUint8(344 + i, b));

  for (let i = 0; i < count; i++) {
    view.setFloat32(HEADER_SIZE + 4 + i * 4, vol.data[i], true);
  }

  writeFileSync(path, path.endsWith('.gz') ? gzipSync(buf) : buf);
}
