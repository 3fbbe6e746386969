import { execFileSync } from 'child_process';
import { mkdtempSync, rmSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';

import type { Triple, Volume } from '../src/nifti.js';
import { volumeFrom } from '../src/nifti.js';

/** Small deterministic RNG so every test case is reproducible by seed. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomVolume(
  rng: () => number,
  shape: Triple,
  spacing: Triple,
  scale = 100,
  origin: Triple = [0, 0, 0],
): Volume {
  const n = shape[0] * shape[1] * shape[2];
  const values = new Float32Array(n);
  for (let i = 0; i < n; i++) values[i] = Math.fround((rng() - 0.3) * scale);
  return volumeFrom(values, shape, spacing, origin);
}

export function randomMask(
  rng: () => number,
  shape: Triple,
  spacing: Triple,
  density = 0.25,
  origin: Triple = [0, 0, 0],
): Volume {
  const n = shape[0] * shape[1] * shape[2];
  const values = new Float32Array(n);
  for (let i = 0; i < n; i++) values[i] = rng() < density ? 1 : 0;
  return volumeFrom(values, shape, spacing, origin);
}

export function sameBits(a: Float32Array, b: Float32Array): boolean {
  if (a.length !== b.length) return false;
  const ba = Buffer.from(a.buffer, a.byteOffset, a.byteLength);
  const bb = Buffer.from(b.buffer, b.byteOffset, b.byteLength);
  return ba.equals(bb);
}

export function python(code: string): string {
  const py = process.env.PETPREP_PYTHON ?? 'python3';
  return execFileSync(py, ['-c', code], { encoding: 'utf8' });
}

export function withTempDir<T>(work: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), 'petprep-ts-test-'));
  try {
    return work(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

export interface RawNiftiOptions {
  datatype?: number;
  bitpix?: number;
  payload: Buffer;
  shape: Triple;
  spacing?: Triple;
  sclSlope?: number;
  sclInter?: number;
  magic?: number[];
  sizeofHdr?: number;
  sformCode?: number;
  srow?: number[]; // 12 values, row-major 3x4
}

/** Assemble NIfTI bytes by hand, independent of the writer under test. */
export function buildRawNifti(opts: RawNiftiOptions): Buffer {
  const spacing = opts.spacing ?? [1, 1, 1];
  const buf = Buffer.alloc(352 + opts.payload.length);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  view.setInt32(0, opts.sizeofHdr ?? 348, true);
  const dims = [3, opts.shape[0], opts.shape[1], opts.shape[2], 1, 1, 1, 1];
  dims.forEach((d, i) => view.setInt16(40 + i * 2, d, true));
  view.setInt16(70, opts.datatype ?? 16, true);
  view.setInt16(72, opts.bitpix ?? (opts.datatype === 2 ? 8 : opts.datatype === 4 ? 16 : 32), true);
  [1, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0].forEach((p, i) =>
    view.setFloat32(76 + i * 4, p, true),
  );
  view.setFloat32(108, 352, true);
  view.setFloat32(112, opts.sclSlope ?? 1, true);
  view.setFloat32(116, opts.sclInter ?? 0, true);
  view.setInt16(254, opts.sformCode ?? 1, true);
  const srow = opts.srow ?? [spacing[0], 0, 0, 0, 0, spacing[1], 0, 0, 0, 0, spacing[2], 0];
  srow.forEach((v, i) => view.setFloat32(280 + i * 4, v, true));
  const magic = opts.magic ?? [0x6e, 0x2b, 0x31, 0x00];
  magic.forEach((b, i) => view.setUint8(344 + i, b));
  opts.payload.copy(buf, 352);
  return buf;
}
