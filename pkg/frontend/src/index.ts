/**
 * Bindings to the petprep toolkit. Arrays go in, arrays come out; all actual
 * processing happens in the toolkit via its command line, its NIfTI files,
 * and its JSON schemas, so these calls can never drift from what the CLI
 * would produce. Inputs are copied out to temp files, outputs freshly read
 * back; the caller's buffers are never aliased or mutated.
 */

import { mkdtempSync, mkdirSync, readFileSync, rmSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';

import { runPetprep } from './cli.js';
import { readNifti, writeNifti, volumeFrom } from './nifti.js';
import type { Triple, Volume } from './nifti.js';

export { readNifti, writeNifti, volumeFrom, runPetprep };
export type { Triple, Volume };
export * from './errors.js';

const MANIFEST_HEADER = 'case_id,tracer,pet_path,ct_path,mask_path,lesion_count';

export interface CaseMetrics {
  caseId: string;
  /** null when the ground truth has no foreground */
  dice: number | null;
  fpVolCm3: number;
  /** null when the ground truth has no foreground */
  fnVolCm3: number | null;
  connectivity: number;
  /** the toolkit's full-precision report, verbatim */
  reportJson: string;
}

export interface PipelineResult {
  pet: Volume;
  ct: Volume;
  mask: Volume;
  provenance: Record<string, unknown>;
  /** the provenance sidecar, verbatim */
  provenanceJson: string;
}

function withTempDir<T>(work: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), 'petprep-bind-'));
  try {
    return work(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

function writeManifestRow(dir: string, caseId: string): string {
  const row = `${caseId},FDG,${caseId}_pet.nii.gz,${caseId}_ct.nii.gz,${caseId}_mask.nii.gz,0`;
  const path = join(dir, 'manifest.csv');
  writeFileSync(path, `${MANIFEST_HEADER}\n${row}\n`);
  return path;
}

/**
 * Score one predicted mask against ground truth. Numerically identical to
 * `petprep evaluate` because it is `petprep evaluate`, on a one-case cohort.
 */
export function evaluate(
  pred: Volume,
  gt: Volume,
  connectivity: 6 | 18 | 26 = 18,
  caseId = 'case',
): CaseMetrics {
  return withTempDir((dir) => {
    const predDir = join(dir, 'pred');
    mkdirSync(predDir);
    writeNifti(gt, join(dir, `${caseId}_mask.nii.gz`));
    writeNifti(pred, join(predDir, `${caseId}_mask.nii.gz`));
    const manifest = writeManifestRow(dir, caseId);

    const outJson = join(dir, 'report.json');
    runPetprep([
      'evaluate',
      '--manifest', manifest,
      '--pred-dir', predDir,
      '--connectivity', String(connectivity),
      '--out-json', outJson,
      '--out-csv', join(dir, 'report.csv'),
    ]);

    const reportJson = readFileSync(outJson, 'utf8');
    const report = JSON.parse(reportJson);
    const record = report.cases[0];
    return {
      caseId: record.case_id,
      dice: record.dice,
      fpVolCm3: record.fp_vol_cm3,
      fnVolCm3: record.fn_vol_cm3,
      connectivity: report.connectivity,
      reportJson,
    };
  });
}

/**
 * Run the preprocessing + augmentation pipeline for one (case, replicate).
 * The config is passed by path so the toolkit's validator is the only
 * validator; its master_seed (default 0) keys the randomness, making the
 * result a pure function of (config, case_id, replicate).
 */
export function applyPipeline(
  pet: Volume,
  ct: Volume,
  mask: Volume,
  configPath: string,
  caseId: string,
  replicate = 0,
): PipelineResult {
  if (!Number.isInteger(replicate) || replicate < 0) {
    throw new RangeError(`replicate must be a non-negative integer, got ${replicate}`);
  }
  const config = JSON.parse(readFileSync(configPath, 'utf8'));
  const masterSeed: number = config.master_seed ?? 0;

  return withTempDir((dir) => {
    writeNifti(pet, join(dir, `${caseId}_pet.nii.gz`));
    writeNifti(ct, join(dir, `${caseId}_ct.nii.gz`));
    writeNifti(mask, join(dir, `${caseId}_mask.nii.gz`));
    const manifest = writeManifestRow(dir, caseId);

    const outDir = join(dir, 'out');
    runPetprep([
      'augment',
      '--config', configPath,
      '--manifest', manifest,
      '--replicates', String(replicate + 1),
      '--seed', String(masterSeed),
      '--out-dir', outDir,
    ]);

    const stem = join(outDir, `${caseId}_rep${replicate}`);
    const provenanceJson = readFileSync(`${stem}_provenance.json`, 'utf8');
    return {
      pet: readNifti(`${stem}_pet.nii.gz`),
      ct: readNifti(`${stem}_ct.nii.gz`),
      mask: readNifti(`${stem}_mask.nii.gz`, true),
      provenance: JSON.parse(provenanceJson),
      provenanceJson,
    };
  });
}
