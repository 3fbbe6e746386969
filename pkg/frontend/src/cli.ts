/**
 * Subprocess plumbing: every binding call shells out to `python3 -m petprep`.
 * Set PETPREP_PYTHON to point at a specific interpreter.
 */

import { execFileSync } from 'child_process';

import { CliDataError, CliUsageError } from './errors.js';

export interface CliRun {
  stdout: string;
  stderr: string;
}

interface ExecError {
  status?: number | null;
  stdout?: string | Buffer;
  stderr?: string | Buffer;
  message?: string;
}

function text(v: string | Buffer | undefined): string {
  if (v === undefined) return '';
  return typeof v === 'string' ? v : v.toString('utf8');
}

export function runPetprep(args: string[]): CliRun {
  const python = process.env.PETPREP_PYTHON ?? 'python3';
  try {
    const stdout = execFileSync(python, ['-m', 'petprep', ...args], {
      encoding: 'utf8',
      stdio: ['ignore', 'pipe', 'pipe'],
      maxBuffer: 64 * 1024 * 1024,
    });
    return { stdout, stderr: '' };
  } catch (e) {
    const err = e as ExecError;
    const stderr = text(err.stderr).trim();
    if (err.status === 1) {
      throw new CliUsageError(stderr || 'usage error');
    }
    if (err.status === 2) {
      // stderr contract: "error: <ClassName>: <message>"
      const match = /^error: ([A-Za-z_][A-Za-z0-9_]*): ([\s\S]*)$/m.exec(stderr);
      if (match) {
        throw new CliDataError(match[1], match[2]);
      }
      throw new CliDataError('PetprepError', stderr || 'data error');
    }
    throw new Error(`petprep invocation failed: ${err.message ?? e}`);
  }
}
