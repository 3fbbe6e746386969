#!/usr/bin/env python3
"""Generate a synthetic PET/CT cohort with lesion masks and a manifest.

Lesions are random ellipsoids with elevated PET uptake; the manifest's
lesion_count column is measured from the finished mask, not from the number
of ellipsoids placed (overlapping blobs merge).
"""

import argparse
import os
import sys

import numpy as np

from petprep import (
    Connectivity,
    ManifestEntry,
    connected_components,
    make_mask,
    make_volume,
    write_manifest,
    write_nifti,
)

TRACERS = ("FDG", "PSMA")


def ellipsoid(shape, center, radii):
    grids = np.ogrid[tuple(slice(0, n) for n in shape)]
    acc = np.zeros(shape, dtype=np.float64)
    for g, c, r in zip(grids, center, radii):
        acc = acc + ((g - c) / r) ** 2
    return acc <= 1.0


def synthesize_case(rng, shape, spacing):
    lesions = np.zeros(shape, dtype=bool)
    n_target = int(rng.choice([0, 1, 1, 2, 3, 5, 8, 15, 25, 40], p=[0.15, 0.2, 0.2, 0.15, 0.1, 0.08, 0.05, 0.04, 0.02, 0.01]))
    for _ in range(n_target):
        center = [rng.uniform(3, n - 3) for n in shape]
        radii = [rng.uniform(1.0, 3.5) for _ in shape]
        lesions |= ellipsoid(shape, center, radii)

    background = rng.gamma(2.0, 0.8, size=shape)
    pet = background + np.where(lesions, rng.uniform(6.0, 40.0), 0.0)
    ct = rng.normal(40.0, 20.0, size=shape)
    ct = np.where(lesions, ct + 30.0, ct)

    mask = make_mask(lesions.astype(np.uint8), spacing)
    return (
        make_volume(pet.astype(np.float32), spacing),
        make_volume(ct.astype(np.float32), spacing),
        mask,
        connected_components(mask, Connectivity.FACES_EDGES).count,
    )


def build_cohort(out_dir, n_cases, shape, spacing, seed):
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n_cases):
        cid = f"syn{i:04d}"
        pet, ct, mask, lesion_count = synthesize_case(rng, shape, spacing)
        write_nifti(pet, os.path.join(out_dir, f"{cid}_pet.nii.gz"))
        write_nifti(ct, os.path.join(out_dir, f"{cid}_ct.nii.gz"))
        write_nifti(mask, os.path.join(out_dir, f"{cid}_mask.nii.gz"))
        entries.append(
            ManifestEntry(
                case_id=cid,
                tracer=TRACERS[i % 2],
                pet_path=f"{cid}_pet.nii.gz",
                ct_path=f"{cid}_ct.nii.gz",
                mask_path=f"{cid}_mask.nii.gz",
                lesion_count=lesion_count,
            )
        )
    manifest_path = os.path.join(out_dir, "manifest.csv")
    write_manifest(entries, manifest_path)
    return manifest_path, entries


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--cases", type=int, default=20)
    ap.add_argument("--shape", type=int, nargs=3, default=[32, 32, 32], metavar=("NX", "NY", "NZ"))
    ap.add_argument("--spacing", type=float, nargs=3, default=[2.0, 2.0, 3.0], metavar=("SX", "SY", "SZ"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    manifest_path, entries = build_cohort(
        args.out_dir, args.cases, tuple(args.shape), tuple(args.spacing), args.seed
    )
    counts = [e.lesion_count for e in entries]
    print(f"wrote {len(entries)} cases to {args.out_dir}")
    print(f"manifest: {manifest_path}")
    print(f"lesion counts: min {min(counts)}, median {int(np.median(counts))}, max {max(counts)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
