"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error (the message names the
offending case where one exists). The PETPREP_LOG environment variable
(error|info|debug) controls verbosity; logs go to stderr, machine-readable
output to files or stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .augment import (
    apply_pipeline,
    config_hash,
    load_pipeline_config_file,
    preprocess_triplet,
)
from .dataset_io import load_manifest, read_nifti, stratified_split, write_manifest, write_nifti
from .errors import PetprepError
from .metrics import (
    Connectivity,
    aggregate_cohort,
    evaluate_case,
    report_to_csv,
    report_to_json,
)

log = logging.getLogger("petprep")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the contract reserves 2 for data errors
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="petprep", description="PET/CT lesion segmentation data toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("split", help="stratified train/test split of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--test-fraction", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("preprocess", help="resample + clip + normalize each case")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("augment", help="write stochastic replicates with provenance")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--replicates", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("evaluate", help="per-case and cohort segmentation metrics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--connectivity", type=int, choices=[6, 18, 26], default=18)
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("inspect", help="print basic facts about one volume")
    p.add_argument("file")
    p.set_defaults(func=_cmd_inspect)

    return parser


def _setup_logging() -> None:
    name = os.environ.get("PETPREP_LOG", "info").strip().lower()
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        name, logging.INFO
    )
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True
    )


def _error_name(e: BaseException) -> str:
    # the per-case wrapper is a bare PetprepError; report the class underneath
    while type(e) is PetprepError and e.__cause__ is not None:
        e = e.__cause__
    return type(e).__name__


def _require_positive(value: int, flag: str) -> None:
    if value < 1:
        raise _UsageError(f"{flag} must be >= 1, got {value}")


def _for_each_case(entries, work, jobs: int):
    """Run one work item per case; failures name the case. Order preserved."""

    def run(entry):
        try:
            return work(entry)
        except (PetprepError, OSError) as e:
            raise PetprepError(f"case {entry.case_id}: {e}") from e

    if jobs <= 1:
        return [run(e) for e in entries]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run, e) for e in entries]
        return [f.result() for f in futures]


def _read_triplet(manifest, entry):
    pet = read_nifti(manifest.resolve(entry.pet_path))
    ct = read_nifti(manifest.resolve(entry.ct_path))
    mask = read_nifti(manifest.resolve(entry.mask_path), as_mask=True)
    return pet, ct, mask


def _cmd_split(args) -> None:
    manifest = load_manifest(args.manifest)
    result = stratified_split(manifest, args.test_fraction, args.seed)
    by_id = manifest.by_id()
    write_manifest([by_id[c] for c in result.train], args.out_train)
    write_manifest([by_id[c] for c in result.test], args.out_test)
    log.info("split seed %d, bins %s", result.seed, result.bin_summary)
    print(f"train={len(result.train)} test={len(result.test)}")


def _cmd_preprocess(args) -> None:
    _require_positive(args.jobs, "--jobs")
    config = load_pipeline_config_file(args.config)
    manifest = load_manifest(args.manifest)
    os.makedirs(args.out_dir, exist_ok=True)
    log.info("preprocess: master seed %d, config hash %s", config.master_seed, config_hash(config))

    def work(entry):
        pet, ct, mask = _read_triplet(manifest, entry)
        pet, ct, mask = preprocess_triplet(pet, ct, mask, config)
        for channel, vol in (("pet", pet), ("ct", ct), ("mask", mask)):
            write_nifti(vol, os.path.join(args.out_dir, f"{entry.case_id}_{channel}.nii.gz"))
        log.debug("preprocessed %s", entry.case_id)

    _for_each_case(manifest.entries, work, args.jobs)
    print(f"preprocessed {len(manifest.entries)} cases -> {args.out_dir}")


def _cmd_augment(args) -> None:
    _require_positive(args.replicates, "--replicates")
    _require_positive(args.jobs, "--jobs")
    config = load_pipeline_config_file(args.config)
    config = dataclasses.replace(config, master_seed=args.seed)  # flag wins over file
    chash = config_hash(config)
    manifest = load_manifest(args.manifest)
    os.makedirs(args.out_dir, exist_ok=True)
    log.info("augment: master seed %d, config hash %s", config.master_seed, chash)

    def work(entry):
        pet, ct, mask = _read_triplet(manifest, entry)
        for rep in range(args.replicates):
            sample = apply_pipeline(pet, ct, mask, config, entry.case_id, rep)
            stem = f"{entry.case_id}_rep{rep}"
            for channel, vol in (("pet", sample.pet), ("ct", sample.ct), ("mask", sample.mask)):
                write_nifti(vol, os.path.join(args.out_dir, f"{stem}_{channel}.nii.gz"))
            sidecar = {
                **sample.provenance.to_dict(),
                "master_seed": config.master_seed,
                "config_hash": chash,
            }
            side_path = os.path.join(args.out_dir, f"{stem}_provenance.json")
            with open(side_path, "w", encoding="utf-8") as f:
                f.write(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        log.debug("augmented %s x%d", entry.case_id, args.replicates)

    _for_each_case(manifest.entries, work, args.jobs)
    print(
        f"augmented {len(manifest.entries)} cases x {args.replicates} replicates -> {args.out_dir}"
    )


def _cmd_evaluate(args) -> None:
    _require_positive(args.jobs, "--jobs")
    manifest = load_manifest(args.manifest)
    conn = Connectivity(args.connectivity)
    log.info("evaluate: connectivity %d, pred dir %s", int(conn), args.pred_dir)

    def work(entry):
        gt = read_nifti(manifest.resolve(entry.mask_path), as_mask=True)
        pred_path = os.path.join(args.pred_dir, os.path.basename(entry.mask_path))
        pred = read_nifti(pred_path, as_mask=True)
        return evaluate_case(pred, gt, conn, entry.case_id)

    cases = _for_each_case(manifest.entries, work, args.jobs)
    report = aggregate_cohort(cases)
    with open(args.out_json, "w", encoding="utf-8") as f:
        f.write(report_to_json(cases, report, conn))
    with open(args.out_csv, "w", encoding="utf-8") as f:
        f.write(report_to_csv(cases, report))
    print(
        f"n_cases={report.n_cases} n_positive={report.n_positive_cases} "
        f"mean_dice_pct={report.mean_dice_pct} "
        f"mean_fp_vol_cm3={report.mean_fp_vol_cm3} "
        f"mean_fn_vol_cm3={report.mean_fn_vol_cm3}"
    )


def _cmd_inspect(args) -> None:
    vol = read_nifti(args.file)
    data = vol.data
    print(f"path: {args.file}")
    print(f"shape: {vol.shape[0]} {vol.shape[1]} {vol.shape[2]}")
    print(f"spacing: {vol.spacing[0]:g} {vol.spacing[1]:g} {vol.spacing[2]:g}")
    print(f"origin: {vol.origin[0]:g} {vol.origin[1]:g} {vol.origin[2]:g}")
    print(f"min: {float(data.min()):g}")
    print(f"max: {float(data.max()):g}")
    print(f"foreground_count: {int(np.count_nonzero(data))}")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    _setup_logging()
    try:
        args.func(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (PetprepError, OSError) as e:
        print(f"error: {_error_name(e)}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
