"""Segmentation evaluation: Dice, false-positive and false-negative volume.

FP/FN volumes are component-wise: a predicted component with zero overlap
with the ground-truth foreground counts as false positive in full, and a
ground-truth component with zero overlap with the prediction counts as false
negative in full. Counting is exact integer arithmetic; the only floating
point is the final scale by voxel volume (sx*sy*sz mm^3, reported in cm^3).

Dice is undefined on cases with empty ground truth; such cases carry no dice
and no FN volume, and cohort means skip them for those two columns.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from scipy import ndimage

from .errors import EmptyCohortError, EmptyGroundTruthError
from .grid import LabelMask, require_same_geometry

log = logging.getLogger(__name__)


class Connectivity(enum.IntEnum):
    """Voxel adjacency: faces only, faces+edges, or faces+edges+corners."""

    FACES = 6
    FACES_EDGES = 18
    FACES_EDGES_CORNERS = 26


DEFAULT_CONNECTIVITY = Connectivity.FACES_EDGES

_STRUCTURE_RANK = {
    Connectivity.FACES: 1,
    Connectivity.FACES_EDGES: 2,
    Connectivity.FACES_EDGES_CORNERS: 3,
}


@dataclass(frozen=True)
class LabeledComponents:
    """Dense labeling, 0 = background, components numbered 1..count."""

    labels: np.ndarray
    count: int
    component_sizes: tuple[int, ...]


@dataclass(frozen=True)
class CaseMetrics:
    case_id: str
    dice: float | None
    fp_vol_cm3: float
    fn_vol_cm3: float | None


@dataclass(frozen=True)
class CohortReport:
    mean_dice_pct: float | None
    mean_fp_vol_cm3: float
    mean_fn_vol_cm3: float | None
    n_cases: int
    n_positive_cases: int


def connected_components(
    mask: LabelMask, conn: Connectivity = DEFAULT_CONNECTIVITY
) -> LabeledComponents:
    """Label maximal connected foreground regions.

    Labels are assigned in first-visit raster (C) order, so the numbering is
    deterministic and independent of the labeling backend.
    """
    conn = Connectivity(conn)
    structure = ndimage.generate_binary_structure(3, _STRUCTURE_RANK[conn])
    raw, count = ndimage.label(mask.data, structure=structure)
    raw = raw.astype(np.int32, copy=False)
    if count == 0:
        return LabeledComponents(labels=raw, count=0, component_sizes=())

    flat = raw.ravel()
    nz = np.flatnonzero(flat)
    values = flat[nz]
    # first raster position of each raw label, then rank by that position
    uniq, first_pos = np.unique(values, return_index=True)
    order = np.argsort(first_pos, kind="stable")
    lut = np.zeros(count + 1, dtype=np.int32)
    lut[uniq[order]] = np.arange(1, count + 1, dtype=np.int32)
    labels = lut[raw]

    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    return LabeledComponents(
        labels=labels, count=int(count), component_sizes=tuple(int(s) for s in sizes)
    )


def dice(pred: LabelMask, gt: LabelMask) -> float:
    """Overlap coefficient 2|P∩G| / (|P|+|G|), exact integer counting."""
    require_same_geometry(pred, gt, "dice")
    g = int(np.count_nonzero(gt.data))
    if g == 0:
        raise EmptyGroundTruthError("ground truth has no foreground voxels")
    p = int(np.count_nonzero(pred.data))
    inter = int(np.count_nonzero(np.logical_and(pred.data, gt.data)))
    return (2 * inter) / (p + g)


def _zero_overlap_voxels(source: LabelMask, other: LabelMask, conn: Connectivity) -> int:
    """Total voxel count of source components with no foreground in other."""
    comps = connected_components(source, conn)
    if comps.count == 0:
        return 0
    other_fg = other.data != 0
    overlap = np.bincount(comps.labels[other_fg], minlength=comps.count + 1)
    total = 0
    for label in range(1, comps.count + 1):
        if overlap[label] == 0:
            total += comps.component_sizes[label - 1]
    return total


def lesion_volumes(
    pred: LabelMask, gt: LabelMask, conn: Connectivity = DEFAULT_CONNECTIVITY
) -> tuple[float, float]:
    """(fp_vol_cm3, fn_vol_cm3) under the zero-overlap component criterion."""
    require_same_geometry(pred, gt, "lesion_volumes")
    sx, sy, sz = pred.spacing
    voxel_mm3 = sx * sy * sz
    fp_voxels = _zero_overlap_voxels(pred, gt, conn)
    fn_voxels = _zero_overlap_voxels(gt, pred, conn)
    return fp_voxels * voxel_mm3 / 1000.0, fn_voxels * voxel_mm3 / 1000.0


def evaluate_case(
    pred: LabelMask,
    gt: LabelMask,
    conn: Connectivity = DEFAULT_CONNECTIVITY,
    case_id: str = "",
) -> CaseMetrics:
    """Per-case metrics; dice and FN volume are absent when gt is empty."""
    require_same_geometry(pred, gt, "evaluate_case")
    fp, fn = lesion_volumes(pred, gt, conn)
    if int(np.count_nonzero(gt.data)) == 0:
        return CaseMetrics(case_id=case_id, dice=None, fp_vol_cm3=fp, fn_vol_cm3=None)
    return CaseMetrics(case_id=case_id, dice=dice(pred, gt), fp_vol_cm3=fp, fn_vol_cm3=fn)


def aggregate_cohort(cases: list[CaseMetrics]) -> CohortReport:
    """Fold per-case metrics into cohort means.

    Dice (as percent) and FN volume average over positive cases only; FP
    volume averages over every case. Cases are sorted by case_id before
    folding so the result does not depend on evaluation order. No rounding
    here; presentation rounding happens at serialization.
    """
    if not cases:
        raise EmptyCohortError("cannot aggregate an empty cohort")
    ordered = sorted(cases, key=lambda c: c.case_id)
    positive = [c for c in ordered if c.dice is not None]
    mean_fp = sum(c.fp_vol_cm3 for c in ordered) / len(ordered)
    if not positive:
        log.warning("cohort has no positive cases; dice and FN volume means are undefined")
        return CohortReport(
            mean_dice_pct=None,
            mean_fp_vol_cm3=mean_fp,
            mean_fn_vol_cm3=None,
            n_cases=len(ordered),
            n_positive_cases=0,
        )
    mean_dice_pct = 100.0 * sum(c.dice for c in positive) / len(positive)
    mean_fn = sum(c.fn_vol_cm3 for c in positive) / len(positive)
    return CohortReport(
        mean_dice_pct=mean_dice_pct,
        mean_fp_vol_cm3=mean_fp,
        mean_fn_vol_cm3=mean_fn,
        n_cases=len(ordered),
        n_positive_cases=len(positive),
    )


# --- report serialization ----------------------------------------------------

def _round2(value: float | None) -> str:
    """Two decimals, decimal half-up (2.675 -> '2.68'); '' for absent."""
    if value is None:
        return ""
    return str(Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def report_to_json(
    cases: list[CaseMetrics], report: CohortReport, conn: Connectivity
) -> str:
    """Full-precision machine-readable report."""
    doc = {
        "connectivity": int(conn),
        "cohort": {
            "mean_dice_pct": report.mean_dice_pct,
            "mean_fp_vol_cm3": report.mean_fp_vol_cm3,
            "mean_fn_vol_cm3": report.mean_fn_vol_cm3,
            "n_cases": report.n_cases,
            "n_positive_cases": report.n_positive_cases,
        },
        "cases": [
            {
                "case_id": c.case_id,
                "dice": c.dice,
                "fp_vol_cm3": c.fp_vol_cm3,
                "fn_vol_cm3": c.fn_vol_cm3,
            }
            for c in sorted(cases, key=lambda c: c.case_id)
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_to_csv(cases: list[CaseMetrics], report: CohortReport) -> str:
    """Presentation table: dice as percent, volumes in cm^3, 2 decimals.

    One row per case plus a final row with case_id MEAN holding the cohort
    means. Absent values serialize as empty cells.
    """
    lines = ["case_id,dice,fp_vol_cm3,fn_vol_cm3"]
    for c in sorted(cases, key=lambda c: c.case_id):
        dice_pct = None if c.dice is None else 100.0 * c.dice
        lines.append(
            f"{c.case_id},{_round2(dice_pct)},{_round2(c.fp_vol_cm3)},{_round2(c.fn_vol_cm3)}"
        )
    lines.append(
        "MEAN,"
        f"{_round2(report.mean_dice_pct)},"
        f"{_round2(report.mean_fp_vol_cm3)},"
        f"{_round2(report.mean_fn_vol_cm3)}"
    )
    return "\n".join(lines) + "\n"
