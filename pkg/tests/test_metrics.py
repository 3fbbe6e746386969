import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from petprep import (
    CaseMetrics,
    Connectivity,
    aggregate_cohort,
    connected_components,
    dice,
    evaluate_case,
    lesion_volumes,
    report_to_csv,
    report_to_json,
)
from petprep.errors import EmptyCohortError, EmptyGroundTruthError, GeometryMismatchError
from conftest import flood_components, mask, oracle_fp_fn_cm3

mask_arrays = hnp.arrays(
    dtype=np.uint8,
    shape=(5, 5, 5),
    elements=st.integers(0, 1),
)


# --- connected components ----------------------------------------------------

def test_single_voxel_single_component():
    arr = np.zeros((3, 3, 3), dtype=np.uint8)
    arr[1, 1, 1] = 1
    comps = connected_components(mask(arr), Connectivity.FACES)
    assert comps.count == 1
    assert comps.component_sizes == (1,)


def test_corner_adjacent_pair_by_connectivity():
    arr = np.zeros((2, 2, 2), dtype=np.uint8)
    arr[0, 0, 0] = 1
    arr[1, 1, 1] = 1
    counts = {c: connected_components(mask(arr), Connectivity(c)).count for c in (6, 18, 26)}
    assert counts == {6: 2, 18: 2, 26: 1}


def test_edge_adjacent_pair_by_connectivity():
    arr = np.zeros((2, 2, 2), dtype=np.uint8)
    arr[0, 0, 0] = 1
    arr[0, 1, 1] = 1
    counts = {c: connected_components(mask(arr), Connectivity(c)).count for c in (6, 18, 26)}
    assert counts == {6: 2, 18: 1, 26: 1}


def test_random_masks_match_flood_fill_oracle(rng):
    # oracle labels in the same first-visit raster order, so the label
    # arrays must match exactly, not just up to renaming
    for seed in range(200):
        local = np.random.default_rng(seed)
        arr = (local.random((6, 6, 6)) < 0.35).astype(np.uint8)
        for conn in (6, 18, 26):
            got = connected_components(mask(arr), Connectivity(conn))
            want_labels, want_count = flood_components(arr, conn)
            assert got.count == want_count
            assert np.array_equal(got.labels, want_labels)
            assert sum(got.component_sizes) == int(arr.sum())


def test_labels_empty_mask():
    comps = connected_components(mask(np.zeros((3, 3, 3), dtype=np.uint8)))
    assert comps.count == 0 and comps.component_sizes == ()
    assert not comps.labels.any()


@given(arr=mask_arrays, shift=st.integers(0, 2))
@settings(max_examples=40, deadline=None)
def test_components_translation_invariant(arr, shift):
    padded = np.zeros((8, 8, 8), dtype=np.uint8)
    padded[:5, :5, :5] = arr
    moved = np.roll(padded, shift, axis=0)
    a = connected_components(mask(padded))
    b = connected_components(mask(moved))
    assert a.count == b.count
    assert sorted(a.component_sizes) == sorted(b.component_sizes)


# --- dice --------------------------------------------------------------------

def test_dice_identical_masks(rng):
    arr = (rng.random((4, 4, 4)) < 0.5).astype(np.uint8)
    arr[0, 0, 0] = 1
    assert dice(mask(arr), mask(arr)) == 1.0


def test_dice_empty_prediction():
    gt = mask(np.ones((2, 2, 2), dtype=np.uint8))
    pred = mask(np.zeros((2, 2, 2), dtype=np.uint8))
    assert dice(pred, gt) == 0.0


def test_dice_two_thirds():
    pred = mask([1, 1, 1, 0])
    gt = mask([1, 1, 0, 1])
    assert abs(dice(pred, gt) - 2 * 2 / 6) < 1e-12


def test_dice_requires_nonempty_gt():
    with pytest.raises(EmptyGroundTruthError):
        dice(mask([1, 0]), mask([0, 0]))


def test_dice_requires_shared_geometry():
    with pytest.raises(GeometryMismatchError):
        dice(mask([1, 0]), mask([1, 0], spacing=(2.0, 1.0, 1.0)))


@given(a=mask_arrays, b=mask_arrays)
@settings(max_examples=50, deadline=None)
def test_dice_symmetric_and_flip_invariant(a, b):
    if a.sum() == 0 or b.sum() == 0:
        return
    d1 = dice(mask(a), mask(b))
    d2 = dice(mask(b), mask(a))
    assert d1 == d2
    assert 0.0 <= d1 <= 1.0
    d3 = dice(mask(a[::-1].copy()), mask(b[::-1].copy()))
    assert abs(d1 - d3) < 1e-15


# --- lesion volumes ----------------------------------------------------------

def test_volumes_zero_for_identical(rng):
    arr = (rng.random((5, 5, 5)) < 0.4).astype(np.uint8)
    fp, fn = lesion_volumes(mask(arr), mask(arr))
    assert fp == 0.0 and fn == 0.0


def test_disjoint_blob_fp_volume():
    gt = np.zeros((8, 8, 8), dtype=np.uint8)
    gt[0, 0, 0] = 1
    pred = gt.copy()
    pred[5:7, 5:7, 5:7] = 1  # 8 disjoint voxels, 8 mm^3 each at 2 mm spacing
    fp, fn = lesion_volumes(mask(pred, spacing=(2.0, 2.0, 2.0)), mask(gt, spacing=(2.0, 2.0, 2.0)))
    assert fp == 0.064
    assert fn == 0.0


def test_fn_counts_only_untouched_component():
    gt = np.zeros((8, 8, 8), dtype=np.uint8)
    gt[0:2, 0:2, 0:2] = 1  # component A: 8 voxels
    gt[5:8, 5:8, 5:8] = 1  # component B: 27 voxels, never predicted
    pred = np.zeros((8, 8, 8), dtype=np.uint8)
    pred[0, 0, 0] = 1  # touches component A only
    fp, fn = lesion_volumes(mask(pred), mask(gt))
    assert fp == 0.0
    assert fn == 27 * 1.0 / 1000.0


@given(a=mask_arrays, b=mask_arrays)
@settings(max_examples=40, deadline=None)
def test_fp_fn_definition_symmetry(a, b):
    fp_ab, fn_ab = lesion_volumes(mask(a), mask(b))
    fp_ba, fn_ba = lesion_volumes(mask(b), mask(a))
    assert fp_ab == fn_ba and fn_ab == fp_ba
    assert fp_ab >= 0.0 and fn_ab >= 0.0


@given(a=mask_arrays, b=mask_arrays, extra=mask_arrays)
@settings(max_examples=30, deadline=None)
def test_fp_monotone_in_growing_gt(a, b, extra):
    grown = np.logical_or(b, extra).astype(np.uint8)
    fp_small, _ = lesion_volumes(mask(a), mask(b))
    fp_large, _ = lesion_volumes(mask(a), mask(grown))
    assert fp_large <= fp_small


def test_volumes_match_oracle_on_random_pairs():
    for seed in range(50):
        local = np.random.default_rng(1000 + seed)
        pred = (local.random((6, 6, 6)) < 0.3).astype(np.uint8)
        gt = (local.random((6, 6, 6)) < 0.3).astype(np.uint8)
        spacing = (1.5, 2.0, 1.0)
        got = lesion_volumes(mask(pred, spacing=spacing), mask(gt, spacing=spacing))
        want = oracle_fp_fn_cm3(pred, gt, spacing, 18)
        assert got == want


# --- per-case and cohort -----------------------------------------------------

def test_evaluate_case_both_empty():
    e = mask(np.zeros((2, 2, 2), dtype=np.uint8))
    m = evaluate_case(e, e, case_id="neg")
    assert m.dice is None and m.fn_vol_cm3 is None
    assert m.fp_vol_cm3 == 0.0


def test_evaluate_case_unit_conversion():
    gt = mask(np.zeros((3, 3, 3), dtype=np.uint8))
    pred_arr = np.zeros((3, 3, 3), dtype=np.uint8)
    pred_arr[1, 1, 1] = 1
    m = evaluate_case(mask(pred_arr), gt, case_id="c")
    assert m.dice is None and m.fn_vol_cm3 is None
    assert m.fp_vol_cm3 == 0.001  # 1 mm^3


def test_evaluate_case_perfect():
    arr = np.ones((2, 2, 2), dtype=np.uint8)
    m = evaluate_case(mask(arr), mask(arr), case_id="p")
    assert m.dice == 1.0 and m.fp_vol_cm3 == 0.0 and m.fn_vol_cm3 == 0.0


def test_aggregate_single_perfect_case():
    r = aggregate_cohort([CaseMetrics("a", 1.0, 0.0, 0.0)])
    assert r.mean_dice_pct == 100.0
    assert r.mean_fp_vol_cm3 == 0.0 and r.mean_fn_vol_cm3 == 0.0
    assert r.n_cases == 1 and r.n_positive_cases == 1


def test_aggregate_mean_dice():
    r = aggregate_cohort(
        [CaseMetrics("a", 1.0, 0.0, 0.0), CaseMetrics("b", 0.5, 0.0, 0.0)]
    )
    assert r.mean_dice_pct == 75.0


def test_aggregate_empty_cohort():
    with pytest.raises(EmptyCohortError):
        aggregate_cohort([])


def test_aggregate_all_negative(caplog):
    cases = [CaseMetrics("a", None, 0.5, None), CaseMetrics("b", None, 1.5, None)]
    with caplog.at_level("WARNING"):
        r = aggregate_cohort(cases)
    assert r.mean_dice_pct is None and r.mean_fn_vol_cm3 is None
    assert r.mean_fp_vol_cm3 == 1.0
    assert r.n_positive_cases == 0
    assert any("no positive cases" in m for m in caplog.messages)


def test_aggregate_order_independent():
    cases = [
        CaseMetrics("c", 0.25, 1.0, 0.5),
        CaseMetrics("a", 0.75, 3.0, 0.1),
        CaseMetrics("b", None, 2.0, None),
    ]
    r1 = aggregate_cohort(cases)
    r2 = aggregate_cohort(list(reversed(cases)))
    assert r1 == r2
    assert r1.mean_fp_vol_cm3 == 2.0
    assert r1.mean_dice_pct == 50.0


# --- serialization -----------------------------------------------------------

def test_json_report_full_precision():
    cases = [CaseMetrics("x", 0.5, 0.064, 0.001)]
    doc = json.loads(report_to_json(cases, aggregate_cohort(cases), Connectivity.FACES_EDGES))
    assert doc["cases"][0]["fp_vol_cm3"] == 0.064
    assert doc["cases"][0]["dice"] == 0.5
    assert doc["cohort"]["mean_fp_vol_cm3"] == 0.064
    assert doc["connectivity"] == 18


def test_json_report_nulls_for_absent():
    cases = [CaseMetrics("neg", None, 0.0, None)]
    doc = json.loads(report_to_json(cases, aggregate_cohort(cases), Connectivity.FACES))
    assert doc["cases"][0]["dice"] is None
    assert doc["cohort"]["mean_dice_pct"] is None


def test_csv_report_rounding_and_mean_row():
    cases = [
        CaseMetrics("a", 0.63195, 2.675, 0.004),
        CaseMetrics("b", None, 1.0, None),
    ]
    text = report_to_csv(cases, aggregate_cohort(cases))
    lines = text.strip().split("\n")
    assert lines[0] == "case_id,dice,fp_vol_cm3,fn_vol_cm3"
    # dice as percent, 2 decimals half-up; 2.675 rounds up, not to even
    assert lines[1] == "a,63.20,2.68,0.00"
    assert lines[2] == "b,,1.00,"
    assert lines[3].startswith("MEAN,63.20,1.84,")


def test_csv_cases_sorted_by_id():
    cases = [CaseMetrics("b", 1.0, 0.0, 0.0), CaseMetrics("a", 1.0, 0.0, 0.0)]
    text = report_to_csv(cases, aggregate_cohort(cases))
    lines = text.strip().split("\n")
    assert lines[1].startswith("a,") and lines[2].startswith("b,")
