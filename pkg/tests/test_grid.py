import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from petprep import Interp, affine_warp, crop, flip, make_mask, make_volume, resample
from petprep.errors import (
    NonBinaryMaskError,
    NonFiniteDataError,
    NonPositiveScaleError,
    NonPositiveSpacingError,
    OutOfBoundsError,
    ShapeMismatchError,
)
from conftest import mask, vol


# --- construction ------------------------------------------------------------

def test_make_volume_minimal():
    v = make_volume(np.array([[[5.0]]]), (1.0, 1.0, 1.0))
    assert v.shape == (1, 1, 1)
    assert v.data[0, 0, 0] == 5.0


def test_make_volume_rejects_zero_spacing():
    with pytest.raises(NonPositiveSpacingError):
        make_volume(np.zeros((2, 2, 2)), (0.0, 1.0, 1.0))


def test_make_volume_rejects_nan():
    data = np.ones((2, 2, 2))
    data[1, 1, 1] = np.nan
    with pytest.raises(NonFiniteDataError):
        make_volume(data, (1.0, 1.0, 1.0))


def test_make_volume_rejects_wrong_rank():
    with pytest.raises(ShapeMismatchError):
        make_volume(np.zeros((2, 2)), (1.0, 1.0, 1.0))


def test_make_mask_rejects_other_values():
    with pytest.raises(NonBinaryMaskError):
        make_mask(np.array([[[0, 2]]]), (1.0, 1.0, 1.0))


def test_volume_data_is_read_only():
    v = vol([1.0, 2.0])
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 9.0


# --- resample ----------------------------------------------------------------

def test_resample_identity_is_bit_exact(rng):
    v = vol(rng.normal(size=(5, 4, 3)).astype(np.float32), spacing=(2.0, 1.5, 1.0))
    out = resample(v, (2.0, 1.5, 1.0), Interp.TRILINEAR)
    assert np.array_equal(out.data, v.data)
    assert out.spacing == v.spacing and out.origin == v.origin


def test_resample_ramp_halving_spacing():
    # hand-evaluated trilinear samples at 0..5 mm with edge clamp
    v = vol([0.0, 10.0, 20.0], spacing=(2.0, 1.0, 1.0))
    out = resample(v, (1.0, 1.0, 1.0), Interp.TRILINEAR)
    assert out.shape == (6, 1, 1)
    np.testing.assert_array_equal(out.data.ravel(), [0.0, 5.0, 10.0, 15.0, 20.0, 20.0])


def test_resample_preserves_origin():
    v = vol([0.0, 1.0, 2.0], spacing=(2.0, 1.0, 1.0), origin=(3.0, -2.0, 7.5))
    out = resample(v, (1.0, 1.0, 1.0), Interp.TRILINEAR)
    assert out.origin == (3.0, -2.0, 7.5)


def test_resample_mask_requires_nearest():
    m = mask([0, 1, 1])
    with pytest.raises(NonBinaryMaskError):
        resample(m, (0.5, 1.0, 1.0), Interp.TRILINEAR)


def test_resample_mask_matches_brute_force_nearest(rng):
    # exhaustive check on random 4^3 masks vs direct nearest lookup
    for _ in range(50):
        arr = (rng.random((4, 4, 4)) < 0.5).astype(np.uint8)
        m = mask(arr, spacing=(2.0, 3.0, 1.0))
        out = resample(m, (1.5, 1.0, 2.0), Interp.NEAREST)
        assert set(np.unique(out.data)) <= {0, 1}
        for idx in np.ndindex(out.shape):
            src = []
            for axis, i in enumerate(idx):
                c = i * (out.spacing[axis] / m.spacing[axis])
                j = int(math.floor(c + 0.5))
                src.append(min(max(j, 0), arr.shape[axis] - 1))
            assert out.data[idx] == arr[tuple(src)]


@given(
    n=st.integers(1, 12),
    s_in=st.floats(0.5, 4.0),
    s_out=st.floats(0.5, 4.0),
)
@settings(max_examples=60, deadline=None)
def test_resample_shape_rule(n, s_in, s_out):
    v = vol(np.zeros((n, 1, 1), dtype=np.float32), spacing=(s_in, 1.0, 1.0))
    out = resample(v, (s_out, 1.0, 1.0), Interp.TRILINEAR)
    expected = max(1, int(math.floor(n * s_in / s_out + 0.5)))
    assert out.shape[0] == expected


@given(value=st.floats(-50, 50), s_out=st.floats(0.4, 3.0))
@settings(max_examples=40, deadline=None)
def test_resample_constant_stays_constant(value, s_out):
    v = vol(np.full((4, 3, 5), value, dtype=np.float32), spacing=(1.0, 2.0, 1.5))
    out = resample(v, (s_out, s_out, s_out), Interp.TRILINEAR)
    np.testing.assert_allclose(out.data, np.float32(value), atol=1e-6)


def test_resample_rejects_bad_target():
    v = vol([1.0, 2.0])
    with pytest.raises(NonPositiveSpacingError):
        resample(v, (0.0, 1.0, 1.0), Interp.TRILINEAR)


# --- crop --------------------------------------------------------------------

def test_crop_full_extent_identity(rng):
    v = vol(rng.normal(size=(3, 4, 5)).astype(np.float32))
    out = crop(v, (0, 0, 0), (3, 4, 5))
    assert np.array_equal(out.data, v.data)
    assert out.origin == v.origin


def test_crop_matches_index_slice():
    data = np.arange(512, dtype=np.float32).reshape(8, 8, 8)
    v = vol(data, spacing=(1.0, 2.0, 3.0), origin=(10.0, 0.0, -5.0))
    out = crop(v, (2, 1, 3), (4, 4, 4))
    np.testing.assert_array_equal(out.data, data[2:6, 1:5, 3:7])
    assert out.origin == (10.0 + 2 * 1.0, 0.0 + 1 * 2.0, -5.0 + 3 * 3.0)


def test_crop_out_of_bounds():
    v = vol(np.zeros((4, 4, 4), dtype=np.float32))
    with pytest.raises(OutOfBoundsError):
        crop(v, (2, 0, 0), (3, 4, 4))
    with pytest.raises(OutOfBoundsError):
        crop(v, (-1, 0, 0), (2, 4, 4))


@given(
    a=st.integers(0, 2),
    b=st.integers(0, 2),
    t=st.integers(1, 3),
)
@settings(max_examples=30, deadline=None)
def test_crop_composes(a, b, t):
    data = np.arange(8 * 8 * 8, dtype=np.float32).reshape(8, 8, 8)
    v = vol(data)
    once = crop(crop(v, (a, a, a), (6, 6, 6)), (b, b, b), (t, t, t))
    direct = crop(v, (a + b, a + b, a + b), (t, t, t))
    assert np.array_equal(once.data, direct.data)
    assert once.origin == direct.origin


# --- flip --------------------------------------------------------------------

def test_flip_involution(rng):
    v = vol(rng.normal(size=(3, 4, 5)).astype(np.float32))
    assert np.array_equal(flip(flip(v, ("x",)), ("x",)).data, v.data)


def test_flip_empty_axis_set(rng):
    v = vol(rng.normal(size=(2, 2, 2)).astype(np.float32))
    assert np.array_equal(flip(v, ()).data, v.data)


def test_flip_reverses_x():
    v = vol([3.0, 7.0])
    np.testing.assert_array_equal(flip(v, ("x",)).data.ravel(), [7.0, 3.0])


def test_flips_commute(rng):
    v = vol(rng.normal(size=(3, 3, 3)).astype(np.float32))
    xy = flip(flip(v, ("x",)), ("y",))
    yx = flip(flip(v, ("y",)), ("x",))
    assert np.array_equal(xy.data, yx.data)


def test_flip_keeps_geometry():
    v = vol([1.0, 2.0], spacing=(2.0, 1.0, 1.0), origin=(5.0, 6.0, 7.0))
    out = flip(v, ("x", "z"))
    assert out.spacing == v.spacing and out.origin == v.origin


def test_flip_mask_stays_binary():
    m = mask([0, 1, 1, 0])
    out = flip(m, ("x",))
    assert set(np.unique(out.data)) <= {0, 1}


# --- affine_warp -------------------------------------------------------------

def test_affine_identity_is_bit_exact(rng):
    v = vol(rng.normal(size=(4, 5, 6)).astype(np.float32), spacing=(1.0, 2.0, 1.5))
    out = affine_warp(v, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0))
    assert np.array_equal(out.data, v.data)


def test_affine_quarter_turn_about_z_permutes_grid():
    data = np.arange(9, dtype=np.float32).reshape(3, 3, 1)
    v = vol(data)
    out = affine_warp(v, (0.0, 0.0, math.pi / 2), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0))
    expected = np.zeros_like(data)
    for i in range(3):
        for j in range(3):
            # inverse mapping of a +90 deg z-rotation about the center
            expected[i, j, 0] = data[j, 2 - i, 0]
    np.testing.assert_allclose(out.data, expected, atol=1e-5)


def test_affine_translation_one_voxel_shifts_with_fill():
    v = vol([1.0, 2.0, 3.0, 4.0])
    out = affine_warp(
        v, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (1.0, 0.0, 0.0), fill=-9.0
    )
    np.testing.assert_allclose(out.data.ravel(), [-9.0, 1.0, 2.0, 3.0], atol=1e-5)


def test_affine_rejects_non_positive_scale():
    v = vol([1.0, 2.0])
    with pytest.raises(NonPositiveScaleError):
        affine_warp(v, (0.0, 0.0, 0.0), (0.0, 1.0, 1.0), (0.0, 0.0, 0.0))


def test_affine_mask_nearest_stays_binary(rng):
    arr = (rng.random((6, 6, 6)) < 0.4).astype(np.uint8)
    m = mask(arr)
    out = affine_warp(
        m, (0.1, -0.2, 0.3), (1.1, 0.9, 1.0), (1.0, -2.0, 0.5), interp=Interp.NEAREST
    )
    assert set(np.unique(out.data)) <= {0, 1}
    assert out.shape == m.shape


def test_affine_mask_requires_nearest():
    m = mask([0, 1])
    with pytest.raises(NonBinaryMaskError):
        affine_warp(m, (0.0, 0.0, 0.1), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0))
