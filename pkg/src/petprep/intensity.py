"""Deterministic intensity kernels: clip, normalization, gamma, smoothing, noise.

All kernels are pure functions over Volume; the mask channel never passes
through here. Computation runs in float64 and results are stored as float32.
Noise is the only stochastic kernel and is a pure function of (input, seed)
via a counter-based generator, so results do not depend on call order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateStatisticsError,
    InvalidBoundsError,
    NegativeSigmaError,
    NegativeStdError,
)
from .grid import Triple, Volume, make_volume

STD_FLOOR = 1e-8
RANGE_FLOOR = 1e-8

NORMALIZATION_METHODS = ("none", "zscore", "nonzero_zscore")


@dataclass(frozen=True)
class NormalizationConfig:
    """Per-channel normalization recipe: optional clip window, then a method."""

    method: str = "zscore"
    clip_min: float | None = None
    clip_max: float | None = None

    def __post_init__(self):
        if self.method not in NORMALIZATION_METHODS:
            raise InvalidBoundsError(
                f"method must be one of {NORMALIZATION_METHODS}, got {self.method!r}"
            )
        if (
            self.clip_min is not None
            and self.clip_max is not None
            and not self.clip_min < self.clip_max
        ):
            raise InvalidBoundsError(
                f"clip_min must be < clip_max, got [{self.clip_min}, {self.clip_max}]"
            )


@dataclass(frozen=True)
class GammaParams:
    gamma: float
    invert: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise InvalidBoundsError(f"gamma must be finite and > 0, got {self.gamma}")


@dataclass(frozen=True)
class SharpenParams:
    """Unsharp-masking parameters; sigmas in mm, alpha unitless."""

    sigma1: float
    sigma2: float
    alpha: float

    def __post_init__(self):
        if self.sigma1 <= 0.0 or self.sigma2 <= 0.0:
            raise NegativeSigmaError(
                f"sharpen sigmas must be > 0, got ({self.sigma1}, {self.sigma2})"
            )
        if self.alpha < 0.0:
            raise InvalidBoundsError(f"sharpen alpha must be >= 0, got {self.alpha}")


def clip(vol: Volume, lo: float | None = None, hi: float | None = None) -> Volume:
    """Clamp intensities into [lo, hi]; an absent bound is unbounded on that side."""
    if lo is not None and hi is not None and not lo < hi:
        raise InvalidBoundsError(f"clip bounds require lo < hi, got lo={lo} hi={hi}")
    if lo is None and hi is None:
        return make_volume(vol.data, vol.spacing, vol.origin)
    out = np.clip(vol.data, lo, hi)
    return make_volume(out, vol.spacing, vol.origin)


def zscore_normalize(vol: Volume, nonzero_only: bool = False) -> Volume:
    """Z-score over all voxels, or over non-zero voxels only.

    Uses the population standard deviation, floored at 1e-8. With
    nonzero_only, voxels that are exactly zero stay exactly zero.
    """
    data = vol.data.astype(np.float64)
    if nonzero_only:
        sel = data != 0.0
        n = int(np.count_nonzero(sel))
        if n < 2:
            raise DegenerateStatisticsError(
                f"non-zero normalization needs >= 2 non-zero voxels, found {n}"
            )
        values = data[sel]
        mu = values.mean()
        sigma = max(values.std(), STD_FLOOR)
        out = data.copy()
        out[sel] = (values - mu) / sigma
    else:
        if data.size < 2:
            raise DegenerateStatisticsError("z-score needs >= 2 voxels")
        mu = data.mean()
        sigma = max(data.std(), STD_FLOOR)
        out = (data - mu) / sigma
    return make_volume(out, vol.spacing, vol.origin)


def scale_intensity(vol: Volume, factor: float) -> Volume:
    """Multiply every voxel by a finite factor."""
    if not math.isfinite(factor):
        raise InvalidBoundsError(f"scale factor must be finite, got {factor}")
    out = vol.data.astype(np.float64) * factor
    return make_volume(out, vol.spacing, vol.origin)


def gamma_transform(vol: Volume, params: GammaParams) -> Volume:
    """Monotone gamma remapping over the volume's own intensity range.

    With m = min, M = max, r = M - m: v -> ((v - m) / r) ** gamma * r + m.
    The inverted variant applies the same curve to the negated image
    (M + m - v) and maps the result back. A degenerate range (r < 1e-8)
    leaves the volume unchanged.
    """
    data = vol.data.astype(np.float64)
    m = float(data.min())
    M = float(data.max())
    r = M - m
    if r < RANGE_FLOOR:
        return make_volume(vol.data, vol.spacing, vol.origin)
    x = (M + m) - data if params.invert else data
    y = np.power((x - m) / r, params.gamma) * r + m
    out = (M + m) - y if params.invert else y
    return make_volume(out, vol.spacing, vol.origin)


def _gaussian_kernel(sigma_vox: float) -> np.ndarray:
    """Discrete Gaussian taps at radius ceil(4*sigma), renormalized to sum 1."""
    radius = int(math.ceil(4.0 * sigma_vox))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (offsets / sigma_vox) ** 2)
    return k / k.sum()


def _convolve_axis(data: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = (len(kernel) - 1) // 2
    pad = [(0, 0)] * data.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(data, pad, mode="symmetric")  # reflect with edge sample repeated
    n = data.shape[axis]
    moved = np.moveaxis(padded, axis, -1)
    out = np.zeros(moved.shape[:-1] + (n,), dtype=np.float64)
    for i, w in enumerate(kernel):
        out += w * moved[..., i:i + n]
    return np.moveaxis(out, -1, axis)


def gaussian_smooth(vol: Volume, sigma: Triple) -> Volume:
    """Separable Gaussian blur; sigma given in mm per axis, 0 skips that axis."""
    sigma = tuple(float(s) for s in sigma)
    if any(s < 0.0 or not math.isfinite(s) for s in sigma):
        raise NegativeSigmaError(f"sigma must be >= 0 and finite, got {sigma}")
    if all(s == 0.0 for s in sigma):
        return make_volume(vol.data, vol.spacing, vol.origin)
    out = vol.data.astype(np.float64)
    for axis in range(3):
        if sigma[axis] > 0.0:
            kernel = _gaussian_kernel(sigma[axis] / vol.spacing[axis])
            out = _convolve_axis(out, kernel, axis)
    return make_volume(out, vol.spacing, vol.origin)


def gaussian_sharpen(vol: Volume, params: SharpenParams) -> Volume:
    """Unsharp masking: g1 + alpha * (g1 - g2) with g2 a re-blur of g1."""
    g1 = gaussian_smooth(vol, (params.sigma1,) * 3)
    if params.alpha == 0.0:
        return g1
    g2 = gaussian_smooth(g1, (params.sigma2,) * 3)
    a = g1.data.astype(np.float64)
    b = g2.data.astype(np.float64)
    return make_volume(a + params.alpha * (a - b), vol.spacing, vol.origin)


def add_gaussian_noise(vol: Volume, mean: float, std: float, rng_seed: int) -> Volume:
    """Add i.i.d. Normal(mean, std) noise from a counter-based generator.

    The same (input, seed) pair always yields bit-identical output,
    independent of thread count or call order.
    """
    if std < 0.0:
        raise NegativeStdError(f"noise std must be >= 0, got {std}")
    if std == 0.0 and mean == 0.0:
        return make_volume(vol.data, vol.spacing, vol.origin)
    rng = np.random.Generator(np.random.Philox(key=int(rng_seed) & (2**64 - 1)))
    noise = rng.normal(loc=mean, scale=std, size=vol.shape)
    return make_volume(vol.data.astype(np.float64) + noise, vol.spacing, vol.origin)
