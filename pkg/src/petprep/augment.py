"""Stochastic pipeline engine.

Parses the declarative pipeline config, derives one RNG stream per
(case, replicate) from the master seed, samples transform parameters, and
applies the composed preprocessing + augmentation to (PET, CT, mask)
triplets. Geometric parameters are sampled once and shared by all three
channels (mask always nearest-interpolated); intensity transforms touch the
image channels only.

Stage order is fixed: resample -> clip -> normalize -> spatial transforms ->
intensity transforms. Within each of the two transform stages the configured
list order is kept.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import grid, intensity
from .errors import GeometryMismatchError, ParseError, ValidationError
from .grid import Interp, LabelMask, Triple, Volume
from .intensity import NORMALIZATION_METHODS, NormalizationConfig

SPATIAL_KINDS = ("rand_crop", "rand_affine", "rand_flip")
INTENSITY_KINDS = (
    "rand_gaussian_noise",
    "rand_gaussian_smooth",
    "rand_gaussian_sharpen",
    "rand_gamma",
    "rand_scale_intensity",
)
ALL_KINDS = SPATIAL_KINDS + INTENSITY_KINDS

# probability used when a transform entry omits one
DEFAULT_PROBABILITY = {
    "rand_crop": 1.0,
    "rand_affine": 0.2,
    "rand_flip": 0.5,
    "rand_gaussian_noise": 0.1,
    "rand_gaussian_smooth": 0.2,
    "rand_gaussian_sharpen": 0.2,
    "rand_gamma": 0.3,
    "rand_scale_intensity": 0.15,
}

# per-kind parameter defaults (ranges are closed intervals)
DEFAULT_PARAMS = {
    "rand_crop": {"crop_size": (128, 128, 128)},
    "rand_affine": {
        "rotation_range": (-0.26, 0.26),
        "scale_range": (0.7, 1.4),
        "translation_range": (-10.0, 10.0),
    },
    "rand_flip": {"axis": "x"},
    "rand_gaussian_noise": {"noise_std_range": (0.0, 0.33)},
    "rand_gaussian_smooth": {"sigma_range": (0.5, 1.0)},
    "rand_gaussian_sharpen": {
        "sigma_range": (0.5, 1.0),
        "sigma2_factor_range": (0.5, 1.0),
        "alpha_range": (10.0, 30.0),
    },
    "rand_gamma": {"gamma_range": (0.7, 1.5), "invert_probability": 0.5},
    "rand_scale_intensity": {"factor_range": (0.9, 1.1)},
}


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    probability: float
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PipelineConfig:
    target_spacing: Triple
    pet_normalization: NormalizationConfig
    ct_normalization: NormalizationConfig
    transforms: tuple[TransformSpec, ...]
    master_seed: int


@dataclass(frozen=True)
class SampledTransform:
    kind: str
    applied: bool
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SampledParams:
    """What the stochastic pipeline chose for one (case, replicate)."""

    transforms: tuple[SampledTransform, ...]

    def to_dict(self) -> dict:
        return {
            "transforms": [
                {"kind": t.kind, "applied": t.applied, "params": dict(t.params)}
                for t in self.transforms
            ]
        }


@dataclass(frozen=True)
class Provenance:
    case_id: str
    replicate: int
    case_seed: int
    sampled: SampledParams

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "replicate": self.replicate,
            "case_seed": self.case_seed,
            **self.sampled.to_dict(),
        }


@dataclass(frozen=True)
class AugmentedSample:
    pet: Volume
    ct: Volume
    mask: LabelMask
    provenance: Provenance


# --- config parsing ----------------------------------------------------------

def _fail(path: str, message: str):
    raise ValidationError(path, message)


def _reject_unknown(obj: dict, allowed, path: str):
    unknown = set(obj) - set(allowed)
    if unknown:
        _fail(path, f"unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}")


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        _fail(path, f"expected a finite number, got {value!r}")
    return float(value)


def _as_range(value, path: str, lo_min: float | None = None, lo_exclusive: bool = False):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        _fail(path, f"expected [lo, hi], got {value!r}")
    lo = _as_number(value[0], f"{path}[0]")
    hi = _as_number(value[1], f"{path}[1]")
    if lo > hi:
        _fail(path, f"range lo must be <= hi, got [{lo}, {hi}]")
    if lo_min is not None:
        if lo_exclusive and lo <= lo_min:
            _fail(path, f"range lo must be > {lo_min}, got {lo}")
        if not lo_exclusive and lo < lo_min:
            _fail(path, f"range lo must be >= {lo_min}, got {lo}")
    return (lo, hi)


def _as_unit(value, path: str) -> float:
    v = _as_number(value, path)
    if not 0.0 <= v <= 1.0:
        _fail(path, f"expected a probability in [0, 1], got {v}")
    return v


def _as_size3(value, path: str) -> tuple[int, int, int]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        _fail(path, f"expected 3 voxel counts, got {value!r}")
    out = []
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            _fail(f"{path}[{i}]", f"expected a positive integer, got {v!r}")
        out.append(v)
    return tuple(out)  # type: ignore[return-value]


def _parse_transform_params(kind: str, raw: dict, path: str) -> dict:
    defaults = DEFAULT_PARAMS[kind]
    _reject_unknown(raw, defaults, path)
    params = dict(defaults)
    for key, value in raw.items():
        p = f"{path}.{key}"
        if key == "crop_size":
            params[key] = _as_size3(value, p)
        elif key == "axis":
            if value not in ("x", "y", "z"):
                _fail(p, f"expected one of 'x', 'y', 'z', got {value!r}")
            params[key] = value
        elif key == "invert_probability":
            params[key] = _as_unit(value, p)
        elif key in ("gamma_range", "scale_range", "sigma2_factor_range"):
            params[key] = _as_range(value, p, lo_min=0.0, lo_exclusive=True)
        elif key == "sigma_range":
            exclusive = kind == "rand_gaussian_sharpen"  # sharpen sigmas must stay > 0
            params[key] = _as_range(value, p, lo_min=0.0, lo_exclusive=exclusive)
        elif key in ("noise_std_range", "alpha_range"):
            params[key] = _as_range(value, p, lo_min=0.0)
        else:  # rotation_range, translation_range, factor_range
            params[key] = _as_range(value, p)
    return params


def _parse_normalization(raw, path: str) -> NormalizationConfig:
    if raw is None:
        return NormalizationConfig(method="none")
    if not isinstance(raw, dict):
        _fail(path, f"expected an object, got {raw!r}")
    _reject_unknown(raw, ("method", "clip_min", "clip_max"), path)
    method = raw.get("method", "zscore")
    if method not in NORMALIZATION_METHODS:
        _fail(f"{path}.method", f"expected one of {NORMALIZATION_METHODS}, got {method!r}")
    clip_min = raw.get("clip_min")
    clip_max = raw.get("clip_max")
    if clip_min is not None:
        clip_min = _as_number(clip_min, f"{path}.clip_min")
    if clip_max is not None:
        clip_max = _as_number(clip_max, f"{path}.clip_max")
    if clip_min is not None and clip_max is not None and not clip_min < clip_max:
        _fail(path, f"clip_min must be < clip_max, got [{clip_min}, {clip_max}]")
    return NormalizationConfig(method=method, clip_min=clip_min, clip_max=clip_max)


def parse_pipeline_config(doc: dict) -> PipelineConfig:
    """Validate an already-decoded config document."""
    if not isinstance(doc, dict):
        raise ValidationError("$", "config root must be an object")
    _reject_unknown(doc, ("target_spacing", "normalization", "transforms", "master_seed"), "$")
    for key in ("target_spacing", "transforms"):
        if key not in doc:
            _fail("$", f"missing required key {key!r}")

    spacing_raw = doc["target_spacing"]
    if not isinstance(spacing_raw, (list, tuple)) or len(spacing_raw) != 3:
        _fail("$.target_spacing", f"expected 3 spacings in mm, got {spacing_raw!r}")
    spacing = []
    for i, v in enumerate(spacing_raw):
        s = _as_number(v, f"$.target_spacing[{i}]")
        if s <= 0.0:
            _fail(f"$.target_spacing[{i}]", f"spacing must be > 0, got {s}")
        spacing.append(s)

    norm_raw = doc.get("normalization", {})
    if not isinstance(norm_raw, dict):
        _fail("$.normalization", f"expected an object, got {norm_raw!r}")
    _reject_unknown(norm_raw, ("pet", "ct"), "$.normalization")
    pet_norm = _parse_normalization(norm_raw.get("pet"), "$.normalization.pet")
    ct_norm = _parse_normalization(norm_raw.get("ct"), "$.normalization.ct")

    transforms_raw = doc["transforms"]
    if not isinstance(transforms_raw, list):
        _fail("$.transforms", f"expected an array, got {transforms_raw!r}")
    transforms = []
    for i, entry in enumerate(transforms_raw):
        path = f"$.transforms[{i}]"
        if not isinstance(entry, dict):
            _fail(path, f"expected an object, got {entry!r}")
        _reject_unknown(entry, ("kind", "probability", "params"), path)
        kind = entry.get("kind")
        if kind not in ALL_KINDS:
            _fail(f"{path}.kind", f"unknown transform kind {kind!r}; known: {list(ALL_KINDS)}")
        probability = entry.get("probability", DEFAULT_PROBABILITY[kind])
        probability = _as_unit(probability, f"{path}.probability")
        params_raw = entry.get("params", {})
        if not isinstance(params_raw, dict):
            _fail(f"{path}.params", f"expected an object, got {params_raw!r}")
        params = _parse_transform_params(kind, params_raw, f"{path}.params")
        transforms.append(TransformSpec(kind=kind, probability=probability, params=params))

    master_seed = doc.get("master_seed", 0)
    if isinstance(master_seed, bool) or not isinstance(master_seed, int):
        _fail("$.master_seed", f"expected an integer, got {master_seed!r}")

    return PipelineConfig(
        target_spacing=tuple(spacing),  # type: ignore[arg-type]
        pet_normalization=pet_norm,
        ct_normalization=ct_norm,
        transforms=tuple(transforms),
        master_seed=master_seed,
    )


def load_pipeline_config(text: str) -> PipelineConfig:
    """Parse and validate a JSON pipeline config document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"config is not valid JSON: {e}") from None
    return parse_pipeline_config(doc)


def load_pipeline_config_file(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as f:
        return load_pipeline_config(f.read())


def config_to_dict(config: PipelineConfig) -> dict:
    """Canonical form: every default materialized, fixed key order."""

    def norm(n: NormalizationConfig) -> dict:
        return {"method": n.method, "clip_min": n.clip_min, "clip_max": n.clip_max}

    return {
        "target_spacing": list(config.target_spacing),
        "normalization": {
            "pet": norm(config.pet_normalization),
            "ct": norm(config.ct_normalization),
        },
        "transforms": [
            {
                "kind": t.kind,
                "probability": t.probability,
                "params": {
                    k: (list(v) if isinstance(v, tuple) else v) for k, v in t.params.items()
                },
            }
            for t in config.transforms
        ],
        "master_seed": config.master_seed,
    }


def serialize_pipeline_config(config: PipelineConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2) + "\n"


def config_hash(config: PipelineConfig) -> str:
    """Content digest of the canonical form; stable across reruns."""
    payload = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# --- seeding and sampling ----------------------------------------------------

def derive_case_seed(master_seed: int, case_id: str, replicate: int) -> int:
    """Stable 64-bit hash-mix of (master_seed, case_id, replicate).

    Uses BLAKE2b over a length-prefixed encoding, so the result is identical
    across platforms and Python processes.
    """
    cid = case_id.encode("utf-8")
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", master_seed & (2**64 - 1)))
    h.update(struct.pack("<I", len(cid)))
    h.update(cid)
    h.update(struct.pack("<q", replicate))
    return int.from_bytes(h.digest(), "little")


def _stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & (2**64 - 1)))


def sample_params(config: PipelineConfig, case_seed: int) -> SampledParams:
    """Draw one Bernoulli per transform, then the applied transform's values.

    Draw order follows the transform list; within a transform the order is
    fixed per kind (documented below), so identical (config, seed) pairs
    always reproduce the same SampledParams.
    """
    rng = _stream(case_seed)
    out = []
    for spec in config.transforms:
        applied = bool(rng.random() < spec.probability)
        values: dict = {}
        if applied:
            p = spec.params
            if spec.kind == "rand_crop":
                values["crop_size"] = list(p["crop_size"])
                values["offset_fractions"] = [float(rng.uniform(0.0, 1.0)) for _ in range(3)]
            elif spec.kind == "rand_affine":
                values["rotation"] = [float(rng.uniform(*p["rotation_range"])) for _ in range(3)]
                values["scale"] = [float(rng.uniform(*p["scale_range"])) for _ in range(3)]
                values["translation"] = [
                    float(rng.uniform(*p["translation_range"])) for _ in range(3)
                ]
            elif spec.kind == "rand_flip":
                values["axis"] = p["axis"]
            elif spec.kind == "rand_gaussian_noise":
                values["std"] = float(rng.uniform(*p["noise_std_range"]))
                values["seed"] = int(rng.integers(0, 2**64, dtype=np.uint64))
            elif spec.kind == "rand_gaussian_smooth":
                values["sigma"] = [float(rng.uniform(*p["sigma_range"])) for _ in range(3)]
            elif spec.kind == "rand_gaussian_sharpen":
                sigma1 = float(rng.uniform(*p["sigma_range"]))
                factor = float(rng.uniform(*p["sigma2_factor_range"]))
                values["sigma1"] = sigma1
                values["sigma2"] = sigma1 * factor
                values["alpha"] = float(rng.uniform(*p["alpha_range"]))
            elif spec.kind == "rand_gamma":
                values["gamma"] = float(rng.uniform(*p["gamma_range"]))
                values["invert"] = bool(rng.random() < p["invert_probability"])
            elif spec.kind == "rand_scale_intensity":
                values["factor"] = float(rng.uniform(*p["factor_range"]))
        out.append(SampledTransform(kind=spec.kind, applied=applied, params=values))
    return SampledParams(transforms=tuple(out))


# --- application -------------------------------------------------------------

def _apply_channel_prep(vol: Volume, norm: NormalizationConfig, target_spacing: Triple) -> Volume:
    vol = grid.resample(vol, target_spacing, Interp.TRILINEAR)
    if norm.clip_min is not None or norm.clip_max is not None:
        vol = intensity.clip(vol, norm.clip_min, norm.clip_max)
    if norm.method == "zscore":
        vol = intensity.zscore_normalize(vol, nonzero_only=False)
    elif norm.method == "nonzero_zscore":
        vol = intensity.zscore_normalize(vol, nonzero_only=True)
    return vol


def preprocess_triplet(
    pet: Volume, ct: Volume, mask: LabelMask, config: PipelineConfig
) -> tuple[Volume, Volume, LabelMask]:
    """Deterministic prefix of the pipeline: resample, clip, normalize.

    The mask is only resampled (nearest). Raises GeometryMismatch when the
    three channels do not land on a shared grid.
    """
    pet = _apply_channel_prep(pet, config.pet_normalization, config.target_spacing)
    ct = _apply_channel_prep(ct, config.ct_normalization, config.target_spacing)
    mask = grid.resample(mask, config.target_spacing, Interp.NEAREST)
    if not (grid.same_geometry(pet, ct) and grid.same_geometry(pet, mask)):
        raise GeometryMismatchError(
            "channels do not share a grid after resampling: "
            f"pet {pet.shape}, ct {ct.shape}, mask {mask.shape}"
        )
    return pet, ct, mask


def _resolve_crop_start(shape, size, fractions) -> tuple[tuple[int, ...], tuple[int, ...]]:
    eff = tuple(min(s, n) for s, n in zip(size, shape))
    start = []
    for n, s, u in zip(shape, eff, fractions):
        slack = n - s
        start.append(min(slack, int(math.floor(u * (slack + 1)))))
    return tuple(start), eff


def _apply_spatial(sampled: SampledTransform, channels):
    kind = sampled.kind
    v = sampled.params
    if kind == "rand_crop":
        shape = channels[0].shape
        start, size = _resolve_crop_start(shape, v["crop_size"], v["offset_fractions"])
        return [grid.crop(c, start, size) for c in channels]
    if kind == "rand_affine":
        out = []
        for c in channels:
            interp = Interp.NEAREST if isinstance(c, LabelMask) else Interp.TRILINEAR
            out.append(
                grid.affine_warp(
                    c,
                    rotation=v["rotation"],
                    scale=v["scale"],
                    translation=v["translation"],
                    interp=interp,
                    fill=0.0,
                )
            )
        return out
    if kind == "rand_flip":
        return [grid.flip(c, (v["axis"],)) for c in channels]
    raise AssertionError(f"not a spatial kind: {kind}")


def _apply_intensity(sampled: SampledTransform, images):
    kind = sampled.kind
    v = sampled.params
    if kind == "rand_gaussian_noise":
        # same std for both channels, decorrelated noise fields
        return [
            intensity.add_gaussian_noise(img, 0.0, v["std"], (v["seed"] + i) & (2**64 - 1))
            for i, img in enumerate(images)
        ]
    if kind == "rand_gaussian_smooth":
        return [intensity.gaussian_smooth(img, v["sigma"]) for img in images]
    if kind == "rand_gaussian_sharpen":
        params = intensity.SharpenParams(sigma1=v["sigma1"], sigma2=v["sigma2"], alpha=v["alpha"])
        return [intensity.gaussian_sharpen(img, params) for img in images]
    if kind == "rand_gamma":
        params = intensity.GammaParams(gamma=v["gamma"], invert=v["invert"])
        return [intensity.gamma_transform(img, params) for img in images]
    if kind == "rand_scale_intensity":
        return [intensity.scale_intensity(img, v["factor"]) for img in images]
    raise AssertionError(f"not an intensity kind: {kind}")


def apply_pipeline(
    pet: Volume,
    ct: Volume,
    mask: LabelMask,
    config: PipelineConfig,
    case_id: str,
    replicate: int = 0,
) -> AugmentedSample:
    """Run the full pipeline on one case; deterministic for fixed inputs.

    The case stream is seeded from (master_seed, case_id, replicate), so
    distinct cases and replicates can run in parallel in any order and still
    reproduce bit-identical outputs.
    """
    pet, ct, mask = preprocess_triplet(pet, ct, mask, config)
    case_seed = derive_case_seed(config.master_seed, case_id, replicate)
    sampled = sample_params(config, case_seed)

    channels = [pet, ct, mask]
    for t in sampled.transforms:
        if t.applied and t.kind in SPATIAL_KINDS:
            channels = _apply_spatial(t, channels)
    images = channels[:2]
    for t in sampled.transforms:
        if t.applied and t.kind in INTENSITY_KINDS:
            images = _apply_intensity(t, images)

    provenance = Provenance(
        case_id=case_id, replicate=replicate, case_seed=case_seed, sampled=sampled
    )
    return AugmentedSample(pet=images[0], ct=images[1], mask=channels[2], provenance=provenance)
