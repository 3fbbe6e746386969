"""Deterministic data toolkit for PET/CT lesion segmentation experiments.

Volumes live on a voxel-center grid (index i maps to origin + i * spacing,
in mm), images interpolate trilinearly, masks nearest-neighbor, and every
stochastic step is driven by a counter-based generator seeded per
(case, replicate), so results never depend on worker count or run order.
"""

from .augment import (
    AugmentedSample,
    PipelineConfig,
    TransformSpec,
    Provenance,
    SampledParams,
    apply_pipeline,
    config_hash,
    derive_case_seed,
    load_pipeline_config,
    load_pipeline_config_file,
    parse_pipeline_config,
    preprocess_triplet,
    sample_params,
    serialize_pipeline_config,
)
from .dataset_io import (
    DatasetManifest,
    ManifestEntry,
    SplitResult,
    load_manifest,
    read_nifti,
    stratified_split,
    write_manifest,
    write_nifti,
)
from .grid import (
    Interp,
    LabelMask,
    Volume,
    affine_warp,
    crop,
    flip,
    make_mask,
    make_volume,
    resample,
    same_geometry,
)
from .intensity import (
    GammaParams,
    NormalizationConfig,
    SharpenParams,
    add_gaussian_noise,
    clip,
    gamma_transform,
    gaussian_sharpen,
    gaussian_smooth,
    scale_intensity,
    zscore_normalize,
)
from .metrics import (
    CaseMetrics,
    CohortReport,
    Connectivity,
    LabeledComponents,
    aggregate_cohort,
    connected_components,
    dice,
    evaluate_case,
    lesion_volumes,
    report_to_csv,
    report_to_json,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentedSample",
    "CaseMetrics",
    "CohortReport",
    "Connectivity",
    "DatasetManifest",
    "GammaParams",
    "Interp",
    "LabelMask",
    "LabeledComponents",
    "ManifestEntry",
    "NormalizationConfig",
    "PipelineConfig",
    "Provenance",
    "SampledParams",
    "SharpenParams",
    "SplitResult",
    "TransformSpec",
    "Volume",
    "add_gaussian_noise",
    "affine_warp",
    "aggregate_cohort",
    "apply_pipeline",
    "clip",
    "config_hash",
    "connected_components",
    "crop",
    "derive_case_seed",
    "dice",
    "evaluate_case",
    "flip",
    "gamma_transform",
    "gaussian_sharpen",
    "gaussian_smooth",
    "lesion_volumes",
    "load_manifest",
    "load_pipeline_config",
    "load_pipeline_config_file",
    "make_mask",
    "make_volume",
    "parse_pipeline_config",
    "preprocess_triplet",
    "read_nifti",
    "report_to_csv",
    "report_to_json",
    "resample",
    "same_geometry",
    "sample_params",
    "scale_intensity",
    "serialize_pipeline_config",
    "stratified_split",
    "write_manifest",
    "write_nifti",
    "zscore_normalize",
]
