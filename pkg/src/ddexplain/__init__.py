"""Minimal sufficient explanations for vision classifiers.

Searches for a 1-minimal subset of representational units (feature maps or
patch tokens) whose joint activation preserves a classifier's prediction,
then weights the selected units by their logit drops to compose a focused
saliency map, with faithfulness and localization metrics for evaluation.
"""

from .ddmin import (
    OracleNondeterminismError,
    PredictionOracle,
    SearchStats,
    UnitSet,
    brute_force_minimal_sets,
    find_minimal_general,
    find_minimal_onepass,
    is_one_minimal,
    is_sufficient,
    partition,
)
from .heads import (
    AttentionHead,
    LinearHead,
    ManifestError,
    MlpHead,
    MlpLayer,
    ModelBundle,
    ModelManifest,
    load_manifest,
    predict,
    softmax,
    toy_extract,
)
from .saliency import (
    ExplanationResult,
    compose_cnn_map,
    compose_vit_map,
    compute_unit_weights,
    infer_grid_side,
)
from .tensor import (
    TensorFormatError,
    apply_unit_mask,
    bilinear_upsample,
    load_tensor,
    minmax_normalize,
    save_tensor,
    write_pgm,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionHead",
    "ExplanationResult",
    "LinearHead",
    "ManifestError",
    "MlpHead",
    "MlpLayer",
    "ModelBundle",
    "ModelManifest",
    "OracleNondeterminismError",
    "PredictionOracle",
    "SearchStats",
    "TensorFormatError",
    "UnitSet",
    "apply_unit_mask",
    "bilinear_upsample",
    "brute_force_minimal_sets",
    "compose_cnn_map",
    "compose_vit_map",
    "compute_unit_weights",
    "find_minimal_general",
    "find_minimal_onepass",
    "infer_grid_side",
    "is_one_minimal",
    "is_sufficient",
    "load_manifest",
    "load_tensor",
    "minmax_normalize",
    "partition",
    "predict",
    "save_tensor",
    "softmax",
    "toy_extract",
    "write_pgm",
]
