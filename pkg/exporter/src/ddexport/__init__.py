"""Vision-model bundle exporter: activations, head weights, and logits to NPY/JSON."""

from .export import (
    MODELS,
    ExportError,
    export_linear_bundle,
    export_mlp_bundle,
    export_vit_bundle,
    load_image,
    run_export,
    save_npy,
)

__version__ = "0.1.0"

__all__ = [
    "MODELS",
    "ExportError",
    "export_linear_bundle",
    "export_mlp_bundle",
    "export_vit_bundle",
    "load_image",
    "run_export",
    "save_npy",
]
