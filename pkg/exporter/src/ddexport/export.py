"""Dump vision-model internals to portable NPY/JSON bundles.

For one image at a time, serializes the final-layer representation (feature
maps or patch tokens), the classifier-head weights, and the framework's
reference logits in the bundle layout the explanation tool consumes:
float32 C-order NPY v1.0 tensors plus a manifest JSON. The exporter never
runs an explanation itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn
from torchvision import models as tv_models
from torchvision.transforms import functional as TF

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class ExportError(RuntimeError):
    """Raised when a model lacks the expected structure or an input is invalid."""


def save_npy(arr: np.ndarray | torch.Tensor, path: Path) -> None:
    """Write a float32 C-order NPY v1.0 file (the bundle tensor format)."""
    if isinstance(arr, torch.Tensor):
        arr = arr.detach().cpu().numpy()
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, arr, version=(1, 0))


@dataclass(frozen=True)
class ModelSpec:
    kind: str  # linear | mlp | vit
    input_hw: tuple[int, int]
    builder: Callable[[bool], nn.Module]


class _TinyGapFc(nn.Module):
    """Minimal GAP+FC classifier mirroring the resnet attribute layout."""

    def __init__(self, channels=8, classes=5):
        super().__init__()
        self.features = nn.Sequential(nn.Conv2d(3, channels, 3, padding=1), nn.ReLU())
        self.avgpool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(channels, classes)

    def forward(self, x):
        x = self.features(x)
        x = self.avgpool(x)
        return self.fc(torch.flatten(x, 1))


class _TinyVgg(nn.Module):
    """Minimal conv + MLP classifier mirroring the vgg attribute layout."""

    def __init__(self, channels=6, classes=5):
        super().__init__()
        self.features = nn.Sequential(nn.Conv2d(3, channels, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2))
        self.avgpool = nn.AdaptiveAvgPool2d((2, 2))
        self.classifier = nn.Sequential(
            nn.Linear(channels * 4, 16),
            nn.ReLU(),
            nn.Dropout(0.5),
            nn.Linear(16, classes),
        )

    def forward(self, x):
        x = self.features(x)
        x = self.avgpool(x)
        return self.classifier(torch.flatten(x, 1))


def _tv(name: str, weights_arg):
    def build(pretrained: bool) -> nn.Module:
        ctor = getattr(tv_models, name)
        return ctor(weights=weights_arg if pretrained else None)

    return build


def _tiny_vit(pretrained: bool) -> nn.Module:
    if pretrained:
        raise ExportError("tiny-vit has no pretrained weights")
    return tv_models.VisionTransformer(
        image_size=32, patch_size=16, num_layers=1, num_heads=1, hidden_dim=16, mlp_dim=32, num_classes=5
    )


MODELS: dict[str, ModelSpec] = {
    "resnet18": ModelSpec("linear", (224, 224), _tv("resnet18", "IMAGENET1K_V1")),
    "resnet50": ModelSpec("linear", (224, 224), _tv("resnet50", "IMAGENET1K_V2")),
    "vgg11": ModelSpec("mlp", (224, 224), _tv("vgg11", "IMAGENET1K_V1")),
    "vgg16": ModelSpec("mlp", (224, 224), _tv("vgg16", "IMAGENET1K_V1")),
    "vit_b_16": ModelSpec("vit", (224, 224), _tv("vit_b_16", "IMAGENET1K_V1")),
    "tiny-gapfc": ModelSpec("linear", (32, 32), lambda pretrained: _TinyGapFc()),
    "tiny-vgg": ModelSpec("mlp", (32, 32), lambda pretrained: _TinyVgg()),
    "tiny-vit": ModelSpec("vit", (32, 32), _tiny_vit),
}


def load_image(path: str | Path, input_hw: tuple[int, int]) -> torch.Tensor:
    """Load an input as a (1, L, H, W) float tensor.

    ``.npy`` files are taken as already-preprocessed (L, H, W) arrays; image
    files get the standard eval transform (resize, center crop to the model
    resolution, ImageNet normalization).
    """
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path)
        if arr.ndim != 3:
            raise ExportError(f"{path}: expected an (L, H, W) array, got shape {arr.shape}")
        return torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32)).unsqueeze(0)
    from PIL import Image

    with Image.open(path) as img:
        img = img.convert("RGB")
        h, w = input_hw
        img = TF.resize(img, max(h, w) * 256 // 224)
        img = TF.center_crop(img, [h, w])
        x = TF.to_tensor(img)
    return TF.normalize(x, IMAGENET_MEAN, IMAGENET_STD).unsqueeze(0)


def _forward_with_capture(model: nn.Module, module: nn.Module, x: torch.Tensor, grab: str):
    """Run the model in eval mode, capturing `module`'s input or output."""
    captured: dict[str, torch.Tensor] = {}

    def hook(_mod, inputs, output):
        captured["value"] = (inputs[0] if grab == "input" else output).detach()

    handle = module.register_forward_hook(hook)
    try:
        model.eval()
        with torch.no_grad():
            logits = model(x)
    finally:
        handle.remove()
    if "value" not in captured:
        raise ExportError("target layer was never reached during the forward pass")
    return captured["value"], logits.detach()


def _write_manifest(out_dir: Path, payload: dict) -> Path:
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(payload, indent=2) + "\n")
    return manifest


def _write_info(out_dir: Path, **info) -> None:
    (out_dir / "export_info.json").write_text(json.dumps(info, indent=2) + "\n")


def export_linear_bundle(model: nn.Module, x: torch.Tensor, out_dir: Path) -> Path:
    """Serialize a GAP+FC model: pre-pool feature maps, fc weights, reference logits."""
    avgpool = getattr(model, "avgpool", None)
    fc = getattr(model, "fc", None)
    if not isinstance(avgpool, nn.AdaptiveAvgPool2d) or not isinstance(fc, nn.Linear):
        raise ExportError("model lacks the expected GAP+FC head structure (avgpool + fc)")
    feature_maps, logits = _forward_with_capture(model, avgpool, x, grab="input")
    a = feature_maps[0]  # K x h x w
    if fc.in_features != a.shape[0]:
        raise ExportError(f"fc expects {fc.in_features} inputs but the feature stack has {a.shape[0]} maps")

    out_dir.mkdir(parents=True, exist_ok=True)
    save_npy(a, out_dir / "activations.npy")
    save_npy(fc.weight, out_dir / "W.npy")
    save_npy(fc.bias, out_dir / "b.npy")
    save_npy(logits[0], out_dir / "reference_logits.npy")
    return _write_manifest(
        out_dir,
        {
            "kind": "linear",
            "units": int(a.shape[0]),
            "input_hw": [int(x.shape[-2]), int(x.shape[-1])],
            "weights": {"W": "W.npy", "b": "b.npy"},
            "activations": "activations.npy",
            "reference_logits": "reference_logits.npy",
        },
    )


def export_mlp_bundle(model: nn.Module, x: torch.Tensor, out_dir: Path) -> Path:
    """Serialize a conv + MLP-classifier model; dropout layers export as identity."""
    avgpool = getattr(model, "avgpool", None)
    classifier = getattr(model, "classifier", None)
    if avgpool is None or not isinstance(classifier, nn.Sequential):
        raise ExportError("model lacks the expected MLP head structure (avgpool + classifier)")
    linears = [m for m in classifier if isinstance(m, nn.Linear)]
    if not linears:
        raise ExportError("classifier contains no linear layers")
    for m in classifier:
        if not isinstance(m, (nn.Linear, nn.ReLU, nn.Dropout)):
            raise ExportError(f"unsupported classifier layer {type(m).__name__}")

    pooled, logits = _forward_with_capture(model, avgpool, x, grab="output")
    a = pooled[0]  # K x h x w
    if linears[0].in_features != a.numel():
        raise ExportError(
            f"first classifier layer expects {linears[0].in_features} inputs, "
            f"pooled features have {a.numel()}"
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    save_npy(a, out_dir / "activations.npy")
    weights_entry = {}
    for i, lin in enumerate(linears):
        save_npy(lin.weight, out_dir / f"W{i}.npy")
        save_npy(lin.bias, out_dir / f"b{i}.npy")
        weights_entry[f"W{i}"] = f"W{i}.npy"
        weights_entry[f"b{i}"] = f"b{i}.npy"
    save_npy(logits[0], out_dir / "reference_logits.npy")
    return _write_manifest(
        out_dir,
        {
            "kind": "mlp",
            "units": int(a.shape[0]),
            "input_hw": [int(x.shape[-2]), int(x.shape[-1])],
            "weights": weights_entry,
            "activations": "activations.npy",
            "reference_logits": "reference_logits.npy",
        },
    )


def export_vit_bundle(model: nn.Module, x: torch.Tensor, out_dir: Path) -> Path:
    """Serialize patch tokens entering the final transformer block plus a
    single-head projection distillation of that block.

    The exported q/k/v/classifier matrices come from the final block's
    attention and the model head, so the downstream single-head block is an
    approximation of the real model (projection biases, multi-head split,
    LayerNorm, and the MLP sub-block are dropped). Reference logits are
    written as a sidecar for sanity deltas but deliberately left out of the
    manifest, which would otherwise imply head fidelity.
    """
    encoder = getattr(model, "encoder", None)
    heads = getattr(model, "heads", None)
    if encoder is None or not hasattr(encoder, "layers") or len(encoder.layers) == 0:
        raise ExportError("model lacks a transformer encoder with layers")
    block = encoder.layers[-1]
    attn = getattr(block, "self_attention", None)
    if not isinstance(attn, nn.MultiheadAttention) or not hasattr(block, "ln_1"):
        raise ExportError("final block lacks the expected self-attention structure")
    head_linear = getattr(heads, "head", None) if heads is not None else None
    if not isinstance(head_linear, nn.Linear):
        raise ExportError("model lacks a CLS-token classifier head")

    tokens, logits = _forward_with_capture(model, block.ln_1, x, grab="input")
    seq = tokens[0]  # (N+1) x D with CLS first
    if seq.ndim != 2 or seq.shape[0] < 2:
        raise ExportError(f"unexpected token shape {tuple(seq.shape)}")
    cls_token, patches = seq[0], seq[1:]
    n, d = patches.shape
    ipw = attn.in_proj_weight
    if ipw is None or ipw.shape != (3 * d, d):
        raise ExportError("attention does not expose a fused (3D, D) in-proj weight")
    wq_t, wk_t, wv_t = ipw[:d], ipw[d : 2 * d], ipw[2 * d :]

    out_dir.mkdir(parents=True, exist_ok=True)
    save_npy(patches, out_dir / "activations.npy")
    save_npy(cls_token, out_dir / "cls_token.npy")
    # torch projects as x @ W.T; the bundle convention is x @ W
    save_npy(wq_t.T, out_dir / "Wq.npy")
    save_npy(wk_t.T, out_dir / "Wk.npy")
    save_npy(wv_t.T, out_dir / "Wv.npy")
    save_npy(head_linear.weight, out_dir / "Wcls.npy")
    save_npy(head_linear.bias, out_dir / "bcls.npy")
    save_npy(logits[0], out_dir / "reference_logits.npy")
    return _write_manifest(
        out_dir,
        {
            "kind": "vit",
            "units": int(n),
            "input_hw": [int(x.shape[-2]), int(x.shape[-1])],
            "weights": {
                "Wq": "Wq.npy",
                "Wk": "Wk.npy",
                "Wv": "Wv.npy",
                "Wcls": "Wcls.npy",
                "bcls": "bcls.npy",
            },
            "activations": "activations.npy",
            "cls_token": "cls_token.npy",
        },
    )


def run_export(
    model_id: str,
    image_path: str | Path,
    kind: str,
    out_dir: str | Path,
    pretrained: bool = False,
    seed: int = 0,
) -> Path:
    """Build the model, run the image through it, and write the bundle."""
    if model_id not in MODELS:
        raise ExportError(f"unknown model {model_id!r}; available: {sorted(MODELS)}")
    spec = MODELS[model_id]
    if kind != spec.kind:
        raise ExportError(f"model {model_id} exports kind={spec.kind!r}, not {kind!r}")
    torch.manual_seed(seed)
    model = spec.builder(pretrained)
    x = load_image(image_path, spec.input_hw)

    out_dir = Path(out_dir)
    exporters = {"linear": export_linear_bundle, "mlp": export_mlp_bundle, "vit": export_vit_bundle}
    manifest = exporters[kind](model, x, out_dir)
    _write_info(
        out_dir,
        model=model_id,
        kind=kind,
        pretrained=pretrained,
        seed=seed,
        image=str(image_path),
        preprocessing=(
            "npy inputs are used as-is; image files are resized, center-cropped to the "
            "model resolution, and ImageNet-normalized"
        ),
        reference_logits="reference_logits.npy",
    )
    return manifest
