"""Desk-scale classifier heads mapping (masked) activations to logits.

Three head families cover the unit-interaction regimes that matter for
subset search: a GAP+linear head (additive, non-interacting units), an MLP
head over flattened feature maps (interacting via ReLU), and a single
self-attention head over patch tokens (interacting via softmax). Values are
float32; matrix products and means accumulate in float64.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rng import Lcg
from .tensor import FLOAT, apply_unit_mask, load_tensor

KINDS = ("linear", "mlp", "vit")


class ManifestError(ValueError):
    """Raised when a model manifest or its referenced files are invalid."""


def _f8(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def predict(logits: np.ndarray) -> int:
    """Index of the maximum logit; ties break to the lowest index."""
    logits = np.asarray(logits)
    if logits.ndim != 1 or logits.size < 1:
        raise ValueError(f"expected a nonempty logit vector, got shape {logits.shape}")
    return int(np.argmax(logits))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over a 1-D logit vector."""
    z = _f8(logits)
    z = z - z.max()
    e = np.exp(z)
    return (e / e.sum()).astype(FLOAT)


@dataclass(frozen=True)
class LinearHead:
    """Global-average-pool over each feature map followed by one affine layer."""

    w: np.ndarray  # C x K
    b: np.ndarray  # C

    def __post_init__(self):
        w = np.ascontiguousarray(self.w, dtype=FLOAT)
        b = np.ascontiguousarray(self.b, dtype=FLOAT)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ValueError(f"inconsistent head shapes W{w.shape} b{b.shape}")
        if w.shape[0] < 2:
            raise ValueError("linear head needs at least 2 classes")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @property
    def num_classes(self) -> int:
        return self.w.shape[0]

    @property
    def num_units(self) -> int:
        return self.w.shape[1]

    def forward(self, a: np.ndarray) -> np.ndarray:
        """logits = W . gap(a) + b for a stack of K feature maps."""
        a = np.asarray(a, dtype=FLOAT)
        if a.ndim != 3 or a.shape[0] != self.num_units:
            raise ValueError(f"activation stack {a.shape} does not match W {self.w.shape}")
        gap = _f8(a).mean(axis=(1, 2))
        return (_f8(self.w) @ gap + _f8(self.b)).astype(FLOAT)

    def masked_logits(self, a: np.ndarray, active: Iterable[int], m: int) -> np.ndarray:
        return self.forward(apply_unit_mask(a, active, m))


@dataclass(frozen=True)
class MlpLayer:
    w: np.ndarray  # out x in
    b: np.ndarray  # out
    activation: str  # "relu" | "identity"


@dataclass(frozen=True)
class MlpHead:
    """Fully connected layers over the flattened K*h*w feature stack.

    Hidden layers apply ReLU; the final layer is affine only, so zero-masking
    a feature map zeroes a contiguous block of the first layer's inputs and
    units interact through the nonlinearities.
    """

    layers: tuple[MlpLayer, ...]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("MLP head needs at least one layer")
        fixed = []
        prev_out = None
        for i, layer in enumerate(self.layers):
            w = np.ascontiguousarray(layer.w, dtype=FLOAT)
            b = np.ascontiguousarray(layer.b, dtype=FLOAT)
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: inconsistent shapes W{w.shape} b{b.shape}")
            if prev_out is not None and w.shape[1] != prev_out:
                raise ValueError(f"layer {i}: input {w.shape[1]} does not compose with previous output {prev_out}")
            if layer.activation not in ("relu", "identity"):
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            prev_out = w.shape[0]
            fixed.append(MlpLayer(w, b, layer.activation))
        if fixed[-1].activation != "identity":
            raise ValueError("final MLP layer must be identity")
        object.__setattr__(self, "layers", tuple(fixed))

    @property
    def num_classes(self) -> int:
        return self.layers[-1].w.shape[0]

    @property
    def input_size(self) -> int:
        return self.layers[0].w.shape[1]

    def forward(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=FLOAT)
        x = _f8(a).reshape(-1)
        if x.size != self.input_size:
            raise ValueError(f"flattened activations ({x.size}) do not match first layer input ({self.input_size})")
        for layer in self.layers:
            x = _f8(layer.w) @ x + _f8(layer.b)
            if layer.activation == "relu":
                x = np.maximum(x, 0.0)
        return x.astype(FLOAT)

    def masked_logits(self, a: np.ndarray, active: Iterable[int], m: int) -> np.ndarray:
        return self.forward(apply_unit_mask(a, active, m))


@dataclass(frozen=True)
class AttentionHead:
    """Single self-attention block over [CLS; patches] with a linear classifier.

    Masked patch rows are zeroed before the projections while the CLS row is
    always preserved; the classifier reads the attended CLS row. No LayerNorm,
    MLP sub-block, or positional embedding (real-ViT fidelity is not claimed).
    """

    wq: np.ndarray  # D x D
    wk: np.ndarray  # D x D
    wv: np.ndarray  # D x D
    wcls: np.ndarray  # C x D
    bcls: np.ndarray  # C
    cls_token: np.ndarray  # D

    def __post_init__(self):
        arrs = {}
        for name in ("wq", "wk", "wv", "wcls", "bcls", "cls_token"):
            arrs[name] = np.ascontiguousarray(getattr(self, name), dtype=FLOAT)
        d = arrs["cls_token"].shape[0] if arrs["cls_token"].ndim == 1 else -1
        for name in ("wq", "wk", "wv"):
            if arrs[name].shape != (d, d):
                raise ValueError(f"{name} shape {arrs[name].shape} is not square of token dim {d}")
        if arrs["wcls"].ndim != 2 or arrs["wcls"].shape[1] != d:
            raise ValueError(f"wcls shape {arrs['wcls'].shape} does not match token dim {d}")
        if arrs["bcls"].shape != (arrs["wcls"].shape[0],):
            raise ValueError(f"bcls shape {arrs['bcls'].shape} does not match wcls {arrs['wcls'].shape}")
        for name, arr in arrs.items():
            object.__setattr__(self, name, arr)

    @property
    def num_classes(self) -> int:
        return self.wcls.shape[0]

    @property
    def token_dim(self) -> int:
        return self.cls_token.shape[0]

    def forward(self, p: np.ndarray, active: Iterable[int] | None = None) -> np.ndarray:
        """Logits from self-attention over the CLS token and the active patches.

        `active` selects which of the N patch rows stay nonzero (all by
        default); the CLS token is never masked.
        """
        p = np.asarray(p, dtype=FLOAT)
        if p.ndim != 2 or p.shape[1] != self.token_dim:
            raise ValueError(f"patch tokens {p.shape} do not match token dim {self.token_dim}")
        n = p.shape[0]
        patches = p if active is None else apply_unit_mask(p, active, n)
        x = _f8(np.concatenate([self.cls_token[None, :], patches], axis=0))
        q = x @ _f8(self.wq)
        k = x @ _f8(self.wk)
        v = x @ _f8(self.wv)
        scores = q @ k.T / np.sqrt(float(self.token_dim))
        scores -= scores.max(axis=1, keepdims=True)
        e = np.exp(scores)
        attn = e / e.sum(axis=1, keepdims=True)
        out = attn @ v
        return (_f8(self.wcls) @ out[0] + _f8(self.bcls)).astype(FLOAT)

    def masked_logits(self, p: np.ndarray, active: Iterable[int], m: int) -> np.ndarray:
        if np.asarray(p).shape[0] != m:
            raise ValueError(f"patch tokens {np.asarray(p).shape} do not match unit count {m}")
        return self.forward(p, active)


Head = LinearHead | MlpHead | AttentionHead


def toy_extract(image: np.ndarray, seed: int, k: int = 8) -> np.ndarray:
    """Deterministic toy feature extractor: 3x3 valid conv, ReLU, 4x avg pool.

    The K conv filters (over all input channels) are drawn from the package
    LCG seeded with `seed`, one value per (filter, channel, row, col) in
    row-major order, each uniform in [-0.5, 0.5). The same (image, seed, k)
    always yields the same stack.
    """
    image = np.asarray(image, dtype=FLOAT)
    if image.ndim != 3:
        raise ValueError(f"expected an L x H x W image, got shape {image.shape}")
    if not np.isfinite(image).all():
        raise ValueError("image contains non-finite values")
    l, h, w = image.shape
    if h < 6 or w < 6:
        raise ValueError(f"image {h}x{w} too small: need at least 6x6 for conv + 4x pooling")
    rng = Lcg(seed)
    filters = np.empty((k, l, 3, 3), dtype=FLOAT)
    for fi in range(k):
        for li in range(l):
            for di in range(3):
                for dj in range(3):
                    filters[fi, li, di, dj] = FLOAT(rng.next_float() - 0.5)
    windows = np.lib.stride_tricks.sliding_window_view(_f8(image), (3, 3), axis=(1, 2))
    conv = np.einsum("lyxij,klij->kyx", windows, _f8(filters))
    conv = np.maximum(conv, 0.0)
    ph, pw = conv.shape[1] // 4, conv.shape[2] // 4
    pooled = conv[:, : ph * 4, : pw * 4].reshape(k, ph, 4, pw, 4).mean(axis=(2, 4))
    return pooled.astype(FLOAT)


@dataclass
class ModelManifest:
    """Parsed manifest JSON plus the directory its tensor paths resolve against."""

    kind: str
    units: int
    input_hw: tuple[int, int]
    weights: dict[str, str]
    activations: str
    cls_token: str | None = None
    reference_logits: str | None = None
    labels: list[str] | None = None
    base_dir: Path = field(default_factory=Path)

    def resolve(self, rel: str) -> Path:
        return self.base_dir / rel


@dataclass
class ModelBundle:
    """A validated manifest with its constructed head and loaded activations."""

    manifest: ModelManifest
    head: Head
    activations: np.ndarray  # K x h x w feature maps, or N x D patch tokens

    @property
    def kind(self) -> str:
        return self.manifest.kind

    @property
    def units(self) -> int:
        return self.manifest.units

    def masked_logits(self, active: Iterable[int]) -> np.ndarray:
        return self.head.masked_logits(self.activations, active, self.units)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ManifestError(msg)


def _load_weight(manifest: ModelManifest, name: str) -> np.ndarray:
    _require(name in manifest.weights, f"manifest is missing weight entry {name!r}")
    path = manifest.resolve(manifest.weights[name])
    _require(path.is_file(), f"weight file {path} does not exist")
    return load_tensor(path)


def _mlp_layer_names(weights: dict[str, str]) -> list[tuple[str, str]]:
    pairs = []
    i = 0
    while f"W{i}" in weights:
        _require(f"b{i}" in weights, f"manifest has W{i} but no b{i}")
        pairs.append((f"W{i}", f"b{i}"))
        i += 1
    _require(bool(pairs), "mlp manifest needs W0/b0, W1/b1, ... weight entries")
    return pairs


def load_manifest(path: str | os.PathLike) -> ModelBundle:
    """Load, validate, and construct a model bundle from a manifest JSON file.

    Shape disagreements name both offending shapes. When the manifest lists
    reference logits, the constructed head is run on the full activation set
    and must reproduce them within 1e-3 (max abs difference).
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc

    for key in ("kind", "units", "input_hw", "weights", "activations"):
        _require(key in raw, f"manifest is missing required key {key!r}")
    kind = raw["kind"]
    _require(kind in KINDS, f"unknown kind {kind!r}, expected one of {KINDS}")
    units = int(raw["units"])
    _require(units >= 0, "units must be nonnegative")
    input_hw = tuple(int(v) for v in raw["input_hw"])
    _require(len(input_hw) == 2 and min(input_hw) >= 1, f"bad input_hw {raw['input_hw']}")

    manifest = ModelManifest(
        kind=kind,
        units=units,
        input_hw=input_hw,  # type: ignore[arg-type]
        weights=dict(raw["weights"]),
        activations=raw["activations"],
        cls_token=raw.get("cls_token"),
        reference_logits=raw.get("reference_logits"),
        labels=list(raw["labels"]) if raw.get("labels") is not None else None,
        base_dir=path.parent,
    )

    act_path = manifest.resolve(manifest.activations)
    _require(act_path.is_file(), f"activations file {act_path} does not exist")
    activations = load_tensor(act_path)

    if kind == "linear":
        w = _load_weight(manifest, "W")
        b = _load_weight(manifest, "b")
        _require(
            activations.ndim == 3 and activations.shape[0] == units,
            f"activations shape {activations.shape} does not match units={units} (expected K x h x w)",
        )
        _require(
            w.ndim == 2 and w.shape[1] == units,
            f"W shape {w.shape} does not match activation unit count {units}",
        )
        head: Head = LinearHead(w, b)
    elif kind == "mlp":
        _require(
            activations.ndim == 3 and activations.shape[0] == units,
            f"activations shape {activations.shape} does not match units={units} (expected K x h x w)",
        )
        layers = []
        names = _mlp_layer_names(manifest.weights)
        for idx, (wn, bn) in enumerate(names):
            w = _load_weight(manifest, wn)
            b = _load_weight(manifest, bn)
            layers.append(MlpLayer(w, b, "identity" if idx == len(names) - 1 else "relu"))
        head = MlpHead(tuple(layers))
        _require(
            head.input_size == activations.size,
            f"first layer input {head.input_size} does not match flattened activations {activations.size} "
            f"(shape {activations.shape})",
        )
    else:  # vit
        _require(manifest.cls_token is not None, "vit manifest needs a cls_token entry")
        cls_path = manifest.resolve(manifest.cls_token)
        _require(cls_path.is_file(), f"cls_token file {cls_path} does not exist")
        cls_token = load_tensor(cls_path)
        _require(
            activations.ndim == 2 and activations.shape[0] == units,
            f"patch tokens shape {activations.shape} do not match units={units} (expected N x D)",
        )
        _require(
            cls_token.ndim == 1 and cls_token.shape[0] == activations.shape[1],
            f"cls_token shape {cls_token.shape} does not match token dim {activations.shape[1]}",
        )
        head = AttentionHead(
            wq=_load_weight(manifest, "Wq"),
            wk=_load_weight(manifest, "Wk"),
            wv=_load_weight(manifest, "Wv"),
            wcls=_load_weight(manifest, "Wcls"),
            bcls=_load_weight(manifest, "bcls"),
            cls_token=cls_token,
        )

    if manifest.labels is not None:
        _require(
            len(manifest.labels) == head.num_classes,
            f"{len(manifest.labels)} labels do not match {head.num_classes} classes",
        )

    bundle = ModelBundle(manifest=manifest, head=head, activations=activations)

    if manifest.reference_logits is not None:
        ref_path = manifest.resolve(manifest.reference_logits)
        _require(ref_path.is_file(), f"reference_logits file {ref_path} does not exist")
        ref = load_tensor(ref_path)
        got = bundle.masked_logits(range(units))
        _require(
            ref.shape == got.shape,
            f"reference logits shape {ref.shape} does not match head output {got.shape}",
        )
        err = float(np.max(np.abs(ref.astype(np.float64) - got.astype(np.float64)))) if ref.size else 0.0
        _require(err <= 1e-3, f"head logits deviate from reference logits by {err:.2e} (> 1e-3)")

    return bundle
