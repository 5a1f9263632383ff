"""Seeded demo bundles: self-contained model fixtures for the CLI and tests.

Every value flows from the package LCG, so a given (seed, kind, size) always
produces byte-identical files. The linear bundle is engineered so its unique
1-minimal sufficient set is known by construction: a hidden required set R
contributes exactly +1 per unit to class 0, class 1 carries a constant bias
of |R| - 0.5, and the remaining classes never win, so the prediction is
preserved iff R is fully active.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .heads import AttentionHead, LinearHead, MlpHead, MlpLayer, toy_extract
from .rng import Lcg
from .tensor import FLOAT, save_tensor


def _uniform_array(rng: Lcg, shape: tuple[int, ...], lo: float, hi: float) -> np.ndarray:
    flat = np.empty(int(np.prod(shape)), dtype=FLOAT)
    for i in range(flat.size):
        flat[i] = FLOAT(rng.uniform(lo, hi))
    return flat.reshape(shape)


def _write_manifest(out_dir: Path, payload: dict) -> Path:
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def write_linear_bundle(
    out_dir: str | Path,
    seed: int,
    m: int = 10,
    c: int = 2,
    hw: tuple[int, int] = (3, 3),
    input_hw: tuple[int, int] = (24, 24),
    bias_only: bool = False,
    required: list[int] | None = None,
) -> Path:
    """Write an engineered GAP+linear bundle; returns the manifest path.

    The required set R (2 or 3 units, or `required` when given) is drawn
    from the seed; with `bias_only` the weights are all zero and the bias
    alone decides, so the minimal sufficient set is empty.
    """
    if m < 2 or c < 2:
        raise ValueError("need at least 2 units and 2 classes")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = Lcg(seed)

    activations = _uniform_array(rng, (m, hw[0], hw[1]), 0.5, 1.5)
    gap = activations.astype(np.float64).mean(axis=(1, 2))

    w = np.zeros((c, m), dtype=FLOAT)
    b = np.zeros(c, dtype=FLOAT)
    if bias_only:
        required = []
        b[0] = 1.0
    else:
        if required is None:
            r_size = 2 if m < 6 else 2 + rng.next_int(2)
            required = rng.sample(m, r_size)
        if not required or any(not 0 <= i < m for i in required):
            raise ValueError(f"required units {required} invalid for m={m}")
        for k in required:
            w[0, k] = FLOAT(1.0 / gap[k])
        b[1] = FLOAT(len(required) - 0.5)
        for j in range(2, c):
            b[j] = FLOAT(-1.0 - j)

    head = LinearHead(w, b)
    reference = head.forward(activations)

    save_tensor(activations, out_dir / "activations.npy")
    save_tensor(w, out_dir / "W.npy")
    save_tensor(b, out_dir / "b.npy")
    save_tensor(reference, out_dir / "reference_logits.npy")
    return _write_manifest(
        out_dir,
        {
            "kind": "linear",
            "units": m,
            "input_hw": list(input_hw),
            "weights": {"W": "W.npy", "b": "b.npy"},
            "activations": "activations.npy",
            "reference_logits": "reference_logits.npy",
            "labels": [f"class_{j}" for j in range(c)],
        },
    )


def write_mlp_bundle(
    out_dir: str | Path,
    seed: int,
    m: int = 8,
    c: int = 3,
    hw: tuple[int, int] = (2, 2),
    hidden: int = 16,
    input_hw: tuple[int, int] = (24, 24),
) -> Path:
    """Write a random two-layer MLP-head bundle (interacting units)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = Lcg(seed)

    activations = _uniform_array(rng, (m, hw[0], hw[1]), 0.0, 1.0)
    fan0 = m * hw[0] * hw[1]
    s0 = 1.0 / np.sqrt(fan0)
    s1 = 1.0 / np.sqrt(hidden)
    w0 = _uniform_array(rng, (hidden, fan0), -s0, s0)
    b0 = _uniform_array(rng, (hidden,), -0.1, 0.1)
    w1 = _uniform_array(rng, (c, hidden), -s1, s1)
    b1 = _uniform_array(rng, (c,), -0.1, 0.1)

    head = MlpHead((MlpLayer(w0, b0, "relu"), MlpLayer(w1, b1, "identity")))
    reference = head.forward(activations)

    save_tensor(activations, out_dir / "activations.npy")
    save_tensor(w0, out_dir / "W0.npy")
    save_tensor(b0, out_dir / "b0.npy")
    save_tensor(w1, out_dir / "W1.npy")
    save_tensor(b1, out_dir / "b1.npy")
    save_tensor(reference, out_dir / "reference_logits.npy")
    return _write_manifest(
        out_dir,
        {
            "kind": "mlp",
            "units": m,
            "input_hw": list(input_hw),
            "weights": {"W0": "W0.npy", "b0": "b0.npy", "W1": "W1.npy", "b1": "b1.npy"},
            "activations": "activations.npy",
            "reference_logits": "reference_logits.npy",
            "labels": [f"class_{j}" for j in range(c)],
        },
    )


def write_vit_bundle(
    out_dir: str | Path,
    seed: int,
    n: int = 16,
    d: int = 8,
    c: int = 3,
    input_hw: tuple[int, int] = (32, 32),
) -> Path:
    """Write a random single-head attention bundle over an n-token square grid."""
    side = int(np.sqrt(n))
    if side * side != n:
        raise ValueError(f"{n} patch tokens do not form a square grid")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = Lcg(seed)

    patches = _uniform_array(rng, (n, d), -1.0, 1.0)
    cls_token = _uniform_array(rng, (d,), -1.0, 1.0)
    s = 1.0 / np.sqrt(d)
    wq = _uniform_array(rng, (d, d), -s, s)
    wk = _uniform_array(rng, (d, d), -s, s)
    wv = _uniform_array(rng, (d, d), -s, s)
    wcls = _uniform_array(rng, (c, d), -s, s)
    bcls = _uniform_array(rng, (c,), -0.1, 0.1)

    head = AttentionHead(wq, wk, wv, wcls, bcls, cls_token)
    reference = head.forward(patches)

    save_tensor(patches, out_dir / "activations.npy")
    save_tensor(cls_token, out_dir / "cls_token.npy")
    save_tensor(wq, out_dir / "Wq.npy")
    save_tensor(wk, out_dir / "Wk.npy")
    save_tensor(wv, out_dir / "Wv.npy")
    save_tensor(wcls, out_dir / "Wcls.npy")
    save_tensor(bcls, out_dir / "bcls.npy")
    save_tensor(reference, out_dir / "reference_logits.npy")
    return _write_manifest(
        out_dir,
        {
            "kind": "vit",
            "units": n,
            "input_hw": list(input_hw),
            "weights": {
                "Wq": "Wq.npy",
                "Wk": "Wk.npy",
                "Wv": "Wv.npy",
                "Wcls": "Wcls.npy",
                "bcls": "bcls.npy",
            },
            "activations": "activations.npy",
            "cls_token": "cls_token.npy",
            "reference_logits": "reference_logits.npy",
            "labels": [f"class_{j}" for j in range(c)],
        },
    )


def write_toy_eval_fixture(
    out_dir: str | Path,
    seed: int,
    kind: str = "linear",
    k: int = 6,
    c: int = 3,
    image_hw: tuple[int, int] = (30, 30),
    num_images: int = 1,
    hidden: int = 12,
) -> tuple[Path, list[Path], Path]:
    """Write a toy end-to-end fixture: images, boxes, and a head sized for the extractor.

    Returns (manifest path, image paths, boxes path). The bundled activation
    file holds the extractor output for the first image, so plain explain
    runs work on the bundle too. The head consumes whatever spatial grid the
    toy extractor produces for `image_hw`.
    """
    if kind not in ("linear", "mlp"):
        raise ValueError(f"toy evaluation supports linear or mlp heads, not {kind!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = Lcg(seed)
    h, w = image_hw

    image_paths = []
    images = []
    for i in range(num_images):
        img = _uniform_array(rng, (1, h, w), 0.0, 1.0)
        path = out_dir / f"image_{i:02d}.npy"
        save_tensor(img, path)
        image_paths.append(path)
        images.append(img)

    activations = toy_extract(images[0], seed, k)
    save_tensor(activations, out_dir / "activations.npy")
    _, ph, pw = activations.shape
    stacks = [activations] + [toy_extract(img, seed, k) for img in images[1:]]

    # Redraw until no image is bias-dominated (prediction preserved by the
    # empty set), so the demo produces nonempty explanations. Deterministic:
    # the LCG just keeps advancing.
    def _bias_dominated(head) -> bool:
        from .heads import predict

        empty = predict(head.masked_logits(stacks[0], [], k))
        return any(predict(head.forward(s)) == empty for s in stacks)

    weights_entry: dict[str, str]
    for _ in range(50):
        if kind == "linear":
            wmat = _uniform_array(rng, (c, k), -1.0, 1.0)
            b = _uniform_array(rng, (c,), -0.1, 0.1)
            head = LinearHead(wmat, b)
        else:
            fan0 = k * ph * pw
            s0 = 1.0 / np.sqrt(fan0)
            s1 = 1.0 / np.sqrt(hidden)
            w0 = _uniform_array(rng, (hidden, fan0), -s0, s0)
            b0 = _uniform_array(rng, (hidden,), -0.1, 0.1)
            w1 = _uniform_array(rng, (c, hidden), -s1, s1)
            b1 = _uniform_array(rng, (c,), -0.1, 0.1)
            head = MlpHead((MlpLayer(w0, b0, "relu"), MlpLayer(w1, b1, "identity")))
        if not _bias_dominated(head):
            break
    else:
        raise RuntimeError(f"seed {seed} yields only bias-dominated toy heads")

    head_ref = head.forward(activations)
    if kind == "linear":
        save_tensor(head.w, out_dir / "W.npy")
        save_tensor(head.b, out_dir / "b.npy")
        weights_entry = {"W": "W.npy", "b": "b.npy"}
    else:
        for name, arr in (
            ("W0", head.layers[0].w),
            ("b0", head.layers[0].b),
            ("W1", head.layers[1].w),
            ("b1", head.layers[1].b),
        ):
            save_tensor(arr, out_dir / f"{name}.npy")
        weights_entry = {"W0": "W0.npy", "b0": "b0.npy", "W1": "W1.npy", "b1": "b1.npy"}
    save_tensor(head_ref, out_dir / "reference_logits.npy")

    bx = rng.next_int(max(1, w // 2))
    by = rng.next_int(max(1, h // 2))
    bw = 1 + rng.next_int(max(1, w - bx - 1))
    bh = 1 + rng.next_int(max(1, h - by - 1))
    boxes_path = out_dir / "boxes.json"
    boxes_path.write_text(json.dumps({"boxes": [[bx, by, bw, bh]]}) + "\n")

    manifest = _write_manifest(
        out_dir,
        {
            "kind": kind,
            "units": k,
            "input_hw": [h, w],
            "weights": weights_entry,
            "activations": "activations.npy",
            "reference_logits": "reference_logits.npy",
            "labels": [f"class_{j}" for j in range(c)],
        },
    )
    return manifest, image_paths, boxes_path
