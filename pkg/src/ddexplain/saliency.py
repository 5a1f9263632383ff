"""Per-unit logit-drop weights and saliency map composition.

After the search has fixed a sufficient set, each selected unit is masked in
turn (keeping the rest of the set active) to measure how much the target
logit drops; the normalized drops weight the units' spatial footprints in
the final [0, 1] map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .ddmin import SearchStats, UnitSet
from .tensor import FLOAT, bilinear_upsample, minmax_normalize

ForwardFn = Callable[[Iterable[int]], np.ndarray]  # active indices -> logits


@dataclass
class ExplanationResult:
    """Selected 1-minimal set with its weights, saliency map, and accounting.

    `delta` and `weights` are index-aligned with ``selected.indices()``
    (ascending unit order). `delta` holds the raw measured drops; `weights`
    are the clamped, normalized convex weights.
    """

    target_class: int
    selected: UnitSet
    delta: np.ndarray
    weights: np.ndarray
    map: np.ndarray
    stats: SearchStats

    def to_json_dict(self, map_npy: str, map_pgm: str) -> dict:
        return {
            "target_class": self.target_class,
            "selected_units": list(self.selected.indices()),
            "delta": [float(d) for d in self.delta],
            "weights": [float(w) for w in self.weights],
            "forward_evaluations": self.stats.forward_evaluations,
            "total_requests": self.stats.total_requests,
            "map_npy": map_npy,
            "map_pgm": map_pgm,
        }


def compute_unit_weights(
    forward: ForwardFn,
    s: UnitSet,
    target_class: int,
    baseline: str = "masked",
) -> tuple[np.ndarray, np.ndarray]:
    """Logit drops and normalized weights for each unit of the selected set.

    For unit i, the drop is the target logit with all of `s` active minus the
    target logit with `s` minus i active. The baseline logit uses the
    explanation context by default (`"masked"`: complement of `s` zeroed);
    `"full"` uses the unmasked activations instead. Negative drops clamp to
    zero before normalizing; when every clamped drop is zero the weights fall
    back to uniform, so the weights always form a convex combination.
    """
    if baseline not in ("masked", "full"):
        raise ValueError(f"unknown baseline {baseline!r}")
    k = len(s)
    if k == 0:
        return np.zeros(0, dtype=np.float64), np.zeros(0, dtype=np.float64)
    base_set = s if baseline == "masked" else UnitSet.full(s.m)
    y_base = float(forward(base_set.indices())[target_class])
    delta = np.empty(k, dtype=np.float64)
    for j, i in enumerate(s.indices()):
        y_i = float(forward(s.remove(i).indices())[target_class])
        delta[j] = y_base - y_i
    clamped = np.maximum(delta, 0.0)
    total = clamped.sum()
    if total > 0.0:
        weights = clamped / total
    else:
        weights = np.full(k, 1.0 / k, dtype=np.float64)
    return delta, weights


def compose_cnn_map(
    a: np.ndarray,
    s: UnitSet,
    weights: Sequence[float],
    out_h: int,
    out_w: int,
) -> np.ndarray:
    """Weighted sum of the selected feature maps, normalized then upsampled.

    Only maps indexed by `s` enter the sum (weights aligned with the sorted
    indices); excluded maps cannot influence the output.
    """
    a = np.asarray(a, dtype=FLOAT)
    if a.ndim != 3:
        raise ValueError(f"expected a K x h x w stack, got shape {a.shape}")
    idx = s.indices()
    if len(idx) != len(weights):
        raise ValueError(f"{len(weights)} weights do not align with {len(idx)} selected units")
    if idx and idx[-1] >= a.shape[0]:
        raise ValueError(f"selected unit {idx[-1]} out of range for {a.shape[0]} maps")
    acc = np.zeros(a.shape[1:], dtype=np.float64)
    for w, i in zip(weights, idx):
        acc += float(w) * a[i].astype(np.float64)
    return bilinear_upsample(minmax_normalize(acc.astype(FLOAT)), out_h, out_w)


def infer_grid_side(n: int) -> int:
    """Side length of the square patch grid holding n tokens; rejects non-square n."""
    side = math.isqrt(n)
    if side * side != n:
        raise ValueError(f"{n} patch tokens do not form a square grid")
    return side


def compose_vit_map(
    weights: Sequence[float],
    s: UnitSet,
    grid_side: int,
    out_h: int,
    out_w: int,
    token_norms: Sequence[float] | None = None,
) -> np.ndarray:
    """Per-patch weight grid, normalized then upsampled.

    Each selected patch contributes its scalar weight at its row-major grid
    cell (unselected cells are zero). `token_norms`, when given, scales each
    selected patch's weight by that patch's token norm instead of using the
    bare weight.
    """
    n = grid_side * grid_side
    idx = s.indices()
    if len(idx) != len(weights):
        raise ValueError(f"{len(weights)} weights do not align with {len(idx)} selected patches")
    if idx and idx[-1] >= n:
        raise ValueError(f"selected patch {idx[-1]} out of range for {n} grid cells")
    grid = np.zeros(n, dtype=np.float64)
    for w, i in zip(weights, idx):
        scale = float(token_norms[i]) if token_norms is not None else 1.0
        grid[i] = float(w) * scale
    grid2d = grid.reshape(grid_side, grid_side).astype(FLOAT)
    return bilinear_upsample(minmax_normalize(grid2d), out_h, out_w)
