"""Faithfulness and localization metrics over confidences, maps, and boxes.

All metrics are pure functions reporting fractions in [0, 1]. Confidence
triples compare the target-class softmax confidence on the original input
(y), on the explanation-masked input (o), and on the inverse-masked input
(d).
"""

from __future__ import annotations

import csv
import os
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class ConfidencePair:
    """Target-class confidences: original y, explanation-masked o, inverse-masked d."""

    y: float
    o: float
    d: float = float("nan")

    def __post_init__(self):
        for name in ("y", "o"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if not np.isnan(self.d) and not 0.0 <= self.d <= 1.0:
            raise ValueError(f"d={self.d} outside [0, 1]")


def _require_pairs(pairs: Sequence[ConfidencePair]) -> None:
    if not pairs:
        raise ValueError("need at least one confidence pair")


def average_drop(pairs: Sequence[ConfidencePair]) -> float:
    """Mean relative confidence drop max(0, y - o) / y (lower is better)."""
    _require_pairs(pairs)
    if any(p.y <= 0.0 for p in pairs):
        raise ValueError("average_drop requires y > 0 for every pair")
    return float(np.mean([max(0.0, p.y - p.o) / p.y for p in pairs]))


def increase_in_confidence(pairs: Sequence[ConfidencePair]) -> float:
    """Fraction of pairs whose masked confidence strictly exceeds the original."""
    _require_pairs(pairs)
    return float(np.mean([1.0 if p.o > p.y else 0.0 for p in pairs]))


def average_drop_deletion(pairs: Sequence[ConfidencePair]) -> float:
    """Mean relative drop when the highlighted region is deleted (higher is better)."""
    _require_pairs(pairs)
    if any(p.y <= 0.0 for p in pairs):
        raise ValueError("average_drop_deletion requires y > 0 for every pair")
    return float(np.mean([max(0.0, p.y - p.d) / p.y for p in pairs]))


def complexity(saliency: np.ndarray) -> float:
    """L1 mass of the map divided by the pixel count."""
    m = np.asarray(saliency, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {m.shape}")
    return float(np.abs(m).sum() / m.size)


def coherency(map_a: np.ndarray, map_b: np.ndarray) -> float:
    """Pearson correlation of the flattened maps, clamped to [0, 1].

    Defined as 0 when either map is constant (no correlation signal).
    """
    a = np.asarray(map_a, dtype=np.float64).ravel()
    b = np.asarray(map_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"map shapes differ: {map_a.shape} vs {map_b.shape}")
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt((da * da).sum() * (db * db).sum())
    if denom == 0.0:
        return 0.0
    r = float((da * db).sum() / denom)
    return min(1.0, max(0.0, r))


def adcc(ad: float, coh: float, com: float) -> float:
    """Harmonic mean of coherency, 1 - complexity, and 1 - average drop."""
    for name, v in (("ad", ad), ("coh", coh), ("com", com)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0, 1]")
    terms = (coh, 1.0 - com, 1.0 - ad)
    if any(t == 0.0 for t in terms):
        return 0.0
    return 3.0 / sum(1.0 / t for t in terms)


def binarize(saliency: np.ndarray, tau: float = 0.5) -> np.ndarray:
    """Threshold at `tau` times the map maximum; an all-zero map stays all false."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau={tau} outside (0, 1]")
    m = np.asarray(saliency, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {m.shape}")
    peak = m.max() if m.size else 0.0
    if peak <= 0.0:
        return np.zeros(m.shape, dtype=bool)
    return m >= tau * peak


def rasterize_boxes(boxes: Sequence[Sequence[float]], height: int, width: int) -> np.ndarray:
    """Union of axis-aligned (x, y, w, h) pixel boxes as a boolean mask."""
    if not len(boxes):
        raise ValueError("need at least one box")
    mask = np.zeros((height, width), dtype=bool)
    for box in boxes:
        if len(box) != 4:
            raise ValueError(f"box {box} is not (x, y, w, h)")
        x, y, w, h = (int(round(float(v))) for v in box)
        if w <= 0 or h <= 0:
            raise ValueError(f"box {box} has nonpositive extent")
        if x < 0 or y < 0 or x + w > width or y + h > height:
            raise ValueError(f"box {box} outside {width}x{height} image bounds")
        mask[y : y + h, x : x + w] = True
    return mask


def localization_scores(
    mask: np.ndarray, boxes: Sequence[Sequence[float]]
) -> tuple[float, float, float]:
    """(IoU, precision, recall) of a binary mask against the union of boxes."""
    b = np.asarray(mask, dtype=bool)
    if b.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {b.shape}")
    g = rasterize_boxes(boxes, b.shape[0], b.shape[1])
    inter = float(np.logical_and(b, g).sum())
    union = float(np.logical_or(b, g).sum())
    b_area = float(b.sum())
    g_area = float(g.sum())
    iou = inter / union if union else 0.0
    precision = inter / b_area if b_area else 0.0
    recall = inter / g_area  # g_area > 0: boxes have positive extent
    return iou, precision, recall


_NEIGHBORS = tuple(
    (dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)
)


def count_regions(mask: np.ndarray) -> int:
    """Number of 8-connected components of true pixels."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {m.shape}")
    h, w = m.shape
    seen = np.zeros_like(m)
    regions = 0
    for sy in range(h):
        for sx in range(w):
            if not m[sy, sx] or seen[sy, sx]:
                continue
            regions += 1
            queue = deque([(sy, sx)])
            seen[sy, sx] = True
            while queue:
                y, x = queue.popleft()
                for dy, dx in _NEIGHBORS:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and m[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
    return regions


def pct_highlighted(mask: np.ndarray) -> float:
    """Fraction of pixels the binarized map highlights."""
    m = np.asarray(mask, dtype=bool)
    return float(m.mean()) if m.size else 0.0


# Per-image record fields, in report/CSV column order.
RECORD_FIELDS = (
    "y",
    "o",
    "d",
    "complexity",
    "coherency",
    "iou",
    "precision",
    "recall",
    "regions",
    "pct_highlighted",
)


def build_report(records: Iterable[dict]) -> dict:
    """Evaluation report: per-image records plus aggregate means and summary metrics.

    Records hold RECORD_FIELDS values (localization fields may be None when no
    boxes were supplied); aggregates average the non-None values and derive
    AD / IC / ADD / ADCC from them.
    """
    records = [dict(r) for r in records]
    if not records:
        raise ValueError("need at least one record")
    pairs = [ConfidencePair(r["y"], r["o"], r.get("d", float("nan"))) for r in records]

    aggregates: dict[str, float | None] = {}
    for field in RECORD_FIELDS:
        values = [r[field] for r in records if r.get(field) is not None]
        aggregates[field] = float(np.mean(values)) if values else None

    aggregates["average_drop"] = average_drop(pairs)
    aggregates["increase_in_confidence"] = increase_in_confidence(pairs)
    if all(not np.isnan(p.d) for p in pairs):
        aggregates["average_drop_deletion"] = average_drop_deletion(pairs)
    else:
        aggregates["average_drop_deletion"] = None
    coh = aggregates["coherency"]
    com = aggregates["complexity"]
    aggregates["adcc"] = (
        adcc(aggregates["average_drop"], coh, com) if coh is not None and com is not None else None
    )
    return {"records": records, "aggregates": aggregates}


def write_report_csv(report: dict, path: str | os.PathLike) -> None:
    """Write the aggregate table as a single-row CSV."""
    aggregates = report["aggregates"]
    columns = list(aggregates.keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerow(["" if aggregates[c] is None else aggregates[c] for c in columns])
