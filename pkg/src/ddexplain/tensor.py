"""Dense float32 tensor utilities: NPY file IO, unit masking, normalization, upsampling.

All tensors are C-order float32 numpy arrays. Reductions and interpolation
accumulate in float64 and round back to float32 so results are reproducible
across platforms.
"""

from __future__ import annotations

import os
from typing import Iterable

import numpy as np

FLOAT = np.float32


class TensorFormatError(ValueError):
    """Raised when a tensor file violates the supported NPY v1.0 subset."""


def load_tensor(path: str | os.PathLike) -> np.ndarray:
    """Load a float32 C-order NPY v1.0 file.

    Only the exact subset written by :func:`save_tensor` is accepted:
    version 1.0, dtype float32 (little-endian), C order, finite payload.
    Anything else is rejected with a diagnostic.
    """
    with open(path, "rb") as fh:
        try:
            version = np.lib.format.read_magic(fh)
        except ValueError as exc:
            raise TensorFormatError(f"{path}: not an NPY file ({exc})") from exc
        if version != (1, 0):
            raise TensorFormatError(f"{path}: NPY version {version} unsupported, expected (1, 0)")
        try:
            shape, fortran_order, dtype = np.lib.format.read_array_header_1_0(fh)
        except ValueError as exc:
            raise TensorFormatError(f"{path}: malformed NPY header ({exc})") from exc
        if dtype != np.dtype("<f4"):
            raise TensorFormatError(f"{path}: dtype {dtype} unsupported, expected little-endian float32")
        if fortran_order:
            raise TensorFormatError(f"{path}: Fortran-order payload unsupported, expected C order")
        count = int(np.prod(shape, dtype=np.int64))
        payload = fh.read()
        expected = count * 4
        if len(payload) != expected:
            raise TensorFormatError(
                f"{path}: payload is {len(payload)} bytes, expected {expected} for shape {shape}"
            )
    data = np.frombuffer(payload, dtype="<f4").reshape(shape)
    if count and not np.isfinite(data).all():
        raise TensorFormatError(f"{path}: payload contains non-finite values")
    return np.ascontiguousarray(data, dtype=FLOAT)


def save_tensor(t: np.ndarray, path: str | os.PathLike) -> None:
    """Write `t` as a float32 C-order NPY v1.0 file (inverse of :func:`load_tensor`)."""
    arr = np.ascontiguousarray(t, dtype=FLOAT)
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, arr, version=(1, 0))


def apply_unit_mask(t: np.ndarray, active: Iterable[int], axis0_units: int) -> np.ndarray:
    """Zero every slice of `t` along axis 0 whose index is not in `active`.

    Active slices are copied bit-identically; inactive slices become all
    zeros. `axis0_units` must equal ``t.shape[0]``.
    """
    t = np.asarray(t, dtype=FLOAT)
    if t.shape[0] != axis0_units:
        raise ValueError(f"tensor has {t.shape[0]} units along axis 0, expected {axis0_units}")
    idx = sorted(set(int(i) for i in active))
    if idx and (idx[0] < 0 or idx[-1] >= axis0_units):
        raise IndexError(f"active indices {idx} out of range for {axis0_units} units")
    out = np.zeros_like(t)
    if idx:
        out[idx] = t[idx]
    return out


def minmax_normalize(m: np.ndarray) -> np.ndarray:
    """Rescale a 2-D map to [0, 1]; a constant map maps to all zeros."""
    m = np.asarray(m, dtype=FLOAT)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {m.shape}")
    mn = m.min()
    mx = m.max()
    if mx == mn:
        return np.zeros_like(m)
    return ((m - mn) / (mx - mn)).astype(FLOAT)


def bilinear_upsample(m: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a 2-D map with bilinear interpolation using half-pixel centers.

    Output pixel (i, j) samples the source at
    ``((i + 0.5) * in_h / out_h - 0.5, (j + 0.5) * in_w / out_w - 0.5)``,
    clamped to the border. Interpolation runs in float64 and rounds back to
    float32, so the output range never exceeds the input range.
    """
    m = np.asarray(m, dtype=FLOAT)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {m.shape}")
    in_h, in_w = m.shape
    if in_h < 1 or in_w < 1 or out_h < 1 or out_w < 1:
        raise ValueError("input and output dimensions must be at least 1")

    src_y = np.clip((np.arange(out_h, dtype=np.float64) + 0.5) * (in_h / out_h) - 0.5, 0.0, in_h - 1)
    src_x = np.clip((np.arange(out_w, dtype=np.float64) + 0.5) * (in_w / out_w) - 0.5, 0.0, in_w - 1)

    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (src_y - y0)[:, None]
    wx = (src_x - x0)[None, :]

    v = m.astype(np.float64)
    top = v[np.ix_(y0, x0)] * (1.0 - wx) + v[np.ix_(y0, x1)] * wx
    bot = v[np.ix_(y1, x0)] * (1.0 - wx) + v[np.ix_(y1, x1)] * wx
    return (top * (1.0 - wy) + bot * wy).astype(FLOAT)


def write_pgm(m: np.ndarray, path: str | os.PathLike) -> None:
    """Write a [0, 1] map as binary PGM (P5, maxval 255).

    Pixel value is ``floor(255 * v + 0.5)`` (round half up).
    """
    m = np.asarray(m, dtype=FLOAT)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {m.shape}")
    if m.size and (m.min() < 0.0 or m.max() > 1.0):
        raise ValueError("map values must lie in [0, 1]")
    h, w = m.shape
    pixels = np.floor(m.astype(np.float64) * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes(order="C"))
