"""Shared independent reference implementations used as test oracles.

These deliberately avoid the package's vectorized code paths: plain Python
loops and a second copy of the documented LCG recurrence, so they can catch
errors in the implementations they check.
"""

import numpy as np
import pytest

from ddexplain.ddmin import PredictionOracle, UnitSet


def scalar_bilinear(src, out_h, out_w):
    """Loop-based half-pixel bilinear resize (float64)."""
    src = np.asarray(src, dtype=np.float64)
    in_h, in_w = src.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        sy = min(max((i + 0.5) * in_h / out_h - 0.5, 0.0), in_h - 1)
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, in_h - 1)
        fy = sy - y0
        for j in range(out_w):
            sx = min(max((j + 0.5) * in_w / out_w - 0.5, 0.0), in_w - 1)
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, in_w - 1)
            fx = sx - x0
            top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
            bot = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
            out[i, j] = top * (1 - fy) + bot * fy
    return out


class ReferenceLcg:
    """Independent copy of the documented 64-bit LCG recurrence."""

    def __init__(self, seed):
        self.state = seed & 0xFFFFFFFFFFFFFFFF

    def next_float(self):
        self.state = (self.state * 6364136223846793005 + 1442695040888963407) & 0xFFFFFFFFFFFFFFFF
        return (self.state >> 11) * 2.0**-53


def monotone_oracle(m, required):
    """Prediction preserved (class 0) iff all of `required` is active."""
    req = frozenset(required)

    def classify(s: UnitSet) -> int:
        return 0 if req.issubset(s.indices()) else 1

    return PredictionOracle(classify, m)


def always_preserving_oracle(m):
    def classify(s: UnitSet) -> int:
        return 0

    return PredictionOracle(classify, m)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
