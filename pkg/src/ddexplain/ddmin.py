"""Subset search for 1-minimal sufficient unit sets.

Provides the general delta-debugging reduction over unit subsets, the
one-pass variant for heads whose units do not interact, the sufficiency and
1-minimality predicates, and an exhaustive brute-force enumerator used as a
verification oracle at small scale.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

MAX_BRUTE_FORCE_UNITS = 20


class OracleNondeterminismError(RuntimeError):
    """Raised when the same unit set yields two different predicted classes."""


@dataclass(frozen=True)
class UnitSet:
    """Immutable subset of {0..m-1}, stored as a bitmask over a universe of m units."""

    m: int
    mask: int

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("universe size must be nonnegative")
        if self.mask < 0 or self.mask >> self.m:
            raise ValueError(f"mask {self.mask:#x} has bits outside universe of {self.m}")

    @classmethod
    def empty(cls, m: int) -> "UnitSet":
        return cls(m, 0)

    @classmethod
    def full(cls, m: int) -> "UnitSet":
        return cls(m, (1 << m) - 1)

    @classmethod
    def from_indices(cls, m: int, indices: Iterable[int]) -> "UnitSet":
        mask = 0
        for i in indices:
            i = int(i)
            if not 0 <= i < m:
                raise ValueError(f"index {i} out of range for universe of {m}")
            mask |= 1 << i
        return cls(m, mask)

    def indices(self) -> tuple[int, ...]:
        out = []
        mask = self.mask
        while mask:
            low = mask & -mask
            out.append(low.bit_length() - 1)
            mask ^= low
        return tuple(out)

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __iter__(self):
        return iter(self.indices())

    def __contains__(self, i: int) -> bool:
        return 0 <= i < self.m and bool(self.mask >> i & 1)

    def add(self, i: int) -> "UnitSet":
        if not 0 <= i < self.m:
            raise ValueError(f"index {i} out of range for universe of {self.m}")
        return UnitSet(self.m, self.mask | 1 << i)

    def remove(self, i: int) -> "UnitSet":
        if i not in self:
            raise KeyError(f"index {i} not in set")
        return UnitSet(self.m, self.mask & ~(1 << i))

    def union(self, other: "UnitSet") -> "UnitSet":
        self._check_universe(other)
        return UnitSet(self.m, self.mask | other.mask)

    def difference(self, other: "UnitSet") -> "UnitSet":
        self._check_universe(other)
        return UnitSet(self.m, self.mask & ~other.mask)

    def issubset(self, other: "UnitSet") -> bool:
        self._check_universe(other)
        return self.mask & ~other.mask == 0

    def _check_universe(self, other: "UnitSet") -> None:
        if self.m != other.m:
            raise ValueError(f"universe mismatch: {self.m} vs {other.m}")

    def __repr__(self) -> str:
        return f"UnitSet({set(self.indices()) if self.mask else '{}'} of {self.m})"


@dataclass
class SearchStats:
    """Oracle-call accounting for one search."""

    forward_evaluations: int  # distinct computed forwards (memo misses)
    total_requests: int  # all oracle requests, memo hits included
    rounds: int  # partition rounds (general) or sweeps (one-pass)
    wall_time: float  # seconds

    def __post_init__(self):
        if self.forward_evaluations > self.total_requests:
            raise ValueError("forward_evaluations cannot exceed total_requests")


class PredictionOracle:
    """Memoizing prediction oracle over unit subsets.

    Wraps a pure ``classify(UnitSet) -> class id`` function (typically
    zero-masking the inactive units and running a head forward plus argmax).
    The target class is computed once from the full set at construction and
    frozen; search-time statistics start at zero afterwards. Results are
    memoized by the active-set bitmask, and a recomputation that contradicts
    the memo aborts the search.
    """

    def __init__(self, classify: Callable[[UnitSet], int], m: int):
        self.classify = classify
        self.m = m
        self._memo: dict[int, int] = {}
        self.forward_evaluations = 0
        self.total_requests = 0
        full = UnitSet.full(m)
        self.target_class = int(classify(full))
        self._memo[full.mask] = self.target_class

    def __call__(self, s: UnitSet) -> int:
        value = self.peek(s)
        self.commit(s, value)
        return value

    def peek(self, s: UnitSet) -> int:
        """Compute the class for `s` without touching statistics or the memo.

        Safe to call concurrently; the classify function must be pure.
        """
        cached = self._memo.get(s.mask)
        if cached is not None:
            return cached
        return int(self.classify(s))

    def commit(self, s: UnitSet, value: int) -> None:
        """Account for one request whose computed class is `value`."""
        self.total_requests += 1
        prev = self._memo.get(s.mask)
        if prev is None:
            self._memo[s.mask] = value
            self.forward_evaluations += 1
        elif prev != value:
            raise OracleNondeterminismError(
                f"unit set {s} classified as {value} but previously as {prev}"
            )


def partition(s: UnitSet, n: int) -> list[UnitSet]:
    """Split `s` into n contiguous runs of its sorted indices, larger parts first."""
    size = len(s)
    if not 1 <= n <= size:
        raise ValueError(f"cannot partition {size} units into {n} parts")
    idx = s.indices()
    q, r = divmod(size, n)
    parts = []
    start = 0
    for i in range(n):
        width = q + 1 if i < r else q
        parts.append(UnitSet.from_indices(s.m, idx[start : start + width]))
        start += width
    return parts


def _evaluate_round(
    oracle: PredictionOracle,
    candidates: Sequence[UnitSet],
    executor: ThreadPoolExecutor | None,
) -> int | None:
    """Index of the first candidate preserving the target class, else None.

    With an executor, all candidates are evaluated concurrently but only the
    results a sequential run would have requested (up to and including the
    lowest-index preserving one) are committed to the memo and statistics, so
    parallel and sequential searches report identical accounting.
    """
    target = oracle.target_class
    if executor is not None and len(candidates) > 1:
        values = list(executor.map(oracle.peek, candidates))
        winner = next((i for i, v in enumerate(values) if v == target), None)
        commit_upto = len(candidates) if winner is None else winner + 1
        for i in range(commit_upto):
            oracle.commit(candidates[i], values[i])
        return winner
    for i, candidate in enumerate(candidates):
        if oracle(candidate) == target:
            return i
    return None


def find_minimal_general(
    oracle: PredictionOracle,
    m: int,
    n_init: int = 2,
    parallel: bool = False,
) -> tuple[UnitSet, SearchStats]:
    """Reduce the full unit set to a 1-minimal sufficient set by delta debugging.

    Each round partitions the candidate set into n parts and tests each
    part's complement; the first preserving complement becomes the new
    candidate set with granularity reset to 2, otherwise granularity doubles
    (capped at the set size) until no single-unit removal preserves the
    prediction. Sets of size <= 1 are handled directly, and the empty set is
    an admissible result when masking everything preserves the prediction.
    """
    if n_init < 2:
        raise ValueError("n_init must be at least 2")
    t0 = time.perf_counter()
    ev0, rq0 = oracle.forward_evaluations, oracle.total_requests
    rounds = 0

    executor = ThreadPoolExecutor(max_workers=8) if parallel else None
    try:
        s = UnitSet.full(m)
        n = n_init
        while True:
            rounds += 1
            if len(s) <= 1:
                if len(s) == 1:
                    only = s.indices()[0]
                    if oracle(s.remove(only)) == oracle.target_class:
                        s = UnitSet.empty(m)
                break
            n = min(n, len(s))
            parts = partition(s, n)
            complements = [s.difference(p) for p in parts]
            winner = _evaluate_round(oracle, complements, executor)
            if winner is not None:
                s = complements[winner]  # strictly smaller: parts are nonempty
                n = 2
                continue
            if n == len(s):
                break
            n = min(2 * n, len(s))
    finally:
        if executor is not None:
            executor.shutdown(wait=False)

    stats = SearchStats(
        forward_evaluations=oracle.forward_evaluations - ev0,
        total_requests=oracle.total_requests - rq0,
        rounds=rounds,
        wall_time=time.perf_counter() - t0,
    )
    return s, stats


def find_minimal_onepass(
    oracle: PredictionOracle,
    m: int,
    repair: bool = True,
) -> tuple[UnitSet, SearchStats]:
    """Single sweep of per-unit removal tests, intended for non-interacting heads.

    Every unit is tested once against the current candidate set (exactly m
    forward evaluations when `repair` is off). With `repair` on, singleton
    sweeps repeat until one removes nothing, which certifies 1-minimality even
    when earlier removals shifted the margins of later tests; sweeps over an
    unchanged set cost no additional forward evaluations thanks to the memo.
    """
    t0 = time.perf_counter()
    ev0, rq0 = oracle.forward_evaluations, oracle.total_requests
    target = oracle.target_class

    s = UnitSet.full(m)
    sweeps = 1
    for i in range(m):
        candidate = s.remove(i)
        if oracle(candidate) == target:
            s = candidate

    if repair:
        while True:
            sweeps += 1
            removed = False
            for i in s.indices():
                candidate = s.remove(i)
                if oracle(candidate) == target:
                    s = candidate
                    removed = True
            if not removed:
                break

    stats = SearchStats(
        forward_evaluations=oracle.forward_evaluations - ev0,
        total_requests=oracle.total_requests - rq0,
        rounds=sweeps,
        wall_time=time.perf_counter() - t0,
    )
    return s, stats


def is_sufficient(oracle: PredictionOracle, s: UnitSet) -> bool:
    """True when activating only `s` preserves the target class."""
    return oracle(s) == oracle.target_class


def is_one_minimal(oracle: PredictionOracle, s: UnitSet) -> bool:
    """True when `s` is sufficient and no single-unit removal stays sufficient.

    Issues exactly len(s) + 1 oracle requests.
    """
    ok = is_sufficient(oracle, s)
    for i in s.indices():
        if oracle(s.remove(i)) == oracle.target_class:
            ok = False
    return ok


def brute_force_minimal_sets(oracle: PredictionOracle, m: int) -> list[UnitSet]:
    """All 1-minimal sufficient sets, by exhaustive enumeration of 2^m subsets.

    Verification oracle only; refuses m > 20.
    """
    if m > MAX_BRUTE_FORCE_UNITS:
        raise ValueError(f"brute force refused for m={m} > {MAX_BRUTE_FORCE_UNITS}")
    target = oracle.target_class
    sufficient = [oracle(UnitSet(m, mask)) == target for mask in range(1 << m)]
    minimal = []
    for mask in range(1 << m):
        if not sufficient[mask]:
            continue
        bits = mask
        is_minimal = True
        while bits:
            low = bits & -bits
            if sufficient[mask ^ low]:
                is_minimal = False
                break
            bits ^= low
        if is_minimal:
            minimal.append(UnitSet(m, mask))
    return minimal
