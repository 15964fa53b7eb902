"""Alignment-based comparison of two high-level trace files.

Records match on (type, source name, target name); timestamps are compared
separately as per-pair deltas against a tolerance, because adapted replays
legitimately shift timing while verbatim replays must be tick-exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .recorder import TraceRecord

IDENTICAL = "Identical"
DIVERGED = "Diverged"


@dataclass
class TraceDiff:
    verdict: str
    first_divergence: int | None = None
    missing: list[TraceRecord] = field(default_factory=list)
    extra: list[TraceRecord] = field(default_factory=list)
    timing_deltas: list[int] = field(default_factory=list)

    @property
    def identical(self) -> bool:
        return self.verdict == IDENTICAL

    def summary(self) -> str:
        if self.identical:
            return "traces identical"
        parts = [f"diverged at index {self.first_divergence}"]
        if self.missing:
            first = self.missing[0]
            parts.append(f"{len(self.missing)} missing "
                         f"(first: {first.mtype} {first.source.name}"
                         f"{' -> ' + first.target.name if first.target else ''})")
        if self.extra:
            parts.append(f"{len(self.extra)} unexpected")
        if self.timing_deltas:
            worst = max(abs(d) for d in self.timing_deltas)
            parts.append(f"max timing delta {worst} ticks")
        return "; ".join(parts)


def _match_key(rec: TraceRecord, keys: tuple[str, ...]) -> tuple:
    parts = []
    for k in keys:
        if k == "type":
            parts.append(rec.mtype)
        elif k == "source":
            parts.append(rec.source.name)
        elif k == "target":
            parts.append(rec.target.name if rec.target else None)
        else:
            raise ValueError(f"unknown match key {k!r}")
    return tuple(parts)


def _lcs_pairs(a: list[tuple], b: list[tuple]) -> list[tuple[int, int]]:
    """Longest common subsequence as index pairs, with a tie-break that is
    symmetric under swapping the inputs (so missing(a,b) == extra(b,a))."""
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        row, prev = table[i], table[i - 1]
        ai = a[i - 1]
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = prev[j] if prev[j] >= row[j - 1] else row[j - 1]
    pairs: list[tuple[int, int]] = []
    i, j = n, m
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1] and table[i][j] == table[i - 1][j - 1] + 1:
            pairs.append((i - 1, j - 1))
            i -= 1
            j -= 1
        elif table[i - 1][j] > table[i][j - 1]:
            i -= 1
        elif table[i][j - 1] > table[i - 1][j]:
            j -= 1
        else:
            # equal scores and unequal keys: break the tie on content so the
            # walk mirrors itself when the arguments are swapped
            if repr(a[i - 1]) >= repr(b[j - 1]):
                i -= 1
            else:
                j -= 1
    pairs.reverse()
    return pairs


def diff_traces(expected: list[TraceRecord], actual: list[TraceRecord],
                keys: tuple[str, ...] = ("type", "source", "target"),
                tolerance: float = 0) -> TraceDiff:
    """Align two traces and report missing/extra records and timing drift.

    ``tolerance`` bounds the allowed |actual - expected| timestamp delta per
    matched pair; use ``math.inf`` to ignore timing entirely. Pure function.
    """
    ka = [_match_key(r, keys) for r in expected]
    kb = [_match_key(r, keys) for r in actual]
    pairs = _lcs_pairs(ka, kb)
    matched_a = {i for i, _ in pairs}
    matched_b = {j for _, j in pairs}
    missing = [expected[i] for i in range(len(expected)) if i not in matched_a]
    extra = [actual[j] for j in range(len(actual)) if j not in matched_b]
    deltas = [actual[j].timestamp - expected[i].timestamp for i, j in pairs]

    first: int | None = None
    unmatched_a = min((i for i in range(len(expected)) if i not in matched_a),
                      default=None)
    unmatched_b = min((j for j in range(len(actual)) if j not in matched_b),
                      default=None)
    candidates = [c for c in (unmatched_a, unmatched_b) if c is not None]
    if candidates:
        first = min(candidates)
    else:
        for idx, ((_, _), delta) in enumerate(zip(pairs, deltas)):
            if not (abs(delta) <= tolerance or math.isinf(tolerance)):
                first = idx
                break

    verdict = IDENTICAL if (not missing and not extra and first is None) \
        else DIVERGED
    return TraceDiff(verdict, first, missing, extra, deltas)
