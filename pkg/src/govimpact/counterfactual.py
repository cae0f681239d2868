"""Counterfactual asset selection by correlation in the long reference window.

Selection runs in three stages: keep candidates correlated above ``t_r``,
keep the ``c`` best of those, then drop any that fall below the mean
correlation of the retained top group.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from govimpact.aggregate import DAY, StandardizedSeries
from govimpact.errors import DegenerateSeries, InsufficientOverlap, NoCounterfactuals

DEFAULT_T_R = 0.4
DEFAULT_C = 10
DEFAULT_MIN_OVERLAP = 30


@dataclass(frozen=True)
class CorrelationResult:
    target: str
    candidate: str
    r: float
    overlap_points: int


@dataclass(frozen=True)
class SelectionConfig:
    t_r: float = DEFAULT_T_R
    c: int = DEFAULT_C
    long_window: tuple[int, int] = (-100, -10)  # days relative to the announcement
    min_overlap: int = DEFAULT_MIN_OVERLAP

    def __post_init__(self):
        if not 0 <= self.t_r < 1:
            raise ValueError(f"t_r must lie in [0, 1), got {self.t_r}")
        if self.c < 1:
            raise ValueError(f"c must be >= 1, got {self.c}")

    def long_slots(self, dt: int) -> tuple[int, int]:
        lo, hi = self.long_window
        return lo * DAY // dt, hi * DAY // dt


@dataclass
class CounterfactualSet:
    event_id: int
    kind: str
    members: list[CorrelationResult]
    stage_sizes: tuple[int, int, int]
    skipped: dict[str, str] = field(default_factory=dict)

    @property
    def symbols(self) -> list[str]:
        return [m.candidate for m in self.members]


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=float) - np.mean(x)
    y = np.asarray(y, dtype=float) - np.mean(y)
    sxx, syy = float(x @ x), float(y @ y)
    if sxx == 0 or syy == 0:
        raise DegenerateSeries("zero variance in correlation input")
    r = float(x @ y) / np.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def correlate(target: StandardizedSeries, candidate: StandardizedSeries,
              window: tuple[int, int] | None = None,
              min_overlap: int = DEFAULT_MIN_OVERLAP) -> CorrelationResult:
    """Pearson correlation over the slots both series hold inside ``window``."""
    lo, hi = window if window is not None else target.window
    ts, tz = target.slots, target.values
    cs, cz = candidate.slots, candidate.values
    common, ti, ci = np.intersect1d(ts, cs, assume_unique=True, return_indices=True)
    m = (common >= lo) & (common < hi)
    n = int(m.sum())
    if n < min_overlap:
        raise InsufficientOverlap(f"{target.asset}/{candidate.asset}: {n} < {min_overlap} pairs")
    r = pearson(tz[ti[m]], cz[ci[m]])
    return CorrelationResult(target.asset, candidate.asset, r, n)


def _ranked(results: Iterable[CorrelationResult]) -> list[CorrelationResult]:
    return sorted(results, key=lambda x: (-x.r, x.candidate))


def rank_candidates(correlations: Sequence[CorrelationResult], t_r: float = DEFAULT_T_R,
                    c: int = DEFAULT_C) -> tuple[list[CorrelationResult], tuple[int, int, int]]:
    """Apply the three selection stages to precomputed correlations.

    Candidates tied with the ``c``-th best are all kept in stage two. The
    stage-three mean is computed in exact rational arithmetic so that equal
    correlations are never split by rounding.
    """
    stage1 = _ranked(x for x in correlations if x.r > t_r)
    if not stage1:
        return [], (0, 0, 0)
    if len(stage1) > c:
        cutoff = stage1[c - 1].r
        stage2 = [x for x in stage1 if x.r >= cutoff]
    else:
        stage2 = list(stage1)
    mean = sum(Fraction(x.r) for x in stage2) / len(stage2)
    stage3 = [x for x in stage2 if Fraction(x.r) >= mean]
    return stage3, (len(stage1), len(stage2), len(stage3))


def correlate_universe(target: StandardizedSeries,
                       universe: Mapping[str, StandardizedSeries],
                       window: tuple[int, int] | None = None,
                       min_overlap: int = DEFAULT_MIN_OVERLAP
                       ) -> tuple[list[CorrelationResult], dict[str, str]]:
    results, skipped = [], {}
    for sym in sorted(universe):
        if sym == target.asset:
            continue
        try:
            results.append(correlate(target, universe[sym], window, min_overlap))
        except (InsufficientOverlap, DegenerateSeries) as exc:
            skipped[sym] = f"{type(exc).__name__}: {exc}"
    return results, skipped


def select(target: StandardizedSeries, universe: Mapping[str, StandardizedSeries],
           config: SelectionConfig = SelectionConfig(), event_id: int = 0,
           kind: str = "price", window: tuple[int, int] | None = None) -> CounterfactualSet:
    results, skipped = correlate_universe(target, universe, window, config.min_overlap)
    members, sizes = rank_candidates(results, config.t_r, config.c)
    if not members:
        raise NoCounterfactuals(
            f"event {event_id} ({kind}): no candidate correlates above t_r={config.t_r}")
    return CounterfactualSet(event_id, kind, members, sizes, skipped)


@dataclass(frozen=True)
class SweepRow:
    t_r: float
    min_count: int
    mean_count: float
    mean_corr: float | None


def sweep_thresholds(correlations_by_event: Mapping[int, Sequence[CorrelationResult]],
                     grid: Sequence[float], c: int = DEFAULT_C) -> list[SweepRow]:
    """Counterfactual set sizes and correlations across a grid of ``t_r``.

    ``mean_corr`` averages, over events with at least one member, the mean
    member correlation; it is ``None`` when no event keeps a member.
    """
    if not grid:
        raise ValueError("empty threshold grid")
    rows = []
    for t in grid:
        counts, corrs = [], []
        for eid in sorted(correlations_by_event):
            members, _ = rank_candidates(correlations_by_event[eid], t, c)
            counts.append(len(members))
            if members:
                corrs.append(float(np.mean([m.r for m in members])))
        rows.append(SweepRow(float(t), min(counts) if counts else 0,
                             float(np.mean(counts)) if counts else 0.0,
                             float(np.mean(corrs)) if corrs else None))
    return rows
