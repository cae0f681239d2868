"""Fixed-interval price and volume series built from irregular trades."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from govimpact.errors import CannotNormalize, DegenerateSeries, EmptySeries
from govimpact.ingest import TradePoint

HOUR = 3600
DAY = 24 * HOUR
DEFAULT_DT = 6 * HOUR
KINDS = ("price", "volume", "cumulative_volume")


@dataclass(eq=False)
class IntervalSeries:
    """Values on a regular grid: slot ``k`` covers ``[origin + k*dt, origin + (k+1)*dt)``."""

    asset: str
    kind: str
    dt: int
    origin: int
    slots: np.ndarray
    values: np.ndarray
    base_slot: int | None = None  # set by normalize_at

    def __post_init__(self):
        self.slots = np.asarray(self.slots, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in KINDS:
            raise ValueError(f"unknown series kind {self.kind!r}")
        if self.slots.shape != self.values.shape:
            raise ValueError("slots and values differ in length")
        if len(self.slots) > 1 and np.any(np.diff(self.slots) <= 0):
            raise ValueError("slot indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.slots)

    def items(self) -> list[tuple[int, float]]:
        return list(zip(self.slots.tolist(), self.values.tolist()))

    def as_dict(self) -> dict[int, float]:
        return dict(self.items())

    def value_at(self, slot: int) -> float | None:
        i = np.searchsorted(self.slots, slot)
        if i < len(self.slots) and self.slots[i] == slot:
            return float(self.values[i])
        return None

    def window(self, lo: int, hi: int) -> "IntervalSeries":
        """Restrict to slots in ``[lo, hi)``."""
        m = (self.slots >= lo) & (self.slots < hi)
        return replace(self, slots=self.slots[m], values=self.values[m])

    def scaled(self, factor: float, offset: float = 0.0) -> "IntervalSeries":
        return replace(self, values=self.values * factor + offset)

    def rebase(self, origin: int) -> "IntervalSeries":
        """Same data indexed relative to another grid-aligned origin."""
        shift, rem = divmod(self.origin - origin, self.dt)
        if rem:
            raise ValueError("new origin is not aligned with the slot grid")
        return replace(self, origin=origin, slots=self.slots + shift,
                       base_slot=None if self.base_slot is None else self.base_slot + shift)


@dataclass(eq=False)
class StandardizedSeries:
    base: IntervalSeries
    mu: float
    sigma: float
    slots: np.ndarray
    values: np.ndarray
    window: tuple[int, int] = field(default=(0, 0))

    @property
    def asset(self) -> str:
        return self.base.asset

    def in_window(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.window
        m = (self.slots >= lo) & (self.slots < hi)
        return self.slots[m], self.values[m]


def slot_of(timestamp: int, origin: int, dt: int) -> int:
    return (timestamp - origin) // dt


def _slot_groups(points: Iterable[TradePoint], dt: int, start: int, end: int, origin: int,
                 attr: str) -> dict[int, list[float]]:
    groups: dict[int, list[float]] = defaultdict(list)
    for t in points:
        if start <= t.timestamp < end:
            groups[slot_of(t.timestamp, origin, dt)].append(getattr(t, attr))
    return groups


def _check(dt: int, start: int, end: int, origin: int) -> None:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if end <= start:
        raise ValueError("empty span")
    if (start - origin) % dt or (end - origin) % dt:
        raise ValueError("span bounds must fall on slot boundaries")


def aggregate_prices(points: Sequence[TradePoint], dt: int, start: int, end: int,
                     origin: int | None = None, asset: str | None = None) -> IntervalSeries:
    """Median price per slot with last-observation-carried-forward gap filling.

    The last trade before ``start`` seeds the carry-forward, so a pool that is
    quiet at the start of the span still has a price there. Slots preceding
    every observation are absent.
    """
    origin = start if origin is None else origin
    _check(dt, start, end, origin)
    groups = _slot_groups(points, dt, start, end, origin, "price")
    if not groups:
        raise EmptySeries(f"no trades in [{start}, {end})")
    name = asset if asset is not None else next(iter(points)).asset
    prior = [t for t in points if t.timestamp < start]
    last = max(prior, key=lambda t: (t.timestamp, t.key)).price if prior else None

    first_slot, last_slot = slot_of(start, origin, dt), slot_of(end, origin, dt)
    slots, values = [], []
    for k in range(first_slot, last_slot):
        if k in groups:
            last = float(np.median(groups[k]))
        if last is not None:
            slots.append(k)
            values.append(last)
    return IntervalSeries(name, "price", dt, origin, slots, values)


def aggregate_volumes(points: Sequence[TradePoint], dt: int, start: int, end: int,
                      origin: int | None = None, asset: str | None = None) -> IntervalSeries:
    """Unsigned volume summed per slot; slots without trades hold 0."""
    origin = start if origin is None else origin
    _check(dt, start, end, origin)
    groups = _slot_groups(points, dt, start, end, origin, "volume")
    name = asset if asset is not None else (points[0].asset if points else "")
    slots = np.arange(slot_of(start, origin, dt), slot_of(end, origin, dt))
    values = [math.fsum(groups[k]) if k in groups else 0.0 for k in slots.tolist()]
    return IntervalSeries(name, "volume", dt, origin, slots, values)


def cumulate(series: IntervalSeries, from_slot: int | None = None) -> IntervalSeries:
    if series.kind != "volume":
        raise ValueError(f"cumulate expects a volume series, got {series.kind!r}")
    s = series if from_slot is None else series.window(from_slot, np.iinfo(np.int64).max)
    return replace(s, kind="cumulative_volume", values=np.cumsum(s.values))


def standardize(series: IntervalSeries, window: tuple[int, int]) -> StandardizedSeries:
    """Z-scores using the mean and population standard deviation inside ``window``.

    Values outside the window are transformed with the same moments.
    """
    lo, hi = window
    inside = series.window(lo, hi).values
    if len(np.unique(inside)) < 2:
        raise DegenerateSeries(f"{series.asset}: fewer than two distinct values in window")
    mu = float(np.mean(inside))
    sigma = float(np.std(inside))
    if not sigma > 0:
        raise DegenerateSeries(f"{series.asset}: zero variance in window")
    z = (series.values - mu) / sigma
    return StandardizedSeries(series, mu, sigma, series.slots.copy(), z, (lo, hi))


def normalize_at(series: IntervalSeries, slot: int,
                 search_until: int | None = None) -> IntervalSeries:
    """Divide every value by the value at ``slot``.

    With ``search_until`` set, a zero or missing base moves forward to the
    first slot in ``[slot, search_until)`` holding a nonzero value.
    """
    candidates = [slot] if search_until is None else range(slot, max(search_until, slot + 1))
    for k in candidates:
        v = series.value_at(k)
        if v is not None and v != 0 and math.isfinite(v):
            return replace(series, values=series.values / v, base_slot=k)
    raise CannotNormalize(f"{series.asset}: no usable base value at slot {slot}")
