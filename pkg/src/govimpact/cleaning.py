"""Two-stage spike filter on trade-level prices and the series maturity test.

Stage one flags trades whose log10 price sits far from a centered rolling
median (modified Z-score, Iglewicz and Hoaglin). Stage two keeps a flag only
if the trade is an isolated spike: it deviates from its local neighbourhood
and the price level just before and just after it agree.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from govimpact.errors import WindowTooLong
from govimpact.ingest import TradePoint

MAD_SCALE = 0.6745
DEFAULT_WINDOW = 1000
DEFAULT_THRESHOLD = 3.5
DEFAULT_BLOCK_RADIUS = 5
DEFAULT_LOCAL_WINDOW = 100
DEFAULT_REVERT_TOL = 1.0
MIN_SPAN_BLOCKS = 1_000_000
MAX_MEAN_GAP_BLOCKS = 6_000

_CHUNK_ELEMS = 1 << 22


@dataclass
class OutlierReport:
    flagged_global: list[int] = field(default_factory=list)
    confirmed_spikes: list[int] = field(default_factory=list)
    removed_count: int = 0
    total_count: int = 0

    def to_dict(self) -> dict:
        return {"flagged_global": list(self.flagged_global),
                "confirmed_spikes": list(self.confirmed_spikes),
                "removed_count": self.removed_count, "total_count": self.total_count}


def _half_widths(window: int) -> tuple[int, int]:
    left = window // 2
    return left, window - 1 - left


def rolling_median_mad(values: Sequence[float], window: int) -> tuple[np.ndarray, np.ndarray]:
    """Centered rolling median and median absolute deviation.

    Windows are truncated at the series boundaries instead of dropping the
    edge points.
    """
    x = np.asarray(values, dtype=float)
    n = len(x)
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > n:
        raise WindowTooLong(f"window {window} exceeds series length {n}")
    left, right = _half_widths(window)
    med = np.empty(n)
    mad = np.empty(n)

    lo, hi = left, n - 1 - right  # centers whose window fits completely
    if hi >= lo:
        views = sliding_window_view(x, window)
        step = max(1, _CHUNK_ELEMS // window)
        for s in range(0, hi - lo + 1, step):
            w = views[s:min(s + step, hi - lo + 1)]
            m = np.median(w, axis=1)
            med[lo + s:lo + s + len(w)] = m
            mad[lo + s:lo + s + len(w)] = np.median(np.abs(w - m[:, None]), axis=1)
    edges = np.array(list(range(0, min(lo, n))) + list(range(max(hi + 1, lo), n)), dtype=int)
    if len(edges):
        # +inf padding sorts to the end, so order statistics of the valid
        # prefix of each sorted row give the truncated-window median
        padded = np.concatenate([np.full(left, np.inf), x, np.full(right, np.inf)])
        views = sliding_window_view(padded, window)
        step = max(1, _CHUNK_ELEMS // window)
        for s in range(0, len(edges), step):
            rows = edges[s:s + step]
            count = np.minimum(rows + right, n - 1) - np.maximum(rows - left, 0) + 1
            w = np.sort(views[rows], axis=1)
            m = _sorted_median(w, count)
            med[rows] = m
            mad[rows] = _sorted_median(np.sort(np.abs(w - m[:, None]), axis=1), count)
    return med, mad


def _sorted_median(sorted_rows: np.ndarray, count: np.ndarray) -> np.ndarray:
    r = np.arange(len(count))
    return 0.5 * (sorted_rows[r, (count - 1) // 2] + sorted_rows[r, count // 2])


def robust_z(values, center, mad) -> np.ndarray:
    """0.6745 * (x - center) / mad, with an infinite sentinel where mad is 0."""
    x = np.asarray(values, dtype=float)
    c = np.asarray(center, dtype=float)
    d = np.asarray(mad, dtype=float)
    dev = x - c
    with np.errstate(divide="ignore", invalid="ignore"):
        z = MAD_SCALE * dev / d
    zero = d == 0
    z = np.where(zero, np.where(dev == 0, 0.0, np.copysign(np.inf, dev)), z)
    return z


def modified_zscore(values: Sequence[float], window: int) -> np.ndarray:
    med, mad = rolling_median_mad(values, window)
    return robust_z(values, med, mad)


def _log_prices(points: Sequence[TradePoint]) -> np.ndarray:
    p = np.array([t.price for t in points], dtype=float)
    if np.any(~(p > 0)) or np.any(~np.isfinite(p)):
        raise ValueError("prices must be positive and finite")
    return np.log10(p)


def detect_global(points: Sequence[TradePoint], window: int = DEFAULT_WINDOW,
                  threshold: float = DEFAULT_THRESHOLD) -> list[int]:
    if len(points) < 2:
        raise ValueError("need at least two trades")
    lp = _log_prices(points)
    z = modified_zscore(lp, min(window, len(lp)))
    return [int(i) for i in np.flatnonzero(np.abs(z) > threshold)]


def confirm_local(points: Sequence[TradePoint], flagged: Sequence[int],
                  block_radius: int = DEFAULT_BLOCK_RADIUS,
                  local_window: int = DEFAULT_LOCAL_WINDOW,
                  threshold: float = DEFAULT_THRESHOLD,
                  revert_tol: float = DEFAULT_REVERT_TOL) -> list[int]:
    """Keep the flagged trades that behave like isolated, reverting spikes.

    A flagged trade is confirmed when its log price is more than ``threshold``
    local modified-Z units from the median of the ``local_window`` trades on
    either side, and the median log price over the ``block_radius`` blocks after
    it lies within ``revert_tol`` local-Z units of the median over the blocks
    before it. Other flagged trades never serve as the before/after reference.
    When a side has no trades within the block radius the nearest unflagged
    trade on that side inside the local window stands in; a side with nothing
    at all is replaced by the local median. Sustained level shifts therefore
    fail the reversion test.
    """
    n = len(points)
    if n == 0:
        return []
    lp = _log_prices(points)
    blocks = np.array([t.block for t in points])
    flag_set = set(int(i) for i in flagged)
    if any(i < 0 or i >= n for i in flag_set):
        raise IndexError("flagged index out of range")
    is_flagged = np.zeros(n, dtype=bool)
    is_flagged[list(flag_set)] = True

    confirmed = []
    for i in sorted(flag_set):
        lo, hi = max(0, i - local_window), min(n, i + local_window + 1)
        nb = lp[lo:hi]
        med = float(np.median(nb))
        mad = float(np.median(np.abs(nb - med)))
        z = float(robust_z(lp[i], med, mad))
        if not abs(z) > threshold:
            continue

        idx = np.arange(lo, hi)
        clean = ~is_flagged[lo:hi]
        before = idx[(idx < i) & clean]
        after = idx[(idx > i) & clean]
        pre = before[blocks[before] >= blocks[i] - block_radius]
        post = after[blocks[after] <= blocks[i] + block_radius]
        if len(pre) == 0 and len(before):
            pre = before[-1:]
        if len(post) == 0 and len(after):
            post = after[:1]
        if len(pre) == 0 and len(post) == 0:
            continue
        level_pre = float(np.median(lp[pre])) if len(pre) else med
        level_post = float(np.median(lp[post])) if len(post) else med
        tol = revert_tol * mad / MAD_SCALE
        if abs(level_post - level_pre) <= tol:
            confirmed.append(i)
    return confirmed


def clean_trades(points: Sequence[TradePoint], window: int = DEFAULT_WINDOW,
                 threshold: float = DEFAULT_THRESHOLD,
                 block_radius: int = DEFAULT_BLOCK_RADIUS,
                 local_window: int = DEFAULT_LOCAL_WINDOW,
                 revert_tol: float = DEFAULT_REVERT_TOL
                 ) -> tuple[list[TradePoint], OutlierReport]:
    """Detect, confirm and physically delete spike trades.

    Passes repeat on the survivors until none is confirmed, because removing
    one spike can expose a neighbour it was masking. Report indices refer to
    positions in ``points``.
    """
    points = list(points)
    report = OutlierReport(total_count=len(points))
    alive = list(range(len(points)))
    flagged_all, confirmed_all = set(), set()
    while len(alive) >= 2:
        current = [points[i] for i in alive]
        flagged = detect_global(current, window, threshold)
        confirmed = confirm_local(current, flagged, block_radius, local_window, threshold,
                                  revert_tol)
        flagged_all.update(alive[i] for i in flagged)
        if not confirmed:
            break
        drop = set(confirmed)
        confirmed_all.update(alive[i] for i in drop)
        alive = [a for j, a in enumerate(alive) if j not in drop]
    report.flagged_global = sorted(flagged_all)
    report.confirmed_spikes = sorted(confirmed_all)
    report.removed_count = len(confirmed_all)
    return [t for i, t in enumerate(points) if i not in confirmed_all], report


def maturity_check(points: Sequence[TradePoint], min_span: int = MIN_SPAN_BLOCKS,
                   max_mean_gap: float = MAX_MEAN_GAP_BLOCKS) -> bool:
    if len(points) < 2:
        return False
    span = points[-1].block - points[0].block
    if span < min_span:
        return False
    return span / (len(points) - 1) <= max_mean_gap
