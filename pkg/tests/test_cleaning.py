import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from govimpact.cleaning import (clean_trades, confirm_local, detect_global, maturity_check,
                                modified_zscore, rolling_median_mad)
from govimpact.errors import WindowTooLong
from govimpact.ingest import TradePoint
from govimpact.synth import trade_walk, with_prices
import oracles


def pts_from(prices, blocks=None):
    blocks = blocks if blocks is not None else range(1, len(prices) + 1)
    return [TradePoint("X", b, b * 13, float(p), 1.0, 1.0, 1.0) for p, b in zip(prices, blocks)]


def test_constant_series_scores_zero():
    assert np.all(modified_zscore([3.0] * 20, 7) == 0)


def test_mad_zero_sentinel():
    z = modified_zscore([1, 1, 1, 1, 101], 5)
    assert math.isinf(z[4]) and z[4] > 0
    assert list(z[:4]) == [0, 0, 0, 0]
    z = modified_zscore([10, 10, 10, 10, 10, 10, 10, 50, 10], 9)
    assert math.isinf(z[7])


def test_jittered_window_gives_finite_score():
    # median 10, absolute deviations {1,1,0,1,40,1,0,1,1} -> MAD 1
    z = modified_zscore([9, 11, 10, 9, 50, 11, 10, 9, 11], 9)
    assert z[4] == pytest.approx(0.6745 * 40 / 1, rel=1e-12)
    assert z[4] > 3.5


def test_window_too_long():
    with pytest.raises(WindowTooLong):
        modified_zscore([1.0, 2.0], 3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=1, max_size=60), st.integers(1, 60))
def test_rolling_matches_bruteforce(values, window):
    window = min(window, len(values))
    med, mad = rolling_median_mad(values, window)
    emed, emad = oracles.rolling_median_mad(values, window)
    assert list(med) == [float(v) for v in emed]
    assert list(mad) == [float(v) for v in emad]


def test_clean_walk_has_no_flags():
    assert detect_global(trade_walk(1500, 0.002, seed=3)) == []


def test_large_spike_flagged():
    pts = trade_walk(1500, 0.005, seed=4)
    prices = [t.price for t in pts]
    prices[700] *= 100
    assert 700 in detect_global(with_prices(pts, prices))


def test_short_series_uses_shrunk_window():
    prices = [1.0, 1.01, 0.99, 1.0, 1.02, 50.0, 1.0, 0.98, 1.01, 1.0]
    assert detect_global(pts_from(prices)) == [5]


def test_spike_with_revert_confirmed():
    prices = [1.0 + 0.001 * (i % 3) for i in range(300)]
    prices[150] = 10.0
    pts = pts_from(prices)
    assert confirm_local(pts, [150]) == [150]


def test_persistent_step_not_confirmed():
    rng = np.random.default_rng(0)
    prices = np.exp(rng.normal(0, 0.002, 400))
    prices[200:] *= 3
    pts = pts_from(prices)
    flagged = detect_global(pts, window=100)
    assert confirm_local(pts, flagged) == []


def test_head_index_uses_suffix_only():
    prices = [10.0] + [1.0 + 0.001 * (i % 5) for i in range(50)]
    assert confirm_local(pts_from(prices), [0]) == [0]


def test_removal_is_conservative_and_idempotent():
    pts = trade_walk(1200, 0.01, seed=9)
    prices = [t.price for t in pts]
    for i in (100, 500, 900):
        prices[i] *= 10
    spiked = with_prices(pts, prices)
    kept, rep = clean_trades(spiked)
    assert set(rep.confirmed_spikes) <= set(rep.flagged_global)
    assert rep.removed_count == len(rep.confirmed_spikes) == len(spiked) - len(kept)
    assert kept == [t for i, t in enumerate(spiked) if i not in set(rep.confirmed_spikes)]
    assert {100, 500, 900} <= set(rep.confirmed_spikes)
    again, rep2 = clean_trades(kept)
    assert again == kept and rep2.removed_count == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(2.0, 6.0), st.floats(0.1, 3.0))
def test_higher_threshold_flags_subset(seed, t, extra):
    pts = trade_walk(300, 0.02, seed=seed)
    assert set(detect_global(pts, 100, t + extra)) <= set(detect_global(pts, 100, t))


def _span(first, last, n):
    blocks = np.linspace(first, last, n).round().astype(int)
    return pts_from([1.0] * n, blocks)


def test_maturity_boundaries():
    assert not maturity_check(_span(0, 999_999, 1000))
    assert maturity_check(_span(0, 1_000_000, 1000))
    assert maturity_check(_span(0, 1_200_000, 1000))
    assert not maturity_check(_span(0, 1_200_000, 150))  # mean gap 8,054
    assert maturity_check(_span(0, 1_200_000, 201))  # mean gap exactly 6,000
    assert not maturity_check(_span(0, 0, 1))
