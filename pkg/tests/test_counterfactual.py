import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from govimpact.aggregate import IntervalSeries, standardize
from govimpact.counterfactual import (CorrelationResult, SelectionConfig, correlate,
                                      rank_candidates, select, sweep_thresholds)
from govimpact.errors import InsufficientOverlap, NoCounterfactuals
import oracles


def zs(name, values, start=0):
    s = IntervalSeries(name, "price", 3600, 0, range(start, start + len(values)), values)
    return standardize(s, (start, start + len(values)))


def cr(name, r):
    return CorrelationResult("T", name, r, 100)


def test_correlate_examples():
    x = np.sin(np.arange(40.0))
    assert correlate(zs("T", x), zs("A", x)).r == pytest.approx(1.0)
    assert correlate(zs("T", x), zs("A", -x)).r == pytest.approx(-1.0)
    r = correlate(zs("T", [-1, 0, 1]), zs("A", [-1, 1, 0]), min_overlap=3).r
    assert r == pytest.approx(0.5, abs=1e-12)
    assert r == pytest.approx(oracles.pearson([-1, 0, 1], [-1, 1, 0]), abs=1e-12)


def test_correlate_overlap_guard():
    x = np.arange(40.0)
    with pytest.raises(InsufficientOverlap):
        correlate(zs("T", x), zs("A", x, start=20))
    assert correlate(zs("T", x), zs("A", x ** 2, start=10), min_overlap=30).overlap_points == 30


def test_hand_traced_selection():
    members, sizes = rank_candidates([cr("a", 0.9), cr("b", 0.5), cr("c", 0.3)], 0.4, 10)
    assert [m.r for m in members] == [0.9]
    assert sizes == (2, 2, 1)


def test_equal_correlations_all_kept():
    members, sizes = rank_candidates([cr(s, 0.8) for s in "edcba"], 0.4, 10)
    assert [m.candidate for m in members] == list("abcde")
    assert sizes == (5, 5, 5)


def test_strict_threshold_and_empty_stage_one():
    members, sizes = rank_candidates([cr("a", 0.4), cr("b", 0.1)], 0.4, 10)
    assert members == [] and sizes == (0, 0, 0)
    x = np.sin(np.arange(40.0))
    with pytest.raises(NoCounterfactuals):
        select(zs("T", x), {"A": zs("A", np.cos(3 * np.arange(40.0)))})


def test_ties_at_c_boundary_are_kept():
    rs = [cr("a", 0.9), cr("b", 0.8), cr("c", 0.8), cr("d", 0.7)]
    members, sizes = rank_candidates(rs, 0.4, 2)
    assert sizes[1] == 3


@given(st.dictionaries(st.text("abcdefgh", min_size=1, max_size=3),
                       st.sampled_from([i / 20 for i in range(-20, 21)]), max_size=25),
       st.sampled_from([0.0, 0.2, 0.4, 0.6]), st.integers(1, 12))
def test_selection_matches_definition(rs, t_r, c):
    members, sizes = rank_candidates([cr(k, r) for k, r in rs.items()], t_r, c)
    s1, s2, s3 = oracles.select_by_definition(rs, t_r, c)
    assert {m.candidate for m in members} == s3
    assert sizes == (len(s1), len(s2), len(s3))
    assert s3 <= s2 <= s1
    assert (len(s3) >= 1) == (len(s1) >= 1)
    assert [m.r for m in members] == sorted((m.r for m in members), reverse=True)


def test_selection_invariant_to_affine_rescaling():
    rng = np.random.default_rng(5)
    base = np.cumsum(rng.normal(size=60))
    target = zs("T", base + rng.normal(size=60))
    raw = {s: base + rng.normal(scale=k + 1, size=60) for k, s in enumerate("ABCDE")}
    a = select(target, {s: zs(s, v) for s, v in raw.items()})
    b = select(target, {s: zs(s, 7.5 * v - 3) for s, v in raw.items()})
    assert a.symbols == b.symbols
    assert [m.r for m in a.members] == pytest.approx([m.r for m in b.members], abs=1e-12)


def test_sweep_examples():
    rng = np.random.default_rng(1)
    events = {e: [cr(f"x{i}", float(r)) for i, r in enumerate(rng.uniform(-0.3, 0.5, 8))]
              for e in range(4)}
    rows = sweep_thresholds(events, [0.0, 0.2, 0.99], 10)
    assert rows[-1].min_count == 0 and rows[-1].mean_corr is None
    positives = [sum(m.r > 0 for m in rs) for rs in events.values()]
    zero_stage1 = [rank_candidates(rs, 0.0, 10)[1][0] for rs in events.values()]
    assert zero_stage1 == positives


@given(st.lists(st.lists(st.floats(-1, 1), max_size=15), min_size=1, max_size=6))
def test_sweep_mean_count_non_increasing(rs):
    events = {e: [cr(f"x{i}", r) for i, r in enumerate(v)] for e, v in enumerate(rs)}
    grid = [i / 20 for i in range(20)]
    counts = [r.mean_count for r in sweep_thresholds(events, grid, 10)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_selection_config_bounds():
    with pytest.raises(ValueError):
        SelectionConfig(t_r=1.0)
    with pytest.raises(ValueError):
        SelectionConfig(c=0)
    assert SelectionConfig().long_slots(6 * 3600) == (-400, -40)
