import decimal
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from govimpact.did import DiDFit, Gamma, classify
from govimpact.errors import MissingRate, MissingSupply
from govimpact.impact import (EffectSummary, MarketCapInputs, humanize_usd, indirect_loss,
                              make_report, market_cap, rate_at, summarize_effect, supply_at,
                              impact_table_rows, totals)
from govimpact.ingest import SupplySnapshot

P_OF = {"***": 0.0005, "**": 0.005, "*": 0.03, "·": 0.07, "ns": 0.5}


def fit_with(gammas: dict[int, tuple[float, str]]) -> DiDFit:
    g = {k: Gamma(e, 0.01, e / 0.01, P_OF[c], c) for k, (e, c) in gammas.items()}
    return DiDFit(1, "price", "T", g, 0.0, {}, {}, np.array([]), 6, 5, -4, "cr1", 0)


def test_market_cap_examples():
    assert market_cap(MarketCapInputs(1000, 1, 2000)) == Decimal(2_000_000)
    assert market_cap(MarketCapInputs(1000, 0.5, 4000)) == 2 * market_cap(
        MarketCapInputs(1000, 0.5, 2000))
    with pytest.raises(ValueError):
        MarketCapInputs(0, 1, 1)


def test_supply_and_rate_lookup():
    snaps = [SupplySnapshot("A", 10, 100.0), SupplySnapshot("A", 20, 200.0),
             SupplySnapshot("B", 5, 7.0)]
    assert supply_at(snaps, "A", 19) == 100.0
    assert supply_at(snaps, "A", 20) == 200.0
    with pytest.raises(MissingSupply):
        supply_at(snaps, "A", 9)
    rates = [(100, 1500.0), (200, 1600.0)]
    assert rate_at(rates, 199) == 1500.0 and rate_at(rates, 500) == 1600.0
    with pytest.raises(MissingRate):
        rate_at(rates, 99)


def test_summarize_top_class_average():
    s = summarize_effect(fit_with({0: (-0.08, "**"), 1: (-0.12, "**"), 2: (-0.02, "ns")}),
                         (-4, 8))
    assert s.cls == "**" and s.mean_effect == pytest.approx(-0.10)
    s = summarize_effect(fit_with({0: (-0.08, "*"), 1: (-0.30, "***"), 2: (-0.02, "ns")}),
                         (-4, 8))
    assert s.cls == "***" and s.mean_effect == pytest.approx(-0.30)


def test_summarize_without_significance():
    s = summarize_effect(fit_with({0: (-0.02, "ns"), 1: (-0.04, "ns"), 9: (-1.0, "***")}),
                         (-4, 8))
    assert s.cls == "ns" and s.mean_effect == pytest.approx(-0.03)
    assert indirect_loss(Decimal(10**9), s) is None


def test_summarize_respects_p_threshold():
    s = summarize_effect(fit_with({0: (-0.05, "·"), 1: (-0.01, "ns")}), (0, 8), 0.05)
    assert s.cls == "ns"


def test_positive_effect_has_no_indirect_loss():
    assert indirect_loss(615.3e6, EffectSummary(0.112, "**", (0,))) is None


# published inputs (cap, price effect %, class, direct) and outputs (indirect, share %, total)
PUBLISHED_ROWS = {
    1: (920.8e6, -5.4, "·", 227e3, 49.8e6, 99.5, 50.1e6),
    14: (3.3e9, -9.8, "**", 80e6, 327.2e6, 80.4, 407.2e6),
    15: (3.9e9, -5.4, "***", 68.8e6, 208.5e6, 75.2, 277.3e6),
}


@pytest.mark.parametrize("row", sorted(PUBLISHED_ROWS))
def test_published_rows_within_rounding(row):
    cap, pct, cls, direct, indirect, share, total = PUBLISHED_ROWS[row]
    rep = make_report(row, "X", cap, EffectSummary(pct / 100, cls, (0,)), None, direct)
    assert float(rep.indirect_loss_usd) == pytest.approx(indirect, rel=0.02)
    assert float(rep.total_loss_usd) == pytest.approx(total, rel=0.02)
    assert float(rep.indirect_share_pct) == pytest.approx(share, rel=0.02)


def test_unknown_direct_loss_omits_share():
    rep = make_report(10, "MASK", 1.7e9, EffectSummary(-0.072, "·", (0,)), None, None)
    assert rep.total_loss_usd == rep.indirect_loss_usd and rep.indirect_share_pct is None


@given(st.floats(1, 1e12), st.floats(-0.99, 0.99), st.sampled_from(list(P_OF)),
       st.one_of(st.none(), st.floats(0, 1e10)))
def test_report_arithmetic_closes(cap, effect, cls, direct):
    rep = make_report(1, "X", cap, EffectSummary(effect, cls, (0,)), None, direct)
    if cls == "ns" or effect >= 0:
        assert rep.indirect_loss_usd is None and rep.total_loss_usd is None
        return
    assert rep.indirect_loss_usd > 0
    if direct is not None:
        with decimal.localcontext(decimal.Context(prec=decimal.MAX_PREC)):
            assert rep.total_loss_usd - rep.direct_loss_usd - rep.indirect_loss_usd == 0
        assert 0 <= rep.indirect_share_pct <= 100


@given(st.floats(1e3, 1e12), st.floats(0.001, 0.5), st.floats(1.0, 3.0))
def test_indirect_monotone(cap, effect, k):
    a = indirect_loss(cap, EffectSummary(-effect, "*", (0,)))
    assert indirect_loss(cap * k, EffectSummary(-effect, "*", (0,))) >= a
    assert indirect_loss(cap, EffectSummary(-min(0.99, effect * k), "*", (0,))) >= a


def test_totals_examples():
    t = totals([])
    assert (t.direct_comparable_usd, t.indirect_usd, t.total_usd) == (0, 0, 0)
    a = make_report(1, "A", 400, EffectSummary(-0.1, "*", (0,)), None, 10)
    b = make_report(2, "B", 400, EffectSummary(0.0, "ns", (0,)), None, 0)
    t = totals([a, b])
    assert t.total_usd == 50 and t.indirect_share_pct == 80
    row14 = make_report(14, "COMP", 3.3e9, EffectSummary(-0.098, "**", (0,)), None, 80e6)
    c = make_report(3, "C", 1e9, EffectSummary(-0.01, "ns", (0,)), None, 5e6)
    t = totals([row14, c])
    assert t.direct_comparable_usd == Decimal(80_000_000)
    assert t.direct_all_usd == Decimal(85_000_000)


def test_table_formatting():
    rep = make_report(14, "COMP", 3.3e9, EffectSummary(-0.098, "**", (0,)),
                      EffectSummary(4.585, "***", (0,)), 80e6)
    row = impact_table_rows([rep])[0]
    assert row[:6] == ("14", "COMP", "80M", "3.3B", "-9.8 **", "458.5 ***")
    assert row[7].startswith("(80.") and row[7].endswith("%)")
    assert humanize_usd(227e3) == "227k" and humanize_usd(920.8e6) == "920.8M"
    assert humanize_usd(None) == "-"


def test_classifier_feeds_summary():
    assert classify(P_OF["**"]) == "**"
