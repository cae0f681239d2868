"""Market capitalization and indirect economic impact accounting.

Money columns are computed in ``decimal.Decimal``. Sums and products of the
(finite) inputs are exact, so a row's total equals its direct plus indirect
loss exactly; only the percentage share is rounded, to 34 digits.
"""
from __future__ import annotations

import bisect
import decimal
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Sequence

import numpy as np

from govimpact.did import CLASS_RANK, DiDFit, is_significant
from govimpact.errors import MissingRate, MissingSupply
from govimpact.ingest import SupplySnapshot

_CTX = decimal.Context(prec=34)
_EXACT = decimal.Context(prec=decimal.MAX_PREC, traps=[decimal.Inexact])


def _dec(x) -> Decimal:
    if x is None:
        return None
    return x if isinstance(x, Decimal) else Decimal(repr(float(x)))


@dataclass(frozen=True)
class MarketCapInputs:
    supply: float
    anchor_price_eth: float
    ethusd: float

    def __post_init__(self):
        for name in ("supply", "anchor_price_eth", "ethusd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


def market_cap(inputs: MarketCapInputs) -> Decimal:
    return _EXACT.multiply(_EXACT.multiply(_dec(inputs.supply), _dec(inputs.anchor_price_eth)),
                         _dec(inputs.ethusd))


def supply_at(snapshots: Sequence[SupplySnapshot], asset: str, block: int) -> float:
    """Total supply from the latest snapshot at or before ``block``."""
    best = None
    for s in snapshots:
        if s.asset == asset and s.block <= block and (best is None or s.block > best.block):
            best = s
    if best is None:
        raise MissingSupply(f"no supply snapshot for {asset} at or before block {block}")
    return best.total_supply


def rate_at(series: Sequence[tuple[int, float]], timestamp: int) -> float:
    """Last observed ETH/USD rate at or before ``timestamp``; series must be sorted."""
    i = bisect.bisect_right([t for t, _ in series], timestamp)
    if i == 0:
        raise MissingRate(f"no ETH/USD rate at or before {timestamp}")
    return series[i - 1][1]


@dataclass(frozen=True)
class EffectSummary:
    mean_effect: float
    cls: str
    slots: tuple[int, ...]

    @property
    def pct(self) -> float:
        return 100.0 * self.mean_effect


def summarize_effect(fit: DiDFit, window: tuple[int, int],
                     p_threshold: float = 0.1) -> EffectSummary:
    """Average coefficient within the highest significance class in ``window``.

    Without any slot significant at ``p_threshold`` the class is ``ns`` and the
    mean runs over every slot in the window, as a trend indication only.
    """
    lo, hi = window
    in_win = {k: g for k, g in fit.gamma.items() if lo <= k < hi}
    if not in_win:
        return EffectSummary(0.0, "ns", ())
    sig = [g.cls for g in in_win.values() if is_significant(g.cls, p_threshold)]
    if sig:
        top = max(sig, key=CLASS_RANK.__getitem__)
        chosen = sorted(k for k, g in in_win.items() if g.cls == top)
    else:
        top, chosen = "ns", sorted(in_win)
    mean = float(np.mean([in_win[k].estimate for k in chosen]))
    return EffectSummary(mean, top, tuple(chosen))


def indirect_loss(cap, effect: EffectSummary) -> Decimal | None:
    """Capitalization lost to a significant price decline, else ``None``."""
    if effect.cls == "ns" or not effect.mean_effect < 0:
        return None
    return _EXACT.multiply(_dec(cap), abs(_dec(effect.mean_effect)))


@dataclass
class ImpactReport:
    event_id: int
    asset: str
    status: str = "ok"
    reason: str = ""
    direct_loss_usd: Decimal | None = None
    market_cap_usd: Decimal | None = None
    price_impact_pct: float | None = None
    price_class: str | None = None
    volume_impact_pct: float | None = None
    volume_class: str | None = None
    indirect_loss_usd: Decimal | None = None
    indirect_share_pct: Decimal | None = None
    total_loss_usd: Decimal | None = None

    def to_dict(self) -> dict:
        def num(v):
            if v is None:
                return None
            return float(f"{float(v):.15g}")
        return {"event_id": self.event_id, "asset": self.asset, "status": self.status,
                "reason": self.reason, "direct_loss_usd": num(self.direct_loss_usd),
                "market_cap_usd": num(self.market_cap_usd),
                "price_impact_pct": num(self.price_impact_pct), "price_class": self.price_class,
                "volume_impact_pct": num(self.volume_impact_pct),
                "volume_class": self.volume_class,
                "indirect_loss_usd": num(self.indirect_loss_usd),
                "indirect_share_pct": num(self.indirect_share_pct),
                "total_loss_usd": num(self.total_loss_usd)}


def make_report(event_id: int, asset: str, cap, price: EffectSummary | None,
                volume: EffectSummary | None = None, direct_loss=None) -> ImpactReport:
    """Assemble one report row.

    Total and share exist only when there is an indirect loss; with an unknown
    direct loss the total is the indirect loss alone and no share is given.
    """
    rep = ImpactReport(event_id, asset, direct_loss_usd=_dec(direct_loss),
                       market_cap_usd=None if cap is None else _dec(cap))
    if price is not None:
        rep.price_impact_pct, rep.price_class = price.pct, price.cls
        if cap is not None:
            rep.indirect_loss_usd = indirect_loss(cap, price)
    if volume is not None:
        rep.volume_impact_pct, rep.volume_class = volume.pct, volume.cls
    if rep.indirect_loss_usd is not None:
        if rep.direct_loss_usd is None:
            rep.total_loss_usd = rep.indirect_loss_usd
        else:
            rep.total_loss_usd = _EXACT.add(rep.direct_loss_usd, rep.indirect_loss_usd)
            if rep.total_loss_usd > 0:
                rep.indirect_share_pct = _CTX.multiply(
                    _CTX.divide(rep.indirect_loss_usd, rep.total_loss_usd), Decimal(100))
    return rep


@dataclass(frozen=True)
class Totals:
    direct_comparable_usd: Decimal
    direct_all_usd: Decimal
    indirect_usd: Decimal
    total_usd: Decimal
    indirect_share_pct: Decimal | None
    n_indirect: int

    def to_dict(self) -> dict:
        f = lambda v: None if v is None else float(f"{float(v):.15g}")  # noqa: E731
        return {"direct_comparable_usd": f(self.direct_comparable_usd),
                "direct_all_usd": f(self.direct_all_usd), "indirect_usd": f(self.indirect_usd),
                "total_usd": f(self.total_usd), "indirect_share_pct": f(self.indirect_share_pct),
                "n_indirect": self.n_indirect}


def totals(reports: Iterable[ImpactReport]) -> Totals:
    """Column sums; direct losses count towards the total only where a total exists."""
    zero = Decimal(0)
    d_cmp = d_all = ind = tot = zero
    n = 0
    for r in reports:
        if r.direct_loss_usd is not None:
            d_all = _EXACT.add(d_all, r.direct_loss_usd)
        if r.total_loss_usd is not None:
            n += 1
            ind = _EXACT.add(ind, r.indirect_loss_usd)
            tot = _EXACT.add(tot, r.total_loss_usd)
            if r.direct_loss_usd is not None:
                d_cmp = _EXACT.add(d_cmp, r.direct_loss_usd)
    share = _CTX.multiply(_CTX.divide(ind, tot), Decimal(100)) if tot > 0 else zero
    return Totals(d_cmp, d_all, ind, tot, share, n)


def humanize_usd(v) -> str:
    """Compact amounts such as ``227k``, ``920.8M`` or ``3.3B``."""
    if v is None:
        return "-"
    x = float(v)
    for div, suffix in ((1e9, "B"), (1e6, "M"), (1e3, "k")):
        if abs(x) >= div:
            s = f"{x / div:.1f}"
            return (s[:-2] if s.endswith(".0") else s) + suffix
    return f"{x:.0f}"


IMPACT_TABLE_HEADER = ("#", "Governance Asset", "Direct Economic Impact [USD]",
                       "Market Capitalization [USD]", "Price Impact [%]", "Trading Volume Impact [%]",
                       "Indirect Economic Impact [USD]", "Indirect Economic Impact [%]",
                       "Total Economic Impact [USD]")


def impact_table_rows(reports: Sequence[ImpactReport]) -> list[tuple[str, ...]]:
    def impact(pct, cls):
        if pct is None:
            return "-"
        return f"{pct:.1f}" + ("" if cls in (None, "ns") else f" {cls}")
    rows = []
    for r in reports:
        share = "" if r.indirect_share_pct is None else f"({float(r.indirect_share_pct):.1f}%)"
        rows.append((str(r.event_id), r.asset, humanize_usd(r.direct_loss_usd),
                     humanize_usd(r.market_cap_usd), impact(r.price_impact_pct, r.price_class),
                     impact(r.volume_impact_pct, r.volume_class),
                     humanize_usd(r.indirect_loss_usd), share, humanize_usd(r.total_loss_usd)))
    return rows
