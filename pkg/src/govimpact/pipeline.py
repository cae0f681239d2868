"""End-to-end orchestration: raw logs to impact report.

``run_all`` decodes every pool, cleans and vets each asset's trades, then
analyses events independently (optionally in worker processes) and writes
the report, the impact table, plot-data files and a manifest.
Everything written is a pure function of the config and input files.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import stats

from govimpact import __version__
from govimpact import io as gio
from govimpact.aggregate import (DAY, DEFAULT_DT, aggregate_prices, aggregate_volumes, cumulate,
                                 standardize)
from govimpact.cleaning import OutlierReport, clean_trades, maturity_check
from govimpact.counterfactual import (CorrelationResult, CounterfactualSet, SweepRow,
                                      correlate_universe, rank_candidates, sweep_thresholds)
from govimpact.did import DiDFit, Gamma, PanelSpec, build_panel, fit_dynamic_did
from govimpact.errors import (AnalysisError, CannotNormalize, DegenerateSeries, EmptySeries,
                              EventAborted, InputError, MissingInput, NoCounterfactuals,
                              SchemaError)
from govimpact.impact import (EffectSummary, ImpactReport, MarketCapInputs, make_report,
                              market_cap, rate_at, summarize_effect, supply_at, impact_table_rows,
                              totals, IMPACT_TABLE_HEADER)
from govimpact.ingest import CrimeEvent, PoolMeta, TradePoint, build_trade_series

log = logging.getLogger(__name__)

CONFIG_ENV = "GOVIMPACT_CONFIG"
KIND_SERIES = {"price": "price", "volume": "cumulative_volume"}
# analysis failures that are expected outcomes for an event, not errors
PRECONDITION_ERRORS = (EventAborted, NoCounterfactuals, DegenerateSeries, EmptySeries,
                       CannotNormalize)
SWEEP_GRID = tuple(round(0.05 * i, 2) for i in range(20))
_EXECUTION_ONLY = ("workers", "out")


def parse_duration(text: str | int) -> int:
    """``"6h"``, ``"30m"``, ``"1d"``, ``"90s"`` or bare seconds."""
    if isinstance(text, int):
        return text
    m = re.fullmatch(r"\s*(\d+)\s*([smhd]?)\s*", str(text))
    if not m:
        raise ValueError(f"bad duration {text!r}")
    return int(m.group(1)) * {"": 1, "s": 1, "m": 60, "h": 3600, "d": DAY}[m.group(2)]


def _pair(text: str) -> tuple[float, float]:
    a, b = (float(x) for x in str(text).split(","))
    return (int(a) if a.is_integer() else a, int(b) if b.is_integer() else b)


@dataclass
class PipelineConfig:
    dt: int = DEFAULT_DT
    long_window: tuple[float, float] = (-100, -10)
    short_window: tuple[float, float] = (-10, -1)
    event_window: tuple[float, float] = (-1, 2)
    anchor: float = -1
    t_r: float = 0.4
    c: int = 10
    min_overlap: int = 30
    p_threshold: float = 0.1
    se_method: str = "cr1_exchangeable"
    price_orientation: str = "base_per_asset"
    exclude_treated: bool = False
    clean_window: int = 1000
    clean_threshold: float = 3.5
    block_radius: int = 5
    local_window: int = 100
    min_span_blocks: int = 1_000_000
    max_mean_gap_blocks: int = 6_000
    seed: int = 0
    logs: str = ""
    pools: str = ""
    supply: str = ""
    ethusd: str = ""
    events: str = ""
    out: str = "out"
    workers: int = 1

    KEYS = {
        "dt": ("dt", parse_duration), "windows.long": ("long_window", _pair),
        "windows.short": ("short_window", _pair), "windows.event": ("event_window", _pair),
        "windows.anchor": ("anchor", float), "selection.t_r": ("t_r", float),
        "selection.c": ("c", int), "selection.min_overlap": ("min_overlap", int),
        "selection.exclude_treated": ("exclude_treated", lambda s: gio._bool(str(s))),
        "did.p_threshold": ("p_threshold", float), "did.se_method": ("se_method", str),
        "ingest.price_orientation": ("price_orientation", str),
        "cleaning.window": ("clean_window", int), "cleaning.threshold": ("clean_threshold", float),
        "cleaning.block_radius": ("block_radius", int),
        "cleaning.local_window": ("local_window", int),
        "maturity.min_span_blocks": ("min_span_blocks", int),
        "maturity.max_mean_gap_blocks": ("max_mean_gap_blocks", int),
        "seed": ("seed", int), "paths.logs": ("logs", str), "paths.pools": ("pools", str),
        "paths.supply": ("supply", str), "paths.ethusd": ("ethusd", str),
        "paths.events": ("events", str), "paths.out": ("out", str), "workers": ("workers", int),
    }

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        (l0, l1), (s0, s1), (e0, e1) = self.long_window, self.short_window, self.event_window
        if not (l0 < l1 <= s0 < s1 <= e0 < e1):
            raise ValueError("windows must be ordered and non-overlapping: long < short < event")
        if self.anchor != e0:
            raise ValueError("anchor must coincide with the start of the event window")
        if not 0 < self.p_threshold < 1:
            raise ValueError("p_threshold must lie in (0, 1)")

    @property
    def analysis_span(self) -> tuple[float, float]:
        return self.short_window[0], self.event_window[1]

    def panel_spec(self, event_id: int = 0, kind: str = "price") -> PanelSpec:
        return PanelSpec(event_id, kind, self.dt, self.analysis_span, self.event_window,
                         self.short_window, self.anchor)

    def slot(self, days: float) -> int:
        return int(days * DAY // self.dt)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "PipelineConfig":
        values = dataclasses.asdict(self)
        for key, raw in overrides.items():
            if raw is None:
                continue
            if key in self.KEYS:
                attr, conv = self.KEYS[key]
                values[attr] = conv(raw) if isinstance(raw, str) else raw
            elif key in values:
                values[key] = raw
            else:
                raise KeyError(f"unknown config key {key!r}")
        return PipelineConfig(**values)

    def digest(self) -> str:
        d = dataclasses.asdict(self)
        for k in _EXECUTION_ONLY:
            d.pop(k)
        for k in ("logs", "pools", "supply", "ethusd", "events"):
            d[k] = Path(d[k]).name
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path: str | Path | None = None,
                overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """Read a flat ``dotted.key = value`` file; relative paths resolve against it."""
    path = path or os.environ.get(CONFIG_ENV)
    values: dict[str, str] = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise MissingInput(p, "config file")
        for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaError(p, lineno, "expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in PipelineConfig.KEYS:
                raise SchemaError(p, lineno, f"unknown config key {key!r}")
            if key.startswith("paths.") and val and not Path(val).is_absolute():
                val = str(p.parent / val)
            values[key] = val
    try:
        return PipelineConfig().with_overrides({**values, **(overrides or {})})
    except (ValueError, KeyError) as exc:
        raise InputError(f"invalid configuration: {exc}") from None


# ---------------------------------------------------------------- stage helpers

def decode_pools(logs, pools: Sequence[PoolMeta], orientation: str = "base_per_asset"
                 ) -> tuple[dict[str, list[TradePoint]], dict[str, dict]]:
    by_pool: dict[str, list] = {}
    for lg in logs:
        by_pool.setdefault(lg.pool_address.lower(), []).append(lg)
    trades, counts = {}, {}
    for meta in sorted(pools, key=lambda m: m.asset_symbol):
        pool_logs = sorted(by_pool.get(meta.pool_address, []), key=lambda lg: lg.key)
        pts, st = build_trade_series(pool_logs, meta, orientation)
        trades[meta.asset_symbol] = pts
        counts[meta.asset_symbol] = dataclasses.asdict(st)
    return trades, counts


def clean_all(trades: Mapping[str, Sequence[TradePoint]], cfg: PipelineConfig
              ) -> tuple[dict[str, list[TradePoint]], dict[str, OutlierReport]]:
    cleaned, reports = {}, {}
    for asset in sorted(trades):
        cleaned[asset], reports[asset] = clean_trades(
            trades[asset], cfg.clean_window, cfg.clean_threshold, cfg.block_radius,
            cfg.local_window)
    return cleaned, reports


def _has_trade(points: Sequence[TradePoint], start: int, end: int) -> bool:
    return any(start <= t.timestamp < end for t in points)


@dataclass
class KindResult:
    kind: str
    status: str = "ok"
    reason: str = ""
    correlations: list[CorrelationResult] = field(default_factory=list)
    counterfactuals: CounterfactualSet | None = None
    fit: DiDFit | None = None
    summary: EffectSummary | None = None


@dataclass
class EventResult:
    event: CrimeEvent
    kinds: dict[str, KindResult] = field(default_factory=dict)
    anchor_price_eth: float | None = None
    anchor_block: int | None = None
    anchor_end: int | None = None
    error_kind: str = ""  # "" | "precondition" | "analysis"

    @property
    def status(self) -> str:
        k = self.kinds.get("price")
        return "ok" if k is not None and k.status == "ok" else "aborted"

    @property
    def reason(self) -> str:
        return "; ".join(f"{k}: {r.reason}" for k, r in sorted(self.kinds.items()) if r.reason)


def event_series(points: Sequence[TradePoint], kind: str, tau: int, cfg: PipelineConfig):
    """Series for one asset on the event grid (slot 0 starts at ``tau``).

    Returns ``(reference, analysis)``: the long-window series used for
    matching and the analysis-span series used in the regression.
    """
    start = tau + int(cfg.long_window[0] * DAY)
    end = tau + int(cfg.analysis_span[1] * DAY)
    span_start = tau + int(cfg.analysis_span[0] * DAY)
    if kind == "price":
        s = aggregate_prices(points, cfg.dt, start, end, origin=tau)
        return s, s
    v = aggregate_volumes(points, cfg.dt, start, end, origin=tau)
    ref = cumulate(v, from_slot=cfg.slot(cfg.long_window[0]))
    ana = cumulate(v, from_slot=(span_start - tau) // cfg.dt)
    return ref, ana


def _eligible(points: Sequence[TradePoint], tau: int, cfg: PipelineConfig) -> str:
    """Empty string when an asset may serve in an event, otherwise the reason."""
    if not maturity_check(points, cfg.min_span_blocks, cfg.max_mean_gap_blocks):
        return "immature series"
    s0, s1 = (tau + int(d * DAY) for d in cfg.short_window)
    e0, e1 = (tau + int(d * DAY) for d in cfg.event_window)
    if not _has_trade(points, s0, s1):
        return "no trades in the short reference window"
    if not _has_trade(points, e0, e1):
        return "no trades in the event window"
    return ""


def _treated_elsewhere(asset: str, tau: int, events: Sequence[CrimeEvent], eid: int,
                       cfg: PipelineConfig) -> bool:
    lo, hi = (tau + int(d * DAY) for d in (cfg.long_window[0], cfg.event_window[1]))
    return any(e.asset == asset and e.id != eid and lo <= e.tau < hi for e in events)


def analyze_event(event: CrimeEvent, trades: Mapping[str, Sequence[TradePoint]],
                  cfg: PipelineConfig, events: Sequence[CrimeEvent] = (),
                  kinds: Sequence[str] = ("price", "volume")) -> EventResult:
    res = EventResult(event)
    tau = event.tau
    target = trades.get(event.asset)

    def abort_all(reason):
        for k in kinds:
            res.kinds[k] = KindResult(k, "aborted", reason)
        res.error_kind = "precondition"
        return res

    if target is None:
        return abort_all(f"asset {event.asset} has no pool")
    if not maturity_check(target, cfg.min_span_blocks, cfg.max_mean_gap_blocks):
        return abort_all("treated asset series is immature")
    ref_lo = tau + int(cfg.long_window[0] * DAY)
    if not _has_trade(target, tau, tau + DAY):
        return abort_all("treated asset has no trades on the announcement date")
    if not _has_trade(target, ref_lo, tau + int(cfg.short_window[1] * DAY)):
        return abort_all("treated asset has no trades in the reference window")

    candidates = {}
    for asset in sorted(trades):
        if asset == event.asset or _eligible(trades[asset], tau, cfg):
            continue
        if cfg.exclude_treated and _treated_elsewhere(asset, tau, events, event.id, cfg):
            continue
        candidates[asset] = trades[asset]

    long_slots = (cfg.slot(cfg.long_window[0]), cfg.slot(cfg.long_window[1]))
    for kind in kinds:
        kr = KindResult(kind)
        res.kinds[kind] = kr
        try:
            t_ref, t_ana = event_series(target, kind, tau, cfg)
            t_z = standardize(t_ref, long_slots)
            universe, analysis = {}, {}
            for asset, pts in candidates.items():
                try:
                    ref, ana = event_series(pts, kind, tau, cfg)
                    universe[asset] = standardize(ref, long_slots)
                    analysis[asset] = ana
                except (EmptySeries, DegenerateSeries):
                    continue
            corrs, _ = correlate_universe(t_z, universe, long_slots, cfg.min_overlap)
            kr.correlations = corrs
            members, sizes = rank_candidates(corrs, cfg.t_r, cfg.c)
            if not members:
                raise NoCounterfactuals(f"no candidate correlates above t_r={cfg.t_r}")
            kr.counterfactuals = CounterfactualSet(event.id, kind, members, sizes)
            spec = cfg.panel_spec(event.id, KIND_SERIES[kind])
            panel = build_panel(t_ana, [analysis[m.candidate] for m in members], spec)
            kr.fit = fit_dynamic_did(panel, spec, cfg.se_method)
            kr.summary = summarize_effect(kr.fit, spec.event_slots, cfg.p_threshold)
            if kind == "price":
                res.anchor_price_eth = t_ana.value_at(spec.anchor_slot)
                res.anchor_end = tau + (spec.anchor_slot + 1) * cfg.dt
                before = [t.block for t in target if t.timestamp < res.anchor_end]
                res.anchor_block = max(before) if before else None
        except PRECONDITION_ERRORS as exc:
            kr.status, kr.reason = "aborted", f"{type(exc).__name__}: {exc}"
            res.error_kind = res.error_kind or "precondition"
        except AnalysisError as exc:
            kr.status, kr.reason = "failed", f"{type(exc).__name__}: {exc}"
            res.error_kind = "analysis"
    return res


def compute_impact(event: CrimeEvent, price: EffectSummary | None,
                   volume: EffectSummary | None, anchor_price_eth, anchor_block, anchor_end,
                   supply, ethusd, reason: str = "") -> ImpactReport:
    """Report row for an analysed event; a missing cap leaves indirect loss unset."""
    cap = None
    try:
        cap = market_cap(MarketCapInputs(supply_at(supply, event.asset, anchor_block),
                                         anchor_price_eth, rate_at(ethusd, anchor_end)))
    except (AnalysisError, ValueError, TypeError) as exc:
        reason = "; ".join(filter(None, [reason, f"market cap: {exc}"]))
    rep = make_report(event.id, event.asset, cap, price, volume, event.direct_loss_usd)
    rep.reason = reason
    return rep


def impact_report(res: EventResult, supply, ethusd) -> ImpactReport:
    ev = res.event
    if res.status != "ok":
        rep = make_report(ev.id, ev.asset, None, None, None, ev.direct_loss_usd)
        rep.status, rep.reason = "aborted", res.reason
        return rep
    volume = res.kinds.get("volume")
    return compute_impact(ev, res.kinds["price"].summary,
                          volume.summary if volume is not None else None,
                          res.anchor_price_eth, res.anchor_block, res.anchor_end, supply, ethusd,
                          res.reason)


# ---------------------------------------------------------------- plot data

COEF_HEADER = ("slot", "hours", "estimate", "se", "t_stat", "p_value", "class", "lo90", "hi90",
               "significant")


def coefficient_rows(fit: DiDFit, dt: int, p_threshold: float = 0.1) -> list[tuple]:
    q = stats.t.ppf(0.95, fit.dof)
    rows = []
    for k, g in sorted(fit.gamma.items()):
        rows.append((k, k * dt / 3600, g.estimate, g.se, g.t_stat, g.p_value, g.cls,
                     g.estimate - q * g.se, g.estimate + q * g.se, g.p_value < p_threshold))
    return rows


def write_coefficients(path, fit: DiDFit, dt: int, p_threshold: float = 0.1) -> None:
    gio.write_table(path, COEF_HEADER, coefficient_rows(fit, dt, p_threshold))


def write_heatmap(path, fits: Sequence[DiDFit], dt: int) -> None:
    rows = [(f.event_id, f.treated, k, k * dt / 3600, g.estimate, g.cls)
            for f in sorted(fits, key=lambda f: f.event_id) for k, g in sorted(f.gamma.items())]
    gio.write_table(path, ("event_id", "asset", "slot", "hours", "estimate", "class"), rows)


def write_correlations(path, cf: CounterfactualSet) -> None:
    gio.write_table(path, ("rank", "member", "r", "overlap_points"),
                    ((i + 1, m.candidate, m.r, m.overlap_points)
                     for i, m in enumerate(cf.members)))


def write_sweep(path, rows: Sequence[SweepRow]) -> None:
    gio.write_table(path, ("t_r", "min_count", "mean_count", "mean_corr"),
                    ((r.t_r, r.min_count, r.mean_count, r.mean_corr) for r in rows))


def fit_to_dict(fit: DiDFit, extra: Mapping[str, Any] | None = None) -> dict:
    d = {"event_id": fit.event_id, "kind": fit.kind, "treated": fit.treated,
         "anchor_slot": fit.anchor_slot, "dof": fit.dof, "n_clusters": fit.n_clusters,
         "nobs": fit.nobs, "se_method": fit.se_method, "controls": fit.controls,
         "alpha0": float(gio.fmt(fit.alpha0)),
         "gamma": [{"slot": k, "estimate": float(gio.fmt(g.estimate)), "se": float(gio.fmt(g.se)),
                    "t_stat": float(gio.fmt(g.t_stat)), "p_value": float(gio.fmt(g.p_value)),
                    "class": g.cls} for k, g in sorted(fit.gamma.items())]}
    d.update(extra or {})
    return d


def fit_from_dict(d: Mapping[str, Any]) -> DiDFit:
    gamma = {int(g["slot"]): Gamma(g["estimate"], g["se"], g["t_stat"], g["p_value"], g["class"])
             for g in d["gamma"]}
    return DiDFit(d["event_id"], d["kind"], d["treated"], gamma, d.get("alpha0", 0.0), {}, {},
                  np.array([]), d["n_clusters"], d["dof"], d["anchor_slot"], d["se_method"],
                  d["nobs"], list(d.get("controls", [])))


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                          encoding="utf-8")


# ---------------------------------------------------------------- run-all

_WORKER_STATE: dict[str, Any] = {}


def _init_worker(trades, cfg, events):
    _WORKER_STATE.update(trades=trades, cfg=cfg, events=events)


def _worker(event: CrimeEvent) -> EventResult:
    s = _WORKER_STATE
    return analyze_event(event, s["trades"], s["cfg"], s["events"])


@dataclass
class RunResult:
    reports: list[ImpactReport]
    manifest: dict
    failed_events: list[int]
    out_dir: Path


def run_all(cfg: PipelineConfig) -> RunResult:
    for name in ("logs", "pools", "supply", "ethusd", "events"):
        p = getattr(cfg, name)
        if not p or not Path(p).is_file():
            raise MissingInput(p or f"<paths.{name} unset>", f"{name} file")
    logs = gio.read_raw_logs(cfg.logs)
    pools = gio.read_pools(cfg.pools)
    supply = gio.read_supply(cfg.supply)
    ethusd = gio.read_ethusd(cfg.ethusd)
    events = sorted(gio.read_events(cfg.events), key=lambda e: e.id)

    trades, decode_counts = decode_pools(logs, pools, cfg.price_orientation)
    cleaned, cleaning = clean_all(trades, cfg)

    if cfg.workers > 1 and len(events) > 1:
        with ProcessPoolExecutor(cfg.workers, initializer=_init_worker,
                                 initargs=(cleaned, cfg, events)) as ex:
            results = list(ex.map(_worker, events))
    else:
        results = [analyze_event(e, cleaned, cfg, events) for e in events]
    results.sort(key=lambda r: r.event.id)

    out = Path(cfg.out)
    (out / "fits").mkdir(parents=True, exist_ok=True)
    (out / "counterfactuals").mkdir(exist_ok=True)
    reports = [impact_report(r, supply, ethusd) for r in results]

    fits_by_kind: dict[str, list[DiDFit]] = {"price": [], "volume": []}
    for r in results:
        for kind, kr in sorted(r.kinds.items()):
            stem = f"event_{r.event.id}_{kind}"
            if kr.counterfactuals is not None:
                write_correlations(out / "counterfactuals" / f"{stem}.csv", kr.counterfactuals)
            if kr.fit is not None:
                fits_by_kind[kind].append(kr.fit)
                write_coefficients(out / "fits" / f"{stem}_coefficients.csv", kr.fit, cfg.dt,
                                   cfg.p_threshold)
                extra = {"event_window": list(cfg.panel_spec().event_slots), "dt": cfg.dt,
                         "p_threshold": cfg.p_threshold}
                if kind == "price":
                    extra.update(anchor_price_eth=r.anchor_price_eth, anchor_block=r.anchor_block,
                                 anchor_end=r.anchor_end)
                dump_json(out / "fits" / f"{stem}_fit.json", fit_to_dict(kr.fit, extra))
    for kind, fits in fits_by_kind.items():
        write_heatmap(out / f"heatmap_{kind}.csv", fits, cfg.dt)
    sweep = sweep_thresholds({r.event.id: r.kinds["price"].correlations for r in results
                              if r.kinds["price"].correlations}, SWEEP_GRID, cfg.c)
    write_sweep(out / "sweep.csv", sweep)

    tot = totals(reports)
    dump_json(out / "report.json", {"events": [r.to_dict() for r in reports],
                                    "totals": tot.to_dict()})
    gio.write_table(out / "impact_table.csv", IMPACT_TABLE_HEADER, impact_table_rows(reports))
    dump_json(out / "cleaning.json", {a: rep.to_dict() for a, rep in sorted(cleaning.items())})

    failed = [r.event.id for r in results if r.error_kind == "analysis"]
    manifest = build_manifest(cfg, logs, trades, cleaned, results, out, decode_counts)
    dump_json(out / "manifest.json", manifest)
    return RunResult(reports, manifest, failed, out)


def build_manifest(cfg, logs, trades, cleaned, results, out: Path, decode_counts) -> dict:
    inputs = {name: {"file": Path(getattr(cfg, name)).name,
                     "sha256": gio.file_digest(getattr(cfg, name))}
              for name in ("logs", "pools", "supply", "ethusd", "events")}
    outputs = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            outputs[p.relative_to(out).as_posix()] = gio.file_digest(p)
    stamps = [lg.block_timestamp for lg in logs]
    return {
        "tool": "govimpact", "version": __version__, "config_sha256": cfg.digest(),
        "inputs": inputs, "outputs": outputs,
        "counts": {"raw_logs": len(logs),
                   "trades": {a: len(v) for a, v in sorted(trades.items())},
                   "cleaned": {a: len(v) for a, v in sorted(cleaned.items())},
                   "decode": decode_counts,
                   "events": len(results),
                   "events_ok": sum(r.status == "ok" for r in results),
                   "events_aborted": sum(r.status != "ok" for r in results)},
        "data_time_range": [min(stamps), max(stamps)] if stamps else None,
        "events": [{"id": r.event.id, "asset": r.event.asset, "status": r.status,
                    "reason": r.reason} for r in results],
    }
