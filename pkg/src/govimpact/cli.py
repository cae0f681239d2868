"""Command-line entry point: ``govimpact <stage> ...``.

Exit status is 0 on success, 2 for invalid input (schema, missing file,
bad configuration) and 3 when an analysis stage fails.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from govimpact import __version__
from govimpact import io as gio
from govimpact import pipeline as pl
from govimpact.aggregate import (aggregate_prices, aggregate_volumes, cumulate)
from govimpact.counterfactual import sweep_thresholds
from govimpact.errors import AnalysisError, EventAborted, GovImpactError, InputError, SpecError
from govimpact.impact import IMPACT_TABLE_HEADER, summarize_effect, impact_table_rows, totals
from govimpact.matchlink import DEFAULT_KEYWORDS, Token, load_keywords, match_actors
from govimpact.synth import SynthSpec, generate, load_spec, write_series

log = logging.getLogger("govimpact")

EXIT_OK, EXIT_INPUT, EXIT_ANALYSIS = 0, 2, 3


def _timestamp(text: str) -> int:
    """Epoch seconds, or an ISO date / datetime taken as UTC."""
    try:
        return int(text)
    except ValueError:
        pass
    d = dt.datetime.fromisoformat(text)
    if d.tzinfo is None:
        d = d.replace(tzinfo=dt.timezone.utc)
    return int(d.timestamp())


def _config(args, **overrides) -> pl.PipelineConfig:
    return pl.load_config(getattr(args, "config", None), overrides)


def _trades_by_asset(path) -> dict[str, list]:
    out: dict[str, list] = {}
    for t in gio.read_trades(path):
        out.setdefault(t.asset, []).append(t)
    for pts in out.values():
        pts.sort(key=lambda t: t.key)
    return out


def _event(events, eid: int):
    for e in events:
        if e.id == eid:
            return e
    raise InputError(f"event {eid} not found")


def cmd_ingest(args) -> int:
    cfg = _config(args, price_orientation=args.orientation)
    trades, counts = pl.decode_pools(gio.read_raw_logs(args.logs), gio.read_pools(args.pools),
                                     cfg.price_orientation)
    gio.write_trades(args.out, (t for a in sorted(trades) for t in trades[a]))
    for asset, c in sorted(counts.items()):
        print(f"{asset}: {c['points']} trade points, {c['orphans']} orphans, "
              f"{c['degenerate']} degenerate, {c['anomalous']} anomalous")
    return EXIT_OK


def cmd_clean(args) -> int:
    cfg = _config(args, clean_window=args.window, clean_threshold=args.threshold)
    cleaned, reports = pl.clean_all(_trades_by_asset(args.trades), cfg)
    gio.write_trades(args.out, (t for a in sorted(cleaned) for t in cleaned[a]))
    if args.report:
        pl.dump_json(args.report, {a: r.to_dict() for a, r in sorted(reports.items())})
    for a, r in sorted(reports.items()):
        print(f"{a}: removed {r.removed_count} of {len(r.flagged_global)} flagged")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    cfg = _config(args, dt=args.dt)
    start, end = _timestamp(args.start), _timestamp(args.end)
    origin = _timestamp(args.origin) if args.origin else None
    rows = []
    for asset, pts in sorted(_trades_by_asset(args.trades).items()):
        if args.asset and asset not in args.asset:
            continue
        if args.kind == "price":
            s = aggregate_prices(pts, cfg.dt, start, end, origin=origin)
        else:
            s = aggregate_volumes(pts, cfg.dt, start, end, origin=origin)
            if args.kind == "cumulative_volume":
                s = cumulate(s)
        rows.extend((s.asset, s.kind, s.dt, s.origin, k, v) for k, v in s.items())
    gio.write_table(args.out, ("asset", "kind", "dt", "origin", "slot", "value"), rows)
    return EXIT_OK


def cmd_match(args) -> int:
    actors = [r["actor"] for r in gio._read_table(args.actors, ("actor",), dict)]
    tokens = [Token(r["token_id"], r["token_name"])
              for r in gio._read_table(args.tokens, ("token_id", "token_name"), dict)]
    kw = load_keywords(args.keywords) if args.keywords else DEFAULT_KEYWORDS
    rows = match_actors(actors, tokens, kw)
    if not args.all:
        rows = [m for m in rows if m.matched]
    gio.write_table(args.out, ("actor", "token_id", "token_name", "score_id", "score_name",
                               "matched", "rule"),
                    ((m.actor, m.token_id, m.token_name, m.score_id, m.score_name, m.matched,
                      m.rule) for m in rows))
    print(f"{sum(m.matched for m in rows)} matched pairs written to {args.out}")
    return EXIT_OK


def _analysis_overrides(args) -> dict:
    return {"t_r": getattr(args, "t_r", None), "c": getattr(args, "c", None),
            "dt": getattr(args, "dt", None), "se_method": getattr(args, "se_method", None),
            "p_threshold": getattr(args, "p_threshold", None),
            "exclude_treated": True if getattr(args, "exclude_treated", False) else None}


def _analyse_one(args, kinds):
    cfg = _config(args, **_analysis_overrides(args))
    events = gio.read_events(args.events)
    event = _event(events, args.event)
    res = pl.analyze_event(event, _trades_by_asset(args.trades), cfg, events, kinds)
    return cfg, res


def _kind_failure(res, kind) -> int:
    kr = res.kinds[kind]
    if kr.status != "ok":
        print(f"event {res.event.id} ({kind}) {kr.status}: {kr.reason}", file=sys.stderr)
        return EXIT_ANALYSIS
    return EXIT_OK


def cmd_counterfactuals(args) -> int:
    cfg, res = _analyse_one(args, (args.kind,))
    kr = res.kinds[args.kind]
    if kr.counterfactuals is None:
        return _kind_failure(res, args.kind)
    pl.write_correlations(args.out, kr.counterfactuals)
    s1, s2, s3 = kr.counterfactuals.stage_sizes
    print(f"event {res.event.id} ({args.kind}): {len(kr.correlations)} candidates, "
          f"stages {s1} -> {s2} -> {s3}: {', '.join(kr.counterfactuals.symbols)}")
    return EXIT_OK


def cmd_did(args) -> int:
    cfg, res = _analyse_one(args, (args.kind,))
    kr = res.kinds[args.kind]
    if kr.fit is None:
        return _kind_failure(res, args.kind)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"event_{res.event.id}_{args.kind}"
    pl.write_coefficients(out / f"{stem}_coefficients.csv", kr.fit, cfg.dt, cfg.p_threshold)
    extra = {"event_window": list(cfg.panel_spec().event_slots), "dt": cfg.dt,
             "p_threshold": cfg.p_threshold}
    if args.kind == "price":
        extra.update(anchor_price_eth=res.anchor_price_eth, anchor_block=res.anchor_block,
                     anchor_end=res.anchor_end)
    pl.dump_json(out / f"{stem}_fit.json", pl.fit_to_dict(kr.fit, extra))
    s = kr.summary
    print(f"event {res.event.id} ({args.kind}): mean effect {s.pct:.2f}% [{s.cls}] "
          f"over {len(s.slots)} slots, {kr.fit.n_clusters} clusters")
    return EXIT_OK


def cmd_impact(args) -> int:
    cfg = _config(args, supply=args.supply, ethusd=args.ethusd)
    events = sorted(gio.read_events(args.events), key=lambda e: e.id)
    for name in ("supply", "ethusd"):
        if not getattr(cfg, name):
            raise InputError(f"no {name} file given (--{name} or paths.{name})")
    supply, ethusd = gio.read_supply(cfg.supply), gio.read_ethusd(cfg.ethusd)
    fits = Path(args.fits)
    reports = []
    for ev in events:
        summaries, meta = {}, {}
        for kind in ("price", "volume"):
            p = fits / f"event_{ev.id}_{kind}_fit.json"
            if p.is_file():
                d = json.loads(p.read_text(encoding="utf-8"))
                meta[kind] = d
                summaries[kind] = summarize_effect(pl.fit_from_dict(d), tuple(d["event_window"]),
                                                   d["p_threshold"])
        if "price" not in summaries:
            rep = pl.make_report(ev.id, ev.asset, None, None, None, ev.direct_loss_usd)
            rep.status, rep.reason = "aborted", "no price fit"
        else:
            m = meta["price"]
            rep = pl.compute_impact(ev, summaries["price"], summaries.get("volume"),
                                    m["anchor_price_eth"], m["anchor_block"], m["anchor_end"],
                                    supply, ethusd)
        reports.append(rep)
    pl.dump_json(args.out, {"events": [r.to_dict() for r in reports],
                            "totals": totals(reports).to_dict()})
    if args.table:
        gio.write_table(args.table, IMPACT_TABLE_HEADER, impact_table_rows(reports))
    _print_table(reports)
    return EXIT_OK


def _print_table(reports) -> None:
    rows = [IMPACT_TABLE_HEADER] + impact_table_rows(reports)
    widths = [max(len(r[i]) for r in rows) for i in range(len(IMPACT_TABLE_HEADER))]
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())


def cmd_sweep(args) -> int:
    cfg = _config(args, **_analysis_overrides(args))
    events = sorted(gio.read_events(args.events), key=lambda e: e.id)
    trades = _trades_by_asset(args.trades)
    grid = [float(x) for x in args.grid.split(",")] if args.grid else list(pl.SWEEP_GRID)
    corrs = {}
    for ev in events:
        kr = pl.analyze_event(ev, trades, cfg, events, (args.kind,)).kinds[args.kind]
        if kr.correlations:
            corrs[ev.id] = kr.correlations
    if not corrs:
        raise EventAborted("no event produced candidate correlations")
    rows = sweep_thresholds(corrs, grid, cfg.c)
    pl.write_sweep(args.out, rows)
    for r in rows:
        print(f"t_r={r.t_r:.2f} min={r.min_count} mean={r.mean_count:.2f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.fixture:
        from govimpact.fixture import build_fixture
        paths = build_fixture(args.out)
        print(f"fixture written; run with: govimpact run-all --config {paths['config']}")
        return EXIT_OK
    try:
        spec = load_spec(args.spec) if args.spec else SynthSpec()
        if args.seed is not None:
            spec = SynthSpec.from_dict({**spec.to_dict(), "seed": args.seed})
        series = generate(spec)
    except (TypeError, ValueError) as exc:
        raise SpecError(str(exc)) from None
    write_series(args.out, series)
    print(f"{len(series)} series written to {args.out}")
    return EXIT_OK


def cmd_run_all(args) -> int:
    overrides = {**_analysis_overrides(args), "out": args.out, "workers": args.workers}
    cfg = _config(args, **overrides)
    res = pl.run_all(cfg)
    _print_table(res.reports)
    for r in res.reports:
        if r.status != "ok":
            print(f"event {r.event_id} aborted: {r.reason}", file=sys.stderr)
    if res.failed_events:
        print(f"analysis failed for events {res.failed_events}", file=sys.stderr)
        return EXIT_ANALYSIS
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="govimpact", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help=f"config file (default: ${pl.CONFIG_ENV})")
        sp.set_defaults(func=fn)
        return sp

    def analysis_flags(sp, event=True):
        sp.add_argument("--trades", required=True, help="cleaned trades CSV")
        sp.add_argument("--events", required=True)
        if event:
            sp.add_argument("--event", type=int, required=True)
        sp.add_argument("--kind", choices=("price", "volume"), default="price")
        sp.add_argument("--t-r", type=float)
        sp.add_argument("--c", type=int)
        sp.add_argument("--dt", type=pl.parse_duration)
        sp.add_argument("--exclude-treated", action="store_true")

    sp = cmd("ingest", cmd_ingest, "decode raw logs into trade points")
    sp.add_argument("--logs", required=True)
    sp.add_argument("--pools", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--orientation", choices=("base_per_asset", "literal"))

    sp = cmd("clean", cmd_clean, "remove confirmed price outliers")
    sp.add_argument("--in", "--trades", dest="trades", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")
    sp.add_argument("--window", type=int)
    sp.add_argument("--threshold", type=float)

    sp = cmd("aggregate", cmd_aggregate, "bucket trades into fixed intervals")
    sp.add_argument("--in", "--trades", dest="trades", required=True)
    sp.add_argument("--kind", choices=("price", "volume", "cumulative_volume"), default="price")
    sp.add_argument("--dt", type=pl.parse_duration)
    sp.add_argument("--from", "--start", dest="start", required=True,
                    help="epoch seconds or ISO date")
    sp.add_argument("--to", "--end", dest="end", required=True)
    sp.add_argument("--origin")
    sp.add_argument("--asset", action="append")
    sp.add_argument("--out", required=True)

    sp = cmd("match", cmd_match, "link actor names to tokens")
    sp.add_argument("--actors", required=True, help="CSV with an 'actor' column")
    sp.add_argument("--tokens", required=True, help="CSV with token_id, token_name")
    sp.add_argument("--keywords")
    sp.add_argument("--all", action="store_true", help="also write unmatched pairs")
    sp.add_argument("--out", required=True)

    sp = cmd("counterfactuals", cmd_counterfactuals, "select control assets for an event")
    analysis_flags(sp)
    sp.add_argument("--out", required=True)

    sp = cmd("did", cmd_did, "fit the dynamic difference-in-differences model")
    analysis_flags(sp)
    sp.add_argument("--se-method", choices=("cr1_exchangeable", "cr1"))
    sp.add_argument("--p-threshold", type=float)
    sp.add_argument("--out-dir", required=True)

    sp = cmd("impact", cmd_impact, "market cap and economic impact table")
    sp.add_argument("--fits", required=True, help="directory written by 'did'")
    sp.add_argument("--events", required=True)
    sp.add_argument("--supply", help="default: paths.supply from the config")
    sp.add_argument("--ethusd", help="default: paths.ethusd from the config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--table")

    sp = cmd("sweep", cmd_sweep, "counterfactual counts across t_r thresholds")
    analysis_flags(sp, event=False)
    sp.add_argument("--grid", help="comma-separated thresholds")
    sp.add_argument("--out", required=True)

    sp = cmd("synth", cmd_synth, "generate synthetic series or the bundled fixture")
    sp.add_argument("--spec", help="JSON synthetic spec")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--fixture", action="store_true")
    sp.add_argument("--out", required=True)

    sp = cmd("run-all", cmd_run_all, "full pipeline from raw logs to report")
    sp.add_argument("--out")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--t-r", type=float)
    sp.add_argument("--c", type=int)
    sp.add_argument("--dt", type=pl.parse_duration)
    sp.add_argument("--se-method", choices=("cr1_exchangeable", "cr1"))
    sp.add_argument("--p-threshold", type=float)
    sp.add_argument("--exclude-treated", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AnalysisError as exc:
        print(f"analysis failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except GovImpactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
