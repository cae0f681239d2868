"""Deterministic end-to-end fixture: raw swap/sync logs for a small market.

Twelve pools trade against wETH for 200 days with correlated hourly price
paths. Three incidents are recorded: one asset receives a permanent price
drop at its announcement, one is left untouched, and one pool goes dormant
well before its announcement so that the event cannot be analysed.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from govimpact import io as gio
from govimpact.aggregate import DAY, HOUR
from govimpact.ingest import CrimeEvent, PoolMeta, SupplySnapshot, make_swap_log, make_sync_log
from govimpact.synth import equicorrelated_returns

START = int(dt.datetime(2021, 1, 1, tzinfo=dt.timezone.utc).timestamp())
FIRST_BLOCK = 11_565_000
BLOCK_TIME = 13
SYMBOLS = ("ALPH", "BRAV", "CHAR", "DELT", "ECHO", "FOXT", "GOLF", "HOTL", "INDI", "JULI",
           "KILO", "LIMA")
ASSET_DECIMALS = (18, 8, 6, 18)


@dataclass(frozen=True)
class FixtureSpec:
    days: int = 200
    mean_trade_gap: int = 3 * HOUR
    hourly_sigma: float = 0.01 / 6 ** 0.5
    pairwise_corr: float = 0.8
    shock: float = -0.12
    shock_day: int = 150
    null_day: int = 165
    dormant_day: int = 180
    dormant_from: int = 160
    spikes_per_asset: int = 3
    seed: int = 11


def _block(ts: int) -> int:
    return FIRST_BLOCK + (ts - START) // BLOCK_TIME


def _ts(block: int) -> int:
    return START + (block - FIRST_BLOCK) * BLOCK_TIME


def _day(d: int) -> dt.date:
    return (dt.datetime.fromtimestamp(START, dt.timezone.utc) + dt.timedelta(days=d)).date()


def build_fixture(out_dir: str | Path, spec: FixtureSpec = FixtureSpec()) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n_hours = spec.days * 24
    n = len(SYMBOLS)

    latent = np.cumsum(equicorrelated_returns(rng, n_hours, n, spec.hourly_sigma,
                                              spec.pairwise_corr), axis=0)
    latent += np.log(rng.uniform(0.002, 0.05, n))
    latent[spec.shock_day * 24:, 0] += np.log1p(spec.shock)
    eth = 1500 * np.exp(np.cumsum(rng.normal(0, 0.005, n_hours)))

    pools, trades = [], []  # trades: (block, symbol index, seq, kind, payload)
    for i, sym in enumerate(SYMBOLS):
        meta = PoolMeta(f"0x{0xA11CE000 + i:040x}", "WETH", sym, 18,
                        ASSET_DECIMALS[i % len(ASSET_DECIMALS)], i % 2 == 0)
        pools.append(meta)
        end = START + (spec.dormant_from if i == n - 1 else spec.days) * DAY
        t = START + int(rng.exponential(spec.mean_trade_gap))
        times = []
        while t < end:
            times.append(t)
            t += max(BLOCK_TIME, int(rng.exponential(spec.mean_trade_gap)))
        spikes = set(rng.choice(np.arange(10, len(times) - 10), spec.spikes_per_asset,
                                replace=False).tolist())
        liquidity = 400.0
        for j, t in enumerate(times):
            h = (t - START) // HOUR
            price = float(np.exp(latent[h, i] + rng.normal(0, 0.002)))
            liquidity *= float(np.exp(rng.normal(0, 0.002)))
            vol = float(rng.lognormal(-0.5, 1.0))
            side = "buy" if rng.random() < 0.5 else "sell"
            blk = _block(t)
            if j in spikes:
                factor = 10.0 if rng.random() < 0.5 else 0.1
                trades.append((blk, i, 0, meta, price * factor, liquidity, vol, side))
                blk += 1  # the manipulation unwinds in the next block
            trades.append((blk, i, 1, meta, price, liquidity, vol, side))
            if j % 500 == 250:
                liquidity *= 1.1
                trades.append((blk + 2, i, 2, meta, price, liquidity, 0.0, "mint"))

    trades.sort(key=lambda x: (x[0], x[1], x[2]))
    logs, tx = [], {}
    for blk, _, _, meta, price, rb, vol, side in trades:
        txi = tx.get(blk, 0)
        tx[blk] = txi + 1
        ra = rb / price
        scale_b, scale_a = 10 ** meta.base_decimals, 10 ** meta.asset_decimals
        rb_i, ra_i = int(rb * scale_b), int(ra * scale_a)
        r0, r1 = (rb_i, ra_i) if meta.base_is_token0 else (ra_i, rb_i)
        logs.append(make_sync_log(meta.pool_address, r0, r1, blk, _ts(blk), txi, 0))
        if side == "mint":
            continue
        vb, va = int(vol * scale_b), int(vol / price * scale_a)
        base_in, asset_out = (vb, va) if side == "buy" else (0, 0)
        asset_in, base_out = (0, 0) if side == "buy" else (va, vb)
        if meta.base_is_token0:
            amounts = (base_in, asset_in, base_out, asset_out)
        else:
            amounts = (asset_in, base_in, asset_out, base_out)
        logs.append(make_swap_log(meta.pool_address, *amounts, blk, _ts(blk), txi, 1))

    supply = []
    for i, sym in enumerate(SYMBOLS):
        base = 10 ** (7 + i % 3)
        for d in range(0, spec.days, 5):
            supply.append(SupplySnapshot(sym, _block(START + d * DAY), base * (1 + 0.001 * d)))
    ethusd = [(START + h * HOUR, float(f"{eth[h]:.6f}")) for h in range(n_hours)]
    events = [
        CrimeEvent(1, SYMBOLS[0], _day(spec.shock_day), "governance takeover", 5_000_000.0),
        CrimeEvent(2, SYMBOLS[1], _day(spec.null_day), "treasury drained", 1_200_000.0),
        CrimeEvent(3, SYMBOLS[-1], _day(spec.dormant_day), "abandoned pool exploit", None),
    ]

    paths = {"logs": out / "logs.jsonl", "pools": out / "pools.csv",
             "supply": out / "supply.csv", "ethusd": out / "ethusd.csv",
             "events": out / "events.csv", "config": out / "fixture.cfg"}
    gio.write_raw_logs(paths["logs"], logs)
    gio.write_pools(paths["pools"], pools)
    gio.write_supply(paths["supply"], supply)
    gio.write_ethusd(paths["ethusd"], ethusd)
    gio.write_events(paths["events"], events)
    paths["config"].write_text(
        "# bundled fixture\n"
        "dt = 6h\n"
        "windows.long = -100,-10\n"
        "windows.short = -10,-1\n"
        "windows.event = -1,2\n"
        "windows.anchor = -1\n"
        "selection.t_r = 0.4\n"
        "selection.c = 10\n"
        "did.p_threshold = 0.1\n"
        "paths.logs = logs.jsonl\n"
        "paths.pools = pools.csv\n"
        "paths.supply = supply.csv\n"
        "paths.ethusd = ethusd.csv\n"
        "paths.events = events.csv\n", encoding="utf-8")
    return paths
