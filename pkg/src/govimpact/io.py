"""File formats: line-delimited raw-log dumps and delimited tables.

Every reader validates its header and rows and raises ``SchemaError`` naming
the file and line. Floats are written with 15 significant digits.
"""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from govimpact.errors import MissingInput, SchemaError
from govimpact.ingest import CrimeEvent, PoolMeta, RawLog, SupplySnapshot, TradePoint

RAWLOG_FIELDS = ("pool_address", "topics", "data", "block_number", "block_timestamp",
                 "tx_index", "log_index")
POOL_FIELDS = ("pool_address", "base_symbol", "asset_symbol", "base_decimals",
               "asset_decimals", "base_is_token0")
TRADE_FIELDS = ("asset", "block", "timestamp", "price", "volume", "reserves_base",
                "reserves_asset", "tx_index", "log_index", "side")
SUPPLY_FIELDS = ("asset", "block", "total_supply")
ETHUSD_FIELDS = ("timestamp", "usd_per_eth")
EVENT_FIELDS = ("id", "asset", "announcement_date", "description", "direct_loss_usd")


def fmt(x: Any) -> str:
    """Serialize a value for delimited output; floats get 15 significant digits."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.15g}"
    return str(x)


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require(path: str | Path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise MissingInput(p)
    return p


def _is_hex(s: Any) -> bool:
    if not isinstance(s, str) or not s.startswith("0x") or s != s.lower():
        return False
    try:
        int(s[2:] or "0", 16)
    except ValueError:
        return False
    return True


def read_raw_logs(path: str | Path) -> list[RawLog]:
    p = _require(path)
    out, seen = [], set()
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(p, lineno, f"invalid JSON: {exc.msg}") from None
            missing = [f for f in RAWLOG_FIELDS if f not in rec]
            if missing:
                raise SchemaError(p, lineno, f"missing fields {missing}")
            topics = rec["topics"]
            if not isinstance(topics, list) or not topics:
                raise SchemaError(p, lineno, "topics must be a non-empty list")
            for h in [rec["pool_address"], rec["data"], *topics]:
                if not _is_hex(h):
                    raise SchemaError(p, lineno, f"not lowercase 0x-hex: {h!r}")
            if (len(rec["data"]) - 2) % 64:
                raise SchemaError(p, lineno, "data length is not a multiple of 32 bytes")
            try:
                ints = [int(rec[f]) for f in RAWLOG_FIELDS[3:]]
            except (TypeError, ValueError):
                raise SchemaError(p, lineno, "integer field has a non-integer value") from None
            lg = RawLog(rec["pool_address"], tuple(topics), rec["data"], *ints)
            if lg.key in seen:
                raise SchemaError(p, lineno, f"duplicate (block, tx_index, log_index) {lg.key}")
            seen.add(lg.key)
            out.append(lg)
    return out


def write_raw_logs(path: str | Path, logs: Iterable[RawLog]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for lg in logs:
            rec = {"pool_address": lg.pool_address, "topics": list(lg.topics), "data": lg.data,
                   "block_number": lg.block_number, "block_timestamp": lg.block_timestamp,
                   "tx_index": lg.tx_index, "log_index": lg.log_index}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def _read_table(path: str | Path, fields: Sequence[str], parse: Callable[[dict], Any],
                optional: Sequence[str] = ()) -> list:
    p = _require(path)
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [f for f in fields if f not in header and f not in optional]
        if missing:
            raise SchemaError(p, 1, f"header lacks columns {missing}")
        out = []
        for row in reader:
            try:
                out.append(parse(row))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(p, reader.line_num, str(exc)) from None
    return out


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str | None) -> float | None:
    if s is None or s.strip() in ("", "-", "nan"):
        return None
    v = float(s)
    if v < 0:
        raise ValueError(f"negative amount {v}")
    return v


def read_pools(path: str | Path) -> list[PoolMeta]:
    pools = _read_table(path, POOL_FIELDS, lambda r: PoolMeta(
        r["pool_address"].lower(), r["base_symbol"], r["asset_symbol"], int(r["base_decimals"]),
        int(r["asset_decimals"]), _bool(r["base_is_token0"])))
    seen = set()
    for m in pools:
        if m.asset_symbol in seen:
            raise SchemaError(path, 0, f"asset {m.asset_symbol} has more than one pool record")
        seen.add(m.asset_symbol)
    return pools


def write_pools(path: str | Path, pools: Iterable[PoolMeta]) -> None:
    write_table(path, POOL_FIELDS, ((m.pool_address, m.base_symbol, m.asset_symbol,
                                     m.base_decimals, m.asset_decimals, m.base_is_token0)
                                    for m in pools))


def read_trades(path: str | Path) -> list[TradePoint]:
    def parse(r):
        return TradePoint(r["asset"], int(r["block"]), int(r["timestamp"]), float(r["price"]),
                          float(r["volume"]), float(r["reserves_base"]),
                          float(r["reserves_asset"]), int(r.get("tx_index") or 0),
                          int(r.get("log_index") or 0), r.get("side") or "")
    return _read_table(path, TRADE_FIELDS, parse, optional=("tx_index", "log_index", "side"))


def write_trades(path: str | Path, points: Iterable[TradePoint]) -> None:
    write_table(path, TRADE_FIELDS, ((t.asset, t.block, t.timestamp, t.price, t.volume,
                                      t.reserves_base, t.reserves_asset, t.tx_index,
                                      t.log_index, t.side) for t in points))


def read_supply(path: str | Path) -> list[SupplySnapshot]:
    return _read_table(path, SUPPLY_FIELDS, lambda r: SupplySnapshot(
        r["asset"], int(r["block"]), float(r["total_supply"])))


def write_supply(path: str | Path, snaps: Iterable[SupplySnapshot]) -> None:
    write_table(path, SUPPLY_FIELDS, ((s.asset, s.block, s.total_supply) for s in snaps))


def read_ethusd(path: str | Path) -> list[tuple[int, float]]:
    def parse(r):
        v = float(r["usd_per_eth"])
        if not v > 0:
            raise ValueError(f"usd_per_eth must be > 0, got {v}")
        return int(r["timestamp"]), v
    return sorted(_read_table(path, ETHUSD_FIELDS, parse))


def write_ethusd(path: str | Path, rows: Iterable[tuple[int, float]]) -> None:
    write_table(path, ETHUSD_FIELDS, rows)


def read_events(path: str | Path) -> list[CrimeEvent]:
    return _read_table(path, EVENT_FIELDS, lambda r: CrimeEvent(
        int(r["id"]), r["asset"], dt.date.fromisoformat(r["announcement_date"].strip()),
        r.get("description") or "", _opt_float(r.get("direct_loss_usd"))),
        optional=("description", "direct_loss_usd"))


def write_events(path: str | Path, events: Iterable[CrimeEvent]) -> None:
    write_table(path, EVENT_FIELDS, ((e.id, e.asset, e.announcement_date.isoformat(),
                                      e.description, e.direct_loss_usd) for e in events))
