"""Decoding of Uniswap-V2 style ``Sync``/``Swap`` logs into trade points.

Reserves are scaled by token decimals before any division, and prices are
quoted as wETH per asset unit unless ``price_orientation="literal"`` is
requested, which returns asset units per wETH instead.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from govimpact.errors import DecodeError, DegenerateReserve

# keccak256("Sync(uint112,uint112)")
SYNC_TOPIC = "0x1c411e9a96e071241c2f21f7726b17ae89e3cab4c78be50e062b03a9fffbbad1"
# keccak256("Swap(address,uint256,uint256,uint256,uint256,address)")
SWAP_TOPIC = "0xd78ad95fa46c994b6551d0da85fc275fe613ce37657fb8d5e3d130840159d822"

WORD = 32
MAX_UINT256 = 2**256 - 1
PRICE_ORIENTATIONS = ("base_per_asset", "literal")


@dataclass(frozen=True)
class RawLog:
    pool_address: str
    topics: tuple[str, ...]
    data: str
    block_number: int
    block_timestamp: int
    tx_index: int
    log_index: int

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.block_number, self.tx_index, self.log_index)


@dataclass(frozen=True)
class PoolMeta:
    pool_address: str
    base_symbol: str
    asset_symbol: str
    base_decimals: int
    asset_decimals: int
    base_is_token0: bool

    def __post_init__(self):
        for d in (self.base_decimals, self.asset_decimals):
            if not 0 <= d <= 36:
                raise ValueError(f"decimals out of range [0, 36]: {d}")


@dataclass(frozen=True)
class TradePoint:
    asset: str
    block: int
    timestamp: int
    price: float
    volume: float
    reserves_base: float
    reserves_asset: float
    tx_index: int = 0
    log_index: int = 0
    side: str = ""

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.block, self.tx_index, self.log_index)


@dataclass(frozen=True)
class SupplySnapshot:
    asset: str
    block: int
    total_supply: float

    def __post_init__(self):
        if not self.total_supply > 0:
            raise ValueError(f"total_supply must be > 0, got {self.total_supply}")


@dataclass(frozen=True)
class CrimeEvent:
    id: int
    asset: str
    announcement_date: dt.date
    description: str = ""
    direct_loss_usd: float | None = None

    @property
    def tau(self) -> int:
        """Announcement time as UTC seconds, taken at midnight."""
        d = self.announcement_date
        return int(dt.datetime(d.year, d.month, d.day, tzinfo=dt.timezone.utc).timestamp())


class Swap(NamedTuple):
    volume: float
    side: str
    anomalous: bool


@dataclass
class DecodeStats:
    syncs: int = 0
    swaps: int = 0
    points: int = 0
    orphans: int = 0
    degenerate: int = 0
    anomalous: int = 0
    fallback_pairings: int = 0
    skipped_topics: int = 0


def _words(data: str, n: int) -> list[int]:
    if not isinstance(data, str) or not data.startswith("0x"):
        raise DecodeError(f"data is not 0x-prefixed hex: {data!r}")
    body = data[2:]
    try:
        raw = bytes.fromhex(body)
    except ValueError as exc:
        raise DecodeError(f"malformed hex payload: {exc}") from None
    if len(raw) % WORD:
        raise DecodeError(f"payload length {len(raw)} is not a multiple of {WORD} bytes")
    if len(raw) < n * WORD:
        raise DecodeError(f"payload holds {len(raw) // WORD} words, expected {n}")
    return [int.from_bytes(raw[i * WORD:(i + 1) * WORD], "big") for i in range(n)]


def encode_words(*values: int) -> str:
    for v in values:
        if not 0 <= v <= MAX_UINT256:
            raise ValueError(f"value does not fit uint256: {v}")
    return "0x" + "".join(v.to_bytes(WORD, "big").hex() for v in values)


def _topic0(raw: RawLog) -> str:
    if not raw.topics:
        raise DecodeError("log has no topics")
    return raw.topics[0].lower()


def _scale(amount: int, decimals: int) -> float:
    # int / int is correctly rounded, which keeps scaled values bit-exact
    return amount / 10**decimals


def decode_sync(raw: RawLog, meta: PoolMeta) -> tuple[float, float]:
    """Return ``(reserves_base, reserves_asset)`` in token units."""
    if _topic0(raw) != SYNC_TOPIC:
        raise DecodeError(f"not a sync log: {raw.topics[0]}")
    r0, r1 = _words(raw.data, 2)
    raw_base, raw_asset = (r0, r1) if meta.base_is_token0 else (r1, r0)
    if raw_base == 0 or raw_asset == 0:
        raise DegenerateReserve(f"zero reserve at block {raw.block_number}")
    return _scale(raw_base, meta.base_decimals), _scale(raw_asset, meta.asset_decimals)


def decode_swap(raw: RawLog, meta: PoolMeta) -> Swap:
    """Gross wETH-side volume of a swap.

    ``side`` is ``"buy"`` when wETH flows into the pool (the asset is bought)
    and ``"sell"`` otherwise. An all-zero swap is returned with volume 0 and
    ``anomalous=True``.
    """
    if _topic0(raw) != SWAP_TOPIC:
        raise DecodeError(f"not a swap log: {raw.topics[0]}")
    a0_in, a1_in, a0_out, a1_out = _words(raw.data, 4)
    if meta.base_is_token0:
        base_in, base_out = a0_in, a0_out
    else:
        base_in, base_out = a1_in, a1_out
    anomalous = not (a0_in or a1_in or a0_out or a1_out)
    side = "buy" if base_in >= base_out else "sell"
    if anomalous:
        side = ""
    return Swap(_scale(max(base_in, base_out), meta.base_decimals), side, anomalous)


def compute_price(reserves_base: float, reserves_asset: float,
                  orientation: str = "base_per_asset") -> float:
    if orientation not in PRICE_ORIENTATIONS:
        raise ValueError(f"unknown price orientation {orientation!r}")
    if not (reserves_base > 0 and reserves_asset > 0):
        raise DegenerateReserve(f"non-positive reserves ({reserves_base}, {reserves_asset})")
    if orientation == "literal":
        return reserves_asset / reserves_base
    return reserves_base / reserves_asset


def build_trade_series(logs: Sequence[RawLog], meta: PoolMeta,
                       orientation: str = "base_per_asset"
                       ) -> tuple[list[TradePoint], DecodeStats]:
    """One trade point per swap, priced from the sync of the same transaction.

    Logs must already be sorted by ``(block_number, tx_index, log_index)``.
    A swap whose transaction carries no sync falls back to the most recent
    earlier sync and counts as an orphan; without any earlier sync the swap is
    dropped.
    """
    stats = DecodeStats()
    pool = meta.pool_address.lower()
    logs = [lg for lg in logs if lg.pool_address.lower() == pool]
    for prev, cur in zip(logs, logs[1:]):
        if cur.key <= prev.key:
            raise ValueError(f"logs not strictly sorted at {cur.key} (after {prev.key})")

    points: list[TradePoint] = []
    last_reserves: tuple[float, float] | None = None
    i = 0
    while i < len(logs):
        j = i
        tx = (logs[i].block_number, logs[i].tx_index)
        while j < len(logs) and (logs[j].block_number, logs[j].tx_index) == tx:
            j += 1
        group = logs[i:j]
        syncs: list[tuple[int, tuple[float, float]]] = []
        swaps: list[tuple[int, RawLog, Swap]] = []
        for pos, lg in enumerate(group):
            topic = _topic0(lg)
            if topic == SYNC_TOPIC:
                stats.syncs += 1
                try:
                    syncs.append((pos, decode_sync(lg, meta)))
                except DegenerateReserve:
                    stats.degenerate += 1
            elif topic == SWAP_TOPIC:
                stats.swaps += 1
                sw = decode_swap(lg, meta)
                if sw.anomalous:
                    stats.anomalous += 1
                swaps.append((pos, lg, sw))
            else:
                stats.skipped_topics += 1

        for pos, lg, sw in swaps:
            before = [r for p, r in syncs if p < pos]
            after = [r for p, r in syncs if p > pos]
            if before:
                reserves = before[-1]
            elif after:
                reserves = after[0]
            elif last_reserves is not None:
                reserves = last_reserves
                stats.orphans += 1
                stats.fallback_pairings += 1
            else:
                stats.orphans += 1
                continue
            rb, ra = reserves
            points.append(TradePoint(
                asset=meta.asset_symbol, block=lg.block_number, timestamp=lg.block_timestamp,
                price=compute_price(rb, ra, orientation), volume=sw.volume,
                reserves_base=rb, reserves_asset=ra,
                tx_index=lg.tx_index, log_index=lg.log_index, side=sw.side,
            ))
        if syncs:
            last_reserves = syncs[-1][1]
        i = j

    stats.points = len(points)
    return points, stats


def make_sync_log(pool: str, reserve0: int, reserve1: int, block: int, timestamp: int,
                  tx_index: int = 0, log_index: int = 0) -> RawLog:
    return RawLog(pool.lower(), (SYNC_TOPIC,), encode_words(reserve0, reserve1),
                  block, timestamp, tx_index, log_index)


def make_swap_log(pool: str, amount0_in: int, amount1_in: int, amount0_out: int,
                  amount1_out: int, block: int, timestamp: int, tx_index: int = 0,
                  log_index: int = 0, sender: str = "0x" + "00" * 20,
                  to: str = "0x" + "00" * 20) -> RawLog:
    topics = (SWAP_TOPIC, "0x" + sender[2:].rjust(64, "0"), "0x" + to[2:].rjust(64, "0"))
    return RawLog(pool.lower(), topics,
                  encode_words(amount0_in, amount1_in, amount0_out, amount1_out),
                  block, timestamp, tx_index, log_index)


def sort_logs(logs: Iterable[RawLog]) -> list[RawLog]:
    return sorted(logs, key=lambda lg: lg.key)
