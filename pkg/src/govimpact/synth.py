"""Synthetic correlated markets with known injected effects.

Log returns are Gaussian with a common pairwise correlation, drawn through
the Cholesky factor of the equicorrelation matrix from a PCG64 stream, so a
seed reproduces the same panel on any platform numpy supports.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from govimpact.aggregate import DEFAULT_DT, IntervalSeries
from govimpact.errors import SpecError
from govimpact.ingest import TradePoint

SHAPES = ("step", "spike", "decay")
DECAY_RATE = 0.5
DECAY_SLOTS = 8


@dataclass(frozen=True)
class Effect:
    onset_slot: int
    magnitude: float  # fractional change, -0.10 is a 10% decline
    shape: str = "step"

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise SpecError(f"unknown effect shape {self.shape!r}")


@dataclass(frozen=True)
class SynthSpec:
    n_assets: int = 11
    n_slots: int = 48
    per_slot_sigma: float = 0.01
    pairwise_corr: float = 0.8
    drift: float = 0.0
    seed: int = 0
    effect: Effect | None = None
    dt: int = DEFAULT_DT
    origin: int = 0
    first_slot: int = 0
    start_price: float = 1.0
    prefix: str = "A"

    def validate(self) -> None:
        if self.n_assets < 1 or self.n_slots < 1:
            raise SpecError("n_assets and n_slots must be positive")
        if self.per_slot_sigma < 0:
            raise SpecError("per_slot_sigma must be >= 0")
        lower = -1 / (self.n_assets - 1) if self.n_assets > 1 else -1
        if not lower < self.pairwise_corr < 1:
            raise SpecError(f"pairwise_corr {self.pairwise_corr} outside ({lower}, 1)")

    @property
    def symbols(self) -> list[str]:
        width = max(2, len(str(self.n_assets - 1)))
        return [f"{self.prefix}{i:0{width}d}" for i in range(self.n_assets)]

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        if d.get("effect") is not None:
            d["effect"] = Effect(**d["effect"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def equicorrelated_returns(rng: np.random.Generator, n_slots: int, n_assets: int,
                           sigma: float, corr: float, drift: float = 0.0) -> np.ndarray:
    C = np.full((n_assets, n_assets), corr)
    np.fill_diagonal(C, 1.0)
    L = np.linalg.cholesky(C)
    return drift + sigma * (rng.standard_normal((n_slots, n_assets)) @ L.T)


def generate(spec: SynthSpec) -> list[IntervalSeries]:
    """Geometric random walks, one per asset; the effect lands on the first asset."""
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    r = equicorrelated_returns(rng, spec.n_slots, spec.n_assets, spec.per_slot_sigma,
                               spec.pairwise_corr, spec.drift)
    r[0] = 0.0  # every walk starts at start_price
    levels = spec.start_price * np.exp(np.cumsum(r, axis=0))
    slots = np.arange(spec.first_slot, spec.first_slot + spec.n_slots)
    out = [IntervalSeries(sym, "price", spec.dt, spec.origin, slots, levels[:, i])
           for i, sym in enumerate(spec.symbols)]
    if spec.effect is not None:
        out[0] = inject(out[0], spec.effect)
    return out


def effect_multipliers(n: int, start: int, effect: Effect) -> np.ndarray:
    """Multiplicative factors a series of ``n`` slots receives from ``effect``."""
    pos = effect.onset_slot - start
    if not 0 <= pos < n:
        raise SpecError(f"onset slot {effect.onset_slot} outside the series")
    f = np.ones(n)
    m = effect.magnitude
    if effect.shape == "step":
        f[pos:] = 1 + m
    elif effect.shape == "spike":
        f[pos] = 1 + m
    else:
        j = np.arange(min(DECAY_SLOTS, n - pos))
        f[pos:pos + len(j)] = 1 + m * DECAY_RATE ** j
    return f


def inject(series: IntervalSeries, effect: Effect) -> IntervalSeries:
    start = int(series.slots[0]) if len(series) else 0
    if len(series) and series.slots[-1] - start + 1 != len(series):
        raise SpecError("inject needs a gap-free series")
    return replace(series, values=series.values * effect_multipliers(len(series), start, effect))


def trade_walk(n: int, sigma: float = 0.01, seed: int = 0, asset: str = "X",
               start_block: int = 10_000_000, max_gap: int = 30, block_time: int = 13,
               start_price: float = 1.0) -> list[TradePoint]:
    """Trade-level geometric random walk with irregular block gaps."""
    rng = np.random.Generator(np.random.PCG64(seed))
    lp = np.concatenate([[0.0], np.cumsum(rng.normal(0.0, sigma, n - 1))])
    blocks = start_block + np.cumsum(rng.integers(1, max_gap, n))
    price = start_price * np.exp(lp)
    return [TradePoint(asset, int(b), int(b) * block_time, float(p), 1.0, float(p), 1.0, 0, 0)
            for p, b in zip(price, blocks)]


def with_prices(points: Sequence[TradePoint], prices: Sequence[float]) -> list[TradePoint]:
    return [replace(t, price=float(p)) for t, p in zip(points, prices)]


def write_series(out_dir: str | Path, series: Sequence[IntervalSeries]) -> list[Path]:
    from govimpact.io import write_table
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in series:
        p = out / f"{s.asset}_{s.kind}.csv"
        write_table(p, ("asset", "kind", "dt", "origin", "slot", "value"),
                    ((s.asset, s.kind, s.dt, s.origin, k, v) for k, v in s.items()))
        paths.append(p)
    return paths


def load_spec(path: str | Path) -> SynthSpec:
    with open(path, encoding="utf-8") as fh:
        return SynthSpec.from_dict(json.load(fh))
