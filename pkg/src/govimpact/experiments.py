"""Monte Carlo checks of the estimator and the outlier filter on synthetic data."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from govimpact.cleaning import clean_trades, detect_global
from govimpact.did import PanelSpec, build_panel, fit_dynamic_did
from govimpact.synth import Effect, SynthSpec, generate, trade_walk, with_prices


@dataclass
class EstimatorStats:
    runs: int
    mean_post_gamma: float
    detection_rate: float
    false_positive_rate: float
    seconds: float
    per_run_mean: list[float] = field(default_factory=list, repr=False)


def did_monte_carlo(seeds, effect: Effect | None = None, n_controls: int = 10,
                    corr: float = 0.8, sigma: float = 0.01, se_method: str = "cr1_exchangeable",
                    spec: PanelSpec = PanelSpec(), p_threshold: float = 0.1) -> EstimatorStats:
    """Fit synthetic panels whose treated asset optionally carries ``effect``.

    Detection counts runs with any post-onset slot below ``p_threshold``; the
    false-positive rate is the share of all fitted slots below it.
    """
    t0 = time.perf_counter()
    lo, hi = spec.span_slots
    onset = effect.onset_slot if effect is not None else 0
    means, detected, rejections, slots = [], 0, 0, 0
    for seed in seeds:
        series = generate(SynthSpec(n_assets=n_controls + 1, n_slots=hi - lo,
                                    per_slot_sigma=sigma, pairwise_corr=corr, seed=seed,
                                    effect=effect, dt=spec.dt, first_slot=lo))
        panel = build_panel(series[0], series[1:], spec)
        fit = fit_dynamic_did(panel, spec, se_method)
        post = [g for k, g in fit.gamma.items() if k >= onset]
        means.append(float(np.mean([g.estimate for g in post])))
        detected += any(g.p_value < p_threshold for g in post)
        rejections += sum(g.p_value < p_threshold for g in fit.gamma.values())
        slots += len(fit.gamma)
    n = len(means)
    return EstimatorStats(n, float(np.mean(means)), detected / n, rejections / slots,
                          time.perf_counter() - t0, means)


@dataclass
class CleaningStats:
    runs: int
    points: int
    global_flag_rate: float
    false_removal_rate: float
    spike_recall: float
    step_removal_rate: float
    idempotent: bool


def cleaning_monte_carlo(seeds, n: int = 2000, sigma: float = 0.01, n_spikes: int = 10,
                         factor: float = 10.0, step: float = 0.5) -> CleaningStats:
    """Flag and removal rates of the two-stage filter on geometric trade walks.

    Each seed yields a clean walk, the same walk with ``n_spikes`` isolated
    trades multiplied by ``factor`` and the walk with a permanent ``step``
    level change halfway through.
    """
    seeds = list(seeds)
    flagged = removed = spikes_hit = step_hit = 0
    total = step_total = 0
    idempotent = True
    for seed in seeds:
        pts = trade_walk(n, sigma, seed)
        flagged += len(detect_global(pts))
        kept, rep = clean_trades(pts)
        removed += rep.removed_count
        total += n
        again, rep2 = clean_trades(kept)
        idempotent &= again == kept and rep2.removed_count == 0

        rng = np.random.Generator(np.random.PCG64(10**6 + seed))
        idx = rng.choice(np.arange(50, n - 50), n_spikes, replace=False)
        prices = np.array([t.price for t in pts])
        spiked = prices.copy()
        spiked[idx] *= factor
        kept, rep = clean_trades(with_prices(pts, spiked))
        spikes_hit += len(set(rep.confirmed_spikes) & set(idx.tolist()))
        again, rep2 = clean_trades(kept)
        idempotent &= again == kept and rep2.removed_count == 0

        stepped = prices.copy()
        stepped[n // 2:] *= step
        _, rep = clean_trades(with_prices(pts, stepped))
        step_hit += sum(i >= n // 2 for i in rep.confirmed_spikes)
        step_total += n - n // 2
    runs = len(seeds)
    return CleaningStats(runs, total, flagged / total, removed / total,
                         spikes_hit / (runs * n_spikes), step_hit / step_total, idempotent)
