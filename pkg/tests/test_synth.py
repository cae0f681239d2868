import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from govimpact.aggregate import IntervalSeries
from govimpact.errors import SpecError
from govimpact.experiments import did_monte_carlo
from govimpact.synth import (DECAY_SLOTS, Effect, SynthSpec, effect_multipliers, generate,
                             inject, load_spec, trade_walk, write_series)


def test_zero_noise_is_constant():
    for s in generate(SynthSpec(n_assets=3, per_slot_sigma=0.0, start_price=2.5)):
        assert np.all(s.values == 2.5)


def test_empirical_correlation():
    series = generate(SynthSpec(n_assets=3, n_slots=10_000, pairwise_corr=0.9, seed=4))
    r = np.diff(np.log(np.array([s.values for s in series])), axis=1)
    c = np.corrcoef(r)
    for i in range(3):
        for j in range(i + 1, 3):
            assert abs(c[i, j] - 0.9) <= 0.03


def test_same_seed_same_output():
    a = generate(SynthSpec(seed=7))
    b = generate(SynthSpec(seed=7))
    c = generate(SynthSpec(seed=8))
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    assert not np.array_equal(a[1].values, c[1].values)


@pytest.mark.parametrize("corr, n", [(1.0, 3), (-0.5, 3), (-0.2, 6), (1.5, 2)])
def test_invalid_correlation(corr, n):
    with pytest.raises(SpecError):
        generate(SynthSpec(n_assets=n, pairwise_corr=corr))


def test_invalid_shape_and_onset():
    with pytest.raises(SpecError):
        Effect(0, 0.1, "wobble")
    with pytest.raises(SpecError):
        effect_multipliers(10, 0, Effect(10, 0.1))


def flat(n=20, start=-5):
    return IntervalSeries("X", "price", 3600, 0, range(start, start + n), np.linspace(1, 2, n))


def test_step_ratio():
    s = flat()
    out = inject(s, Effect(3, -0.10))
    ratio = out.values / s.values
    assert np.all(ratio[s.slots >= 3] == pytest.approx(0.9, abs=1e-15))
    assert np.all(ratio[s.slots < 3] == 1.0)


def test_spike_touches_one_slot():
    s = flat()
    out = inject(s, Effect(0, 9.0, "spike"))
    changed = np.flatnonzero(out.values != s.values)
    assert list(s.slots[changed]) == [0]
    assert out.values[changed[0]] == pytest.approx(10 * s.values[changed[0]])


def test_decay_returns_to_baseline():
    s = flat(30)
    out = inject(s, Effect(2, -0.2, "decay"))
    ratio = dict(zip(s.slots.tolist(), out.values / s.values))
    assert ratio[2] == pytest.approx(0.8)
    assert abs(ratio[2 + DECAY_SLOTS] - 1) < 0.01
    assert abs(ratio[2 + DECAY_SLOTS - 1] - 1) < 0.01  # 0.2 / 2**7
    assert all(ratio[k] <= ratio[k + 1] for k in range(2, 2 + DECAY_SLOTS))


@given(st.integers(-5, 14), st.floats(-0.9, 2.0), st.sampled_from(["step", "spike", "decay"]))
def test_effect_leaves_pre_onset_alone(onset, m, shape):
    s = flat()
    out = inject(s, Effect(onset, m, shape))
    pre = s.slots < onset
    assert np.array_equal(out.values[pre], s.values[pre])


def test_effect_lands_on_first_asset():
    base = generate(SynthSpec(n_assets=3, seed=2, n_slots=10))
    hit = generate(SynthSpec(n_assets=3, seed=2, n_slots=10, effect=Effect(5, -0.5)))
    assert not np.array_equal(base[0].values, hit[0].values)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(base[1:], hit[1:]))


def test_trade_walk_blocks_increase():
    pts = trade_walk(200, seed=1)
    blocks = [t.block for t in pts]
    assert all(b > a for a, b in zip(blocks, blocks[1:]))
    assert pts[0].price == 1.0


def test_spec_round_trip(tmp_path):
    spec = SynthSpec(n_assets=4, seed=3, effect=Effect(2, -0.1, "decay"))
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(spec.to_dict()))
    assert load_spec(p) == spec
    paths = write_series(tmp_path / "out", generate(spec))
    assert len(paths) == 4 and paths[0].name == "A00_price.csv"


def test_step_recovered_without_bias():
    stats = did_monte_carlo(range(200), Effect(0, -0.10), n_controls=5, corr=0.6, sigma=0.01)
    assert abs(stats.mean_post_gamma + 0.10) < 0.02
