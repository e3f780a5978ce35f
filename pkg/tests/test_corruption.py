import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avinpaint.corruption import (GapPlan, apply_mask, fixed_gap_plan, plan_to_mask,
                                  sample_gap_plan)
from avinpaint.dsp import LOG, Spectrogram


def test_sample_is_deterministic():
    assert sample_gap_plan(3000, 42) == sample_gap_plan(3000, 42)


def test_sample_respects_invariants_fuzz():
    for seed in range(2000):
        plan = sample_gap_plan(3000, seed)
        plan.validate(3000)
        assert 1 <= len(plan) <= 8


@settings(max_examples=200, deadline=None)
@given(st.integers(500, 10000), st.integers(0, 2**32 - 1))
def test_sample_invariants_any_length(utt_ms, seed):
    plan = sample_gap_plan(utt_ms, seed)
    plan.validate(utt_ms)
    assert plan.total_ms <= min(2400, 0.8 * utt_ms)


def test_sample_rejects_short_utterance():
    with pytest.raises(ValueError):
        sample_gap_plan(499, 0)


def test_sample_mean_total():
    totals = [sample_gap_plan(3000, s).total_ms for s in range(3000)]
    assert 820 <= np.mean(totals) <= 980


@pytest.mark.parametrize("gap", [100, 200, 400, 800, 1600])
def test_fixed_plan(gap):
    plan = fixed_gap_plan(3000, gap, 9)
    assert len(plan) == 1 and plan.gaps[0][1] == gap
    assert 0 <= plan.gaps[0][0] <= 3000 - gap
    assert fixed_gap_plan(3000, gap, 9) == plan


def test_fixed_plan_too_long():
    with pytest.raises(ValueError):
        fixed_gap_plan(1000, 1600, 0)


def test_mask_empty_plan():
    assert not plan_to_mask(GapPlan(), 250, 257).any()


def test_mask_full_cover():
    assert plan_to_mask(GapPlan([(0, 3000)]), 250, 257).all()


def test_mask_frame_centres():
    m = plan_to_mask(GapPlan([(600, 96)]), 250, 4)
    # enumerate centres independently
    expected = [l for l in range(250) if 600 <= (l + 0.5) * 12 < 696]
    assert expected == list(range(50, 58))
    assert np.nonzero(m[:, 0])[0].tolist() == expected


def test_mask_full_columns():
    for seed in range(50):
        m = plan_to_mask(sample_gap_plan(3000, seed), 250, 257)
        assert np.array_equal(m, np.repeat(m[:, :1], 257, axis=1))


def test_mask_plan_outside_frames():
    with pytest.raises(ValueError):
        plan_to_mask(GapPlan([(2950, 100)]), 250, 257)


def test_masked_fraction_statistic():
    frac = [plan_to_mask(sample_gap_plan(3000, s), 250, 1).mean() for s in range(2000)]
    assert 0.27 <= np.mean(frac) <= 0.33


def test_apply_mask():
    rng = np.random.default_rng(0)
    s = Spectrogram(rng.normal(size=(20, 6)), LOG)
    m = (rng.random((20, 6)) < 0.3).astype(np.uint8)
    out = apply_mask(s, m)
    np.testing.assert_array_equal(out.values, s.values * (1 - m))
    assert np.array_equal(apply_mask(out, m).values, out.values)
    assert np.array_equal(apply_mask(s, np.zeros_like(m)).values, s.values)
    assert not apply_mask(s, np.ones_like(m)).values.any()


def test_apply_mask_shape_mismatch():
    with pytest.raises(ValueError):
        apply_mask(Spectrogram(np.ones((3, 3)), LOG), np.ones((3, 4)))


def test_gap_plan_json_round_trip():
    plan = sample_gap_plan(3000, 11)
    assert GapPlan.from_list(plan.to_list()) == plan


@pytest.mark.parametrize("gaps", [[(0, 20)], [(0, 100), (50, 100)], [(2950, 100)], [(0, 1300), (1400, 1300)]])
def test_validate_rejects(gaps):
    with pytest.raises(ValueError):
        GapPlan(gaps).validate(3000)
