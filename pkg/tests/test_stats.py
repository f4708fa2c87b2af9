import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from fleetsim import stats


def test_welch_curve_is_moving_average():
    rng = np.random.default_rng(0)
    traces = [rng.normal(size=3000) for _ in range(3)]
    curve = stats.welch_curve(traces, 10)
    ens = np.mean(traces, axis=0)
    assert len(curve) == 3000 - 20
    assert curve[0] == pytest.approx(ens[:21].mean())
    assert curve[100] == pytest.approx(ens[100:121].mean())


def test_warmup_on_decaying_transient():
    n = np.arange(6000)
    rng = np.random.default_rng(1)
    long_ = [5 + 20 * np.exp(-n / 400) + rng.normal(0, 0.5, n.size) for _ in range(5)]
    short = [5 + 20 * np.exp(-n / 50) + rng.normal(0, 0.5, n.size) for _ in range(5)]
    a, b = stats.welch_warmup(long_), stats.welch_warmup(short)
    assert a > b
    # analytic: 20 exp(-n/400) < 0.25 at n ~ 1750
    assert 1200 < a < 2400


def test_warmup_never_settles_returns_full_length():
    traces = [np.linspace(0, 100, 3000) for _ in range(2)]
    assert stats.welch_warmup(traces) == 3000


def test_welch_needs_two():
    with pytest.raises(ValueError):
        stats.welch_warmup([np.ones(5000)])


def test_replication_deletion_matches_t_interval():
    rng = np.random.default_rng(3)
    traces = [np.concatenate([np.full(100, 50.0), rng.normal(2, 1, 2000)]) for _ in range(10)]
    mean, (lo, hi), reps = stats.replication_deletion(traces, 100)
    m = np.array([t[100:].mean() for t in traces])
    iv = sps.t.interval(0.9, 9, loc=m.mean(), scale=sps.sem(m))
    assert mean == pytest.approx(m.mean())
    assert (lo, hi) == pytest.approx(iv)
    assert reps == pytest.approx(m.tolist())


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.integers(0, 2**31))
def test_interval_contains_mean_and_scales(scale, seed):
    rng = np.random.default_rng(seed)
    traces = [rng.exponential(1, 200) for _ in range(5)]
    m, (lo, hi), _ = stats.replication_deletion(traces, 0)
    ms, (los, his), _ = stats.replication_deletion([scale * t for t in traces], 0)
    assert lo <= m <= hi
    assert ms == pytest.approx(scale * m) and his - los == pytest.approx(scale * (hi - lo))


def test_detector_growth_vs_flat():
    t = np.arange(4000, dtype=float)
    rng = np.random.default_rng(5)
    growing = 0.05 * t + rng.normal(0, 3, t.size)
    flat = np.abs(rng.normal(3, 2, t.size))
    assert stats.detect_instability((t, growing)) == "unstable"
    assert stats.detect_instability((t, flat)) == "stable"
    assert stats.detect_instability((t[:4], flat[:4])) == "undecided"


def test_summary_keys():
    r = stats.ExperimentResult("fj+", 12, 16, 0.65, 500, 1.0, (0.9, 1.1), True, [0, 1])
    assert set(r.summary()) == {"policy", "K", "L", "lambda_per_min", "n_wu", "T_mean_min",
                                "ci90_lo", "ci90_hi", "stable", "seeds"}
