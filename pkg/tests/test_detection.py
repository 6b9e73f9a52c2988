import math

import pytest

from selfheal.accrual_fd import DEFAULT_PHI_CAP, NEVER_RESET, DetectorConfig, batch_estimate
from selfheal.errors import OrderingError
from selfheal.harness import sweeps
from selfheal.harness.detection import metrics_from_samples, replay, run_detection
from selfheal.workload_gen import gen_heartbeat_trace, mean_shift_trace, shift_and_back_trace


def first_grid_after(t, step=5.0):
    k = math.floor(t / step) + 1
    return k * step


def test_zero_variance_detection_closed_form():
    trace = [20.0 * k for k in range(1, 31)]  # last heartbeat at 600
    cfg = DetectorConfig(omega_min=10, omega_max=NEVER_RESET, threshold=0.8)
    onset = 600.0
    m = run_detection(trace, cfg, onset)
    # sigma^2 = 0: suspicion jumps to the cap as soon as elapsed exceeds the mean
    assert m.detection_time == first_grid_after(600 + 20) - onset
    assert m.mistake_rate == 0.0


def test_jittered_detection_closed_form():
    gaps = [19.0, 21.0] * 20
    trace, t = [], 3.0
    for g in gaps:
        t += g
        trace.append(t)
    trace.insert(0, 3.0)
    onset = trace[-1]
    cfg = DetectorConfig(omega_min=10, omega_max=NEVER_RESET, threshold=0.8)
    mu, var = batch_estimate(gaps)
    # invert the one-sided bound: var / (var + d^2) = 10^-u
    crossing = onset + mu + math.sqrt(var * (10**0.8 - 1))
    m = run_detection(trace, cfg, onset)
    assert m.detection_time == first_grid_after(crossing) - onset


def test_onset_zero_has_no_mistakes():
    trace = gen_heartbeat_trace(mean_shift_trace(0))
    m = run_detection(trace, DetectorConfig(threshold=0.1), 0.0, horizon=6000)
    assert m.mistake_rate == 0.0 and m.pre_onset_samples == 0


def test_unreachable_threshold_never_detects():
    trace = [20.0 * k for k in range(1, 31)]
    cfg = DetectorConfig(omega_max=NEVER_RESET, threshold=DEFAULT_PHI_CAP + 1)
    assert run_detection(trace, cfg, 600.0).detection_time is None


def test_unsorted_trace_rejected():
    with pytest.raises(OrderingError):
        run_detection([0, 20, 10], DetectorConfig(), 5.0)
    with pytest.raises(OrderingError):
        replay([0, 20, 20], DetectorConfig())


def test_metrics_from_dump_equal_online():
    for seed in range(5):
        cfg_t = shift_and_back_trace(seed)
        trace = gen_heartbeat_trace(cfg_t)
        for om in (10, 25, 50):
            cfg = DetectorConfig(omega_min=min(10, om - 1), omega_max=om)
            online = run_detection(trace, cfg, 1000.0, horizon=2500.0)
            offline = metrics_from_samples(replay(trace, cfg, horizon=2500.0), 1000.0)
            assert online == offline


def test_sample_grid_and_delivery_order():
    # a heartbeat exactly on a sample instant is delivered before sampling
    samples = replay([0.0, 5.0, 10.0], DetectorConfig(omega_min=2, omega_max=NEVER_RESET), horizon=20)
    assert [s.time for s in samples] == [0, 5, 10, 15, 20]
    assert samples[2].phi == 0.0
    # elapsed equals the mean at 15, exceeds it at 20
    assert samples[3].phi == 0.0
    assert samples[4].phi == DEFAULT_PHI_CAP


# -- sweeps -----------------------------------------------------------------------


def test_threshold_sweep_rows_and_monotonicity():
    rows = sweeps.sweep_threshold(seeds=[0, 1], thresholds=[0.2, 0.8, 1.6])
    assert [tuple(r) for r in rows] == [sweeps.THRESHOLD_COLUMNS] * 6
    for seed in (0, 1):
        mine = [r for r in rows if r["seed"] == seed]
        rates = [r["mistake_rate"] for r in mine]
        assert rates == sorted(rates, reverse=True)


def test_tiny_threshold_detects_at_first_positive_sample():
    trace_cfg = mean_shift_trace(0)
    trace = gen_heartbeat_trace(trace_cfg)
    samples = replay(trace, DetectorConfig(), horizon=6000)
    first = next(s.time for s in samples if s.time >= 3000 and s.phi > 0)
    rows = sweeps.sweep_threshold(seeds=[0], thresholds=[1e-12])
    assert rows[0]["detection_time_s"] == first - 3000


def test_detection_times_on_sampling_grid():
    rows = sweeps.sweep_threshold(seeds=[0, 1], thresholds=[0.5, 1.0])
    rows += sweeps.sweep_interval(intervals=[10, 40], runs=2)
    for r in rows:
        assert r["detection_time_s"] >= 0 and r["detection_time_s"] % 5.0 == 0


def test_parallel_sweep_matches_sequential():
    a = sweeps.sweep_threshold(seeds=[0, 1, 2], thresholds=[0.5, 1.0], jobs=1)
    b = sweeps.sweep_threshold(seeds=[0, 1, 2], thresholds=[0.5, 1.0], jobs=2)
    assert a == b


def test_interval_sweep_rows():
    assert sweeps.sweep_interval(intervals=[]) == []
    rows = sweeps.sweep_interval(intervals=[5, 20], runs=3)
    assert len(rows) == 6
    assert [tuple(r) for r in rows] == [sweeps.INTERVAL_COLUMNS] * 6
    assert all(r["detection_time_s"] is not None for r in rows)


def test_window_sentinel_equals_large_window():
    for seed in range(3):
        trace = gen_heartbeat_trace(shift_and_back_trace(seed))
        big = DetectorConfig(omega_min=10, omega_max=10_000)
        never = DetectorConfig(omega_min=10, omega_max=NEVER_RESET)
        assert run_detection(trace, big, 1000.0, horizon=2500) == run_detection(
            trace, never, 1000.0, horizon=2500
        )


def test_large_windows_identical_to_each_other_before_second_change():
    # neither window fills before 2000 s, so no reset ever starts
    for seed in range(5):
        trace = gen_heartbeat_trace(shift_and_back_trace(seed))
        ref = replay(trace, DetectorConfig(omega_min=10, omega_max=100), horizon=2000)
        other = replay(trace, DetectorConfig(omega_min=10, omega_max=200), horizon=2000)
        assert other == ref


def test_large_windows_match_fifty_on_metrics():
    rows = sweeps.sweep_window(omega_maxes=[50, 100, 200], seeds=range(5))
    for seed in range(5):
        mine = {r["omega_max"]: r for r in rows if r["seed"] == seed}
        for om in (100, 200):
            assert abs(mine[om]["detection_time_s"] - mine[50]["detection_time_s"]) <= 5.0
            assert mine[om]["mistake_rate"] == mine[50]["mistake_rate"]


def test_window_default_omega_min():
    rows = sweeps.sweep_window(omega_maxes=[5, 50], seeds=[0])
    assert [r["omega_min"] for r in rows] == [4, 10]
