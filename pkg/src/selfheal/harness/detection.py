"""Replaying heartbeat traces through the detector and scoring the verdicts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from ..accrual_fd import DEFAULT_PHI_CAP, AccrualEstimator, DetectorConfig
from ..errors import OrderingError

DEFAULT_SAMPLING_INTERVAL = 5.0
# how long to keep sampling after the later of onset and the last heartbeat
DEFAULT_TAIL = 3600.0


@dataclass(frozen=True)
class DetectionMetrics:
    detection_time: Optional[float]
    mistake_rate: float
    samples: int
    pre_onset_samples: int = 0
    mistakes: int = 0


@dataclass(frozen=True)
class SuspicionSample:
    time: float
    phi: float
    failed: bool


def sample_times(horizon: float, interval: float) -> list[float]:
    # integer multiples avoid accumulating rounding drift
    count = int(math.floor(horizon / interval + 1e-9))
    return [k * interval for k in range(count + 1)]


def replay(
    trace: Sequence[float],
    cfg: DetectorConfig,
    sampling_interval: float = DEFAULT_SAMPLING_INTERVAL,
    horizon: Optional[float] = None,
    phi_cap: float = DEFAULT_PHI_CAP,
) -> list[SuspicionSample]:
    """Feed ``trace`` into a fresh estimator and sample it on a fixed grid.

    A heartbeat that lands exactly on a sample instant is delivered first.
    """
    if sampling_interval <= 0:
        raise ValueError("sampling_interval must be > 0")
    for a, b in zip(trace, trace[1:]):
        if not b > a:
            raise OrderingError(f"trace is not strictly increasing at {a} -> {b}")
    if horizon is None:
        horizon = (trace[-1] if trace else 0.0) + DEFAULT_TAIL
    est = AccrualEstimator(cfg, phi_cap=phi_cap)
    out = []
    i = 0
    for now in sample_times(horizon, sampling_interval):
        while i < len(trace) and trace[i] <= now:
            est.record_heartbeat(trace[i])
            i += 1
        phi = est.suspicion(now)
        out.append(SuspicionSample(now, phi, phi >= cfg.threshold))
    return out


def metrics_from_samples(samples: Sequence[SuspicionSample], onset: float) -> DetectionMetrics:
    pre = [s for s in samples if s.time < onset]
    mistakes = sum(1 for s in pre if s.failed)
    detected = next((s.time - onset for s in samples if s.time >= onset and s.failed), None)
    rate = mistakes / len(pre) if pre else 0.0
    return DetectionMetrics(detected, rate, len(samples), len(pre), mistakes)


def run_detection(
    trace: Sequence[float],
    cfg: DetectorConfig,
    onset: float,
    sampling_interval: float = DEFAULT_SAMPLING_INTERVAL,
    horizon: Optional[float] = None,
    phi_cap: float = DEFAULT_PHI_CAP,
) -> DetectionMetrics:
    """Detection delay after ``onset`` and false-alarm rate before it.

    Verdicts are scored online while the trace is replayed, on the same
    sample grid :func:`replay` uses.
    """
    if sampling_interval <= 0:
        raise ValueError("sampling_interval must be > 0")
    for a, b in zip(trace, trace[1:]):
        if not b > a:
            raise OrderingError(f"trace is not strictly increasing at {a} -> {b}")
    if horizon is None:
        horizon = max(trace[-1] if trace else 0.0, onset) + DEFAULT_TAIL
    est = AccrualEstimator(cfg, phi_cap=phi_cap)
    i = 0
    pre = mistakes = taken = 0
    detected = None
    for now in sample_times(horizon, sampling_interval):
        while i < len(trace) and trace[i] <= now:
            est.record_heartbeat(trace[i])
            i += 1
        failed = est.is_failed(now)
        taken += 1
        if now < onset:
            pre += 1
            mistakes += failed
        elif failed and detected is None:
            detected = now - onset
    rate = mistakes / pre if pre else 0.0
    return DetectionMetrics(detected, rate, taken, pre, mistakes)
