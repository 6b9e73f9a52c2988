"""Policy-enabled accrual failure detector.

Inter-arrival statistics are kept in constant space: each window holds a
count and the first two power sums of its samples.  Suspicion is the
negative decimal log of the one-sided Chebyshev bound on the probability
that the next heartbeat arrives later than the time already elapsed.

Windows store their sums relative to a per-window shift (the first sample
recorded into the window).  ``rho`` and ``kappa`` are available as the
plain sums, but the shifted form keeps the variance accurate when the
coefficient of variation is small.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

from .errors import ArityError, OrderingError

#: ``omega_max`` value meaning the learning window is never reset.
NEVER_RESET = None

DEFAULT_PHI_CAP = 1e6
STATE_VERSION = 1


@dataclass(frozen=True)
class DetectorConfig:
    """The four tunable detector parameters."""

    omega_min: int = 10
    omega_max: Optional[int] = 1000
    heartbeat_period: float = 20.0
    threshold: float = 0.8

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not isinstance(self.omega_min, int) or self.omega_min < 2:
            out.append(f"omega_min must be an integer >= 2, got {self.omega_min!r}")
        if self.omega_max is not NEVER_RESET and (
            not isinstance(self.omega_max, int) or self.omega_max <= self.omega_min
        ):
            out.append(
                f"omega_max must exceed omega_min ({self.omega_min}), got {self.omega_max!r}"
            )
        if not self.heartbeat_period > 0:
            out.append(f"heartbeat_period must be > 0, got {self.heartbeat_period!r}")
        if not self.threshold > 0:
            out.append(f"threshold must be > 0, got {self.threshold!r}")
        return out

    @property
    def resets(self) -> bool:
        return self.omega_max is not NEVER_RESET


@dataclass
class WindowAccumulators:
    n: int = 0
    shift: float = 0.0
    shifted_sum: float = 0.0
    shifted_sum_sq: float = 0.0

    def add(self, x: float) -> None:
        if self.n == 0:
            self.shift = x
        d = x - self.shift
        self.shifted_sum += d
        self.shifted_sum_sq += d * d
        self.n += 1

    @property
    def rho(self) -> float:
        return self.shifted_sum + self.n * self.shift

    @property
    def kappa(self) -> float:
        return (
            self.shifted_sum_sq
            + 2.0 * self.shift * self.shifted_sum
            + self.n * self.shift * self.shift
        )

    def mean(self) -> float:
        return self.shift + self.shifted_sum / self.n

    def variance(self) -> float:
        if self.n < 2:
            raise ArityError("variance needs at least two samples")
        ss = self.shifted_sum_sq - self.shifted_sum * self.shifted_sum / self.n
        # rounding can push a zero spread slightly negative
        return max(ss, 0.0) / (self.n - 1)


def batch_estimate(samples: Iterable[float]) -> tuple[float, float]:
    """Mean and unbiased variance of ``samples`` in one exact pass.

    Every float is a dyadic rational, so scaling all samples to a common
    power-of-two denominator turns the sums into exact integer arithmetic.
    Integer true division rounds correctly, so the result is the correctly
    rounded value of the true statistic; this is the reference the
    incremental windows are checked against.
    """
    ratios = [float(x).as_integer_ratio() for x in samples]
    n = len(ratios)
    if n < 2:
        raise ArityError(f"batch_estimate needs at least 2 samples, got {n}")
    shift = max(den.bit_length() - 1 for _, den in ratios)
    scaled = [num << (shift - den.bit_length() + 1) for num, den in ratios]
    s1 = sum(scaled)
    s2 = sum(v * v for v in scaled)
    mu = s1 / (n << shift)
    var = (n * s2 - s1 * s1) / ((n * (n - 1)) << (2 * shift))
    return mu, var


def chebyshev_later_bound(mu: float, sigma2: float, elapsed: float) -> float:
    """One-sided Chebyshev bound on P[X > elapsed]; 1.0 when elapsed <= mu."""
    if elapsed <= mu:
        return 1.0
    d = elapsed - mu
    return sigma2 / (sigma2 + d * d)


@dataclass
class AccrualEstimator:
    config: DetectorConfig = field(default_factory=DetectorConfig)
    phi_cap: float = DEFAULT_PHI_CAP
    active: WindowAccumulators = field(default_factory=WindowAccumulators)
    learning: Optional[WindowAccumulators] = None
    last_arrival: Optional[float] = None

    def record_heartbeat(self, arrival: float) -> "AccrualEstimator":
        if self.last_arrival is not None:
            if not arrival > self.last_arrival:
                raise OrderingError(
                    f"heartbeat at {arrival} does not follow last arrival {self.last_arrival}"
                )
            self._add_sample(arrival - self.last_arrival)
        self.last_arrival = arrival
        return self

    def _add_sample(self, x: float) -> None:
        cfg = self.config
        if self.learning is None and cfg.resets and self.active.n >= cfg.omega_max:
            # freeze the active window; it keeps answering until the new one is ready
            self.learning = WindowAccumulators()
        if self.learning is None:
            self.active.add(x)
            return
        self.learning.add(x)
        if self.learning.n >= cfg.omega_min:
            self.active = self.learning
            self.learning = None

    @property
    def ready(self) -> bool:
        return self.active.n >= self.config.omega_min

    def estimate(self) -> tuple[float, float]:
        """(mean, variance) of the window currently answering queries."""
        return self.active.mean(), self.active.variance()

    def suspicion(self, now: float) -> float:
        if self.last_arrival is None:
            return 0.0
        if now < self.last_arrival:
            raise OrderingError(f"query time {now} precedes last arrival {self.last_arrival}")
        if not self.ready:
            return 0.0
        mu, sigma2 = self.estimate()
        elapsed = now - self.last_arrival
        if elapsed <= mu:
            return 0.0
        p_later = chebyshev_later_bound(mu, sigma2, elapsed)
        if p_later <= 0.0:
            return self.phi_cap
        return min(-math.log10(p_later), self.phi_cap)

    def is_failed(self, now: float) -> bool:
        return self.suspicion(now) >= self.config.threshold

    def clone(self) -> "AccrualEstimator":
        return copy.deepcopy(self)

    # -- serialization -------------------------------------------------

    def to_record(self) -> dict:
        def window(w, is_open=True):
            w = w or WindowAccumulators()
            return {
                "open": is_open,
                "n": w.n,
                "rho": w.rho,
                "kappa": w.kappa,
                "shift": w.shift,
                "shifted_sum": w.shifted_sum,
                "shifted_sum_sq": w.shifted_sum_sq,
            }

        return {
            "version": STATE_VERSION,
            "config": asdict(self.config),
            "phi_cap": self.phi_cap,
            "last_arrival": self.last_arrival,
            "active": window(self.active),
            "learning": window(self.learning, self.learning is not None),
        }

    @classmethod
    def from_record(cls, record: dict) -> "AccrualEstimator":
        if record.get("version") != STATE_VERSION:
            raise ValueError(f"unsupported estimator state version {record.get('version')!r}")

        def window(w):
            return WindowAccumulators(
                n=int(w["n"]),
                shift=float(w["shift"]),
                shifted_sum=float(w["shifted_sum"]),
                shifted_sum_sq=float(w["shifted_sum_sq"]),
            )

        cfg = dict(record["config"])
        for key in ("omega_min", "omega_max"):
            if cfg.get(key) is not None:
                cfg[key] = int(cfg[key])
        learning = record["learning"]
        last = record["last_arrival"]
        return cls(
            config=DetectorConfig(**cfg),
            phi_cap=float(record["phi_cap"]),
            active=window(record["active"]),
            learning=window(learning) if learning["open"] else None,
            last_arrival=None if last is None else float(last),
        )

    def dumps(self) -> str:
        """Fixed-width JSON text: every number is rendered at constant width."""
        return _fixed_width_json(self.to_record())

    @classmethod
    def loads(cls, text: str) -> "AccrualEstimator":
        return cls.from_record(json.loads(text))


def _fixed_width_json(obj) -> str:
    if isinstance(obj, dict):
        body = ", ".join(f"{json.dumps(k)}: {_fixed_width_json(v)}" for k, v in obj.items())
        return "{" + body + "}"
    if isinstance(obj, bool) or obj is None:
        # true/false/null padded to a common width
        return f"{json.dumps(obj):>5}"
    if isinstance(obj, int):
        return f"{obj:20d}"
    if isinstance(obj, float):
        return f"{obj: .17e}"
    return json.dumps(obj)
