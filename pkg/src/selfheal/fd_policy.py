"""Rule table mapping node and task attributes to detector parameters."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional, Sequence

from .accrual_fd import DetectorConfig
from .errors import PolicyConflictError


class LinkKind(str, Enum):
    WIRED = "wired"
    WIRELESS = "wireless"


class PowerKind(str, Enum):
    MAINS = "mains"
    BATTERY = "battery"


class Mobility(str, Enum):
    STATIONARY = "stationary"
    MOBILE = "mobile"


@dataclass(frozen=True)
class NodeProfile:
    link_kind: LinkKind = LinkKind.WIRED
    power_kind: PowerKind = PowerKind.MAINS
    mobility: Mobility = Mobility.STATIONARY

    def __post_init__(self):
        # coerce plain strings, reject anything outside the enums
        object.__setattr__(self, "link_kind", LinkKind(self.link_kind))
        object.__setattr__(self, "power_kind", PowerKind(self.power_kind))
        object.__setattr__(self, "mobility", Mobility(self.mobility))

    def to_record(self) -> dict:
        return {
            "link_kind": self.link_kind.value,
            "power_kind": self.power_kind.value,
            "mobility": self.mobility.value,
        }


@dataclass(frozen=True)
class TaskCriticality:
    replacement_available: bool = True
    central_to_application: bool = False


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(DetectorConfig)}
# fields a rule may key on
_MATCH_FIELDS = {
    "link_kind": LinkKind,
    "power_kind": PowerKind,
    "mobility": Mobility,
    "replacement_available": bool,
    "central_to_application": bool,
}


@dataclass(frozen=True)
class PolicyRule:
    """``match`` is a conjunction of attribute equalities; empty matches everything.

    ``adjust`` values are absolute overrides, except the ``*_scale`` keys
    (``heartbeat_period_scale``, ``threshold_scale``) which multiply the
    value accumulated so far.
    """

    name: str
    priority: int
    match: Mapping[str, Any] = field(default_factory=dict)
    adjust: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        match = {}
        for key, value in dict(self.match).items():
            if key not in _MATCH_FIELDS:
                raise ValueError(f"rule {self.name!r}: unknown match attribute {key!r}")
            kind = _MATCH_FIELDS[key]
            if kind is bool:
                if not isinstance(value, bool):
                    raise ValueError(f"rule {self.name!r}: {key} must be a boolean")
                match[key] = value
            else:
                match[key] = kind(value)
        for key in self.adjust:
            base = key[: -len("_scale")] if key.endswith("_scale") else key
            if base not in _CONFIG_FIELDS:
                raise ValueError(f"rule {self.name!r}: unknown adjustment {key!r}")
        object.__setattr__(self, "match", match)
        object.__setattr__(self, "adjust", dict(self.adjust))

    @property
    def catch_all(self) -> bool:
        return not self.match

    def matches(self, profile: NodeProfile, crit: TaskCriticality) -> bool:
        attrs = {
            "link_kind": profile.link_kind,
            "power_kind": profile.power_kind,
            "mobility": profile.mobility,
            "replacement_available": crit.replacement_available,
            "central_to_application": crit.central_to_application,
        }
        return all(attrs[k] == v for k, v in self.match.items())

    def apply(self, values: dict) -> dict:
        out = dict(values)
        for key, value in self.adjust.items():
            if key.endswith("_scale"):
                base = key[: -len("_scale")]
                out[base] = out[base] * value
            else:
                out[key] = value
        return out

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "PolicyRule":
        unknown = set(record) - {"name", "priority", "match", "adjust"}
        if unknown:
            raise ValueError(f"policy rule has unknown keys {sorted(unknown)}")
        return cls(
            name=record["name"],
            priority=int(record["priority"]),
            match=record.get("match", {}),
            adjust=record.get("adjust", {}),
        )

    def to_record(self) -> dict:
        match = {k: (v.value if isinstance(v, Enum) else v) for k, v in self.match.items()}
        return {"name": self.name, "priority": self.priority, "match": match, "adjust": dict(self.adjust)}


# Magnitudes below are our own choices; only the direction of each
# adjustment comes from the policy guidance they encode.
DEFAULT_RULES: tuple[PolicyRule, ...] = (
    PolicyRule("default", priority=0),
    PolicyRule(
        "wired-stationary-long-window",
        priority=10,
        match={"link_kind": "wired", "mobility": "stationary"},
        adjust={"omega_max": 5000},
    ),
    PolicyRule(
        "mobile-short-window",
        priority=20,
        match={"mobility": "mobile"},
        adjust={"omega_min": 5, "omega_max": 50},
    ),
    PolicyRule(
        "replaceable-low-threshold",
        priority=30,
        match={"replacement_available": True},
        adjust={"threshold": 0.5},
    ),
    PolicyRule(
        "central-irreplaceable",
        priority=40,
        match={"central_to_application": True, "replacement_available": False},
        adjust={"heartbeat_period_scale": 0.5, "threshold": 1.2},
    ),
)


def sort_rules(rules: Sequence[PolicyRule]) -> list[PolicyRule]:
    by_priority = sorted(rules, key=lambda r: r.priority)
    for a, b in zip(by_priority, by_priority[1:]):
        if a.priority == b.priority:
            raise PolicyConflictError(
                f"rules {a.name!r} and {b.name!r} share priority {a.priority}", b.name
            )
    if not by_priority or not by_priority[0].catch_all:
        raise PolicyConflictError("rule set needs a catch-all rule at the lowest priority")
    return by_priority


def derive_config(
    profile: NodeProfile,
    crit: TaskCriticality,
    rules: Sequence[PolicyRule] = DEFAULT_RULES,
    base: Optional[DetectorConfig] = None,
) -> DetectorConfig:
    """Apply every matching rule to ``base`` in ascending priority order."""
    base = base if base is not None else DetectorConfig()
    values = dataclasses.asdict(base)
    last_rule = None
    for rule in sort_rules(rules):
        if rule.matches(profile, crit):
            values = rule.apply(values)
            if rule.adjust:
                last_rule = rule.name
    try:
        return DetectorConfig(**values)
    except (ValueError, TypeError) as exc:
        # name the highest-priority rule that changed anything
        raise PolicyConflictError(
            f"policy rule {last_rule!r} produced an invalid detector config: {exc}", last_rule
        ) from exc
