"""Scenario file schema.

A scenario file is YAML (JSON is a subset) with a mandatory ``version``
and optional sections, one per command.  Unknown keys are rejected
everywhere, and every error message names the section it came from.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .accrual_fd import DetectorConfig
from .allocation_model import NetworkGraph, RecipeGraph, network_from_record, recipe_from_record
from .fd_policy import DEFAULT_RULES, PolicyRule, sort_rules
from .harness.selfheal import EventKind, ScenarioEvent

SCENARIO_VERSION = 1


class ScenarioError(ValueError):
    """Invalid scenario file; the message starts with the offending section."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DetectorSection(_Strict):
    omega_min: int = 10
    omega_max: Optional[int] = 1000
    heartbeat_period: float = 20.0
    threshold: float = 0.8

    def build(self) -> DetectorConfig:
        return DetectorConfig(**self.model_dump())


class RuleSection(_Strict):
    name: str
    priority: int
    match: dict[str, Any] = Field(default_factory=dict)
    adjust: dict[str, float] = Field(default_factory=dict)


class PolicySection(_Strict):
    rules: Optional[list[RuleSection]] = None

    def build(self) -> tuple[PolicyRule, ...]:
        if self.rules is None:
            return DEFAULT_RULES
        rules = tuple(PolicyRule.from_record(r.model_dump()) for r in self.rules)
        sort_rules(rules)
        return rules


class ThresholdSweep(_Strict):
    runs: int = Field(20, ge=0)
    thresholds: list[float] = Field(default_factory=lambda: [round(0.1 * k, 10) for k in range(1, 21)])
    variance: float = Field(5.0, ge=0)
    sampling_interval: float = Field(5.0, gt=0)


class IntervalSweep(_Strict):
    intervals: list[float] = Field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0])
    runs: int = Field(10, ge=0)
    threshold: float = Field(0.8, gt=0)
    omega_min: int = Field(10, ge=2)
    duration: float = Field(1000.0, gt=0)
    variance: float = Field(1.0, ge=0)
    sampling_interval: float = Field(5.0, gt=0)


class WindowSweep(_Strict):
    omega_max: list[int] = Field(default_factory=lambda: [10, 25, 50, 100, 200])
    runs: int = Field(20, ge=0)
    omega_min: Optional[int] = None
    threshold: float = Field(0.8, gt=0)
    sampling_interval: float = Field(5.0, gt=0)


class SweepSection(_Strict):
    threshold: ThresholdSweep = Field(default_factory=ThresholdSweep)
    interval: IntervalSweep = Field(default_factory=IntervalSweep)
    window: WindowSweep = Field(default_factory=WindowSweep)


class BenchSection(_Strict):
    nodes: list[int] = Field(default_factory=lambda: [10])
    tasks: list[int] = Field(default_factory=lambda: [3, 4, 5, 6])
    shapes: list[Literal["long", "wide"]] = Field(default_factory=lambda: ["long", "wide"])
    runs: int = Field(5, ge=0)
    solvers: list[Literal["exact", "heuristic", "brute"]] = Field(
        default_factory=lambda: ["exact", "heuristic"]
    )
    time_budget: Optional[float] = Field(60.0, gt=0)


class EventSection(_Strict):
    time: float = Field(ge=0)
    kind: EventKind
    subject: str
    payload: dict[str, float] = Field(default_factory=dict)


class ApplicationSection(_Strict):
    id: str
    recipe: dict[str, Any]


class SimulateSection(_Strict):
    network: dict[str, Any]
    applications: list[ApplicationSection]
    events: list[EventSection] = Field(default_factory=list)
    horizon: float = Field(1200.0, gt=0)
    sampling_interval: float = Field(5.0, gt=0)
    heartbeat_variance: float = Field(1e-4, ge=0)
    solver: Literal["exact", "heuristic", "auto"] = "auto"
    time_budget: Optional[float] = Field(10.0, gt=0)

    @field_validator("events")
    @classmethod
    def _sorted(cls, events):
        for a, b in zip(events, events[1:]):
            if b.time < a.time:
                raise ValueError(f"events out of time order at t={b.time}")
        return events


class ScenarioFile(_Strict):
    version: Literal[1]
    seed: int = Field(0, ge=0)
    detector: DetectorSection = Field(default_factory=DetectorSection)
    policy: PolicySection = Field(default_factory=PolicySection)
    sweeps: SweepSection = Field(default_factory=SweepSection)
    bench: BenchSection = Field(default_factory=BenchSection)
    simulate: Optional[SimulateSection] = None


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{where}: {err['msg']}")
    return "\n".join(lines)


def parse_scenario(data: Any) -> ScenarioFile:
    if not isinstance(data, dict):
        raise ScenarioError("<root>: scenario must be a mapping")
    if "version" not in data:
        raise ScenarioError("version: missing schema version")
    try:
        scenario = ScenarioFile.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_format_errors(exc)) from None
    # cross-module validation, reported under the owning section
    for section, check in (
        ("detector", lambda: scenario.detector.build()),
        ("policy", lambda: scenario.policy.build()),
        ("simulate", lambda: scenario.simulate and simulation_inputs(scenario.simulate)),
    ):
        try:
            check()
        except (ValueError, TypeError, KeyError) as exc:
            raise ScenarioError(f"{section}: {exc}") from None
    return scenario


def load_scenario(path: Union[str, Path]) -> ScenarioFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"<file>: cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"<file>: not valid YAML: {exc}") from None
    return parse_scenario(data)


def simulation_inputs(sim: SimulateSection):
    """Graphs and events of a simulate section, checked against each other."""
    net: NetworkGraph = network_from_record(sim.network)
    apps: dict[str, RecipeGraph] = {}
    for app in sim.applications:
        if app.id in apps:
            raise ValueError(f"duplicate application id {app.id!r}")
        apps[app.id] = recipe_from_record(app.recipe)
    known = set(net.index)
    events = []
    for ev in sim.events:
        if ev.subject not in known:
            raise ValueError(f"event at t={ev.time} names unknown device {ev.subject!r}")
        events.append(ScenarioEvent(ev.time, ev.kind, ev.subject, ev.payload))
    return net, apps, events


def bundled_scenario_path(name: str = "vibration_analysis") -> Path:
    return Path(__file__).parent / "scenarios" / f"{name}.yaml"
