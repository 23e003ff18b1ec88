"""Scenario files: wire a platform, create contracts, replay a sensor timeline.

A scenario is a TOML file whose relative paths resolve against its own
directory::

    name = "bandwidth-drop"
    environment = "environment.xml"     # baseline of the node
    adl = "components.adl"              # app and personality templates
    rules = "rules.txt"                 # optional
    timeline = "timeline.txt"           # optional
    expect = "expected.trace"           # optional

    [[directory]]
    kind = "type"
    id = "transaction"

    [[directory]]
    kind = "template"
    id = "flat"
    parent = "/transaction"
    offer = "offers/flat.xml"
    personality = "personalities/flat.xml"

    [[app]]
    template = "shop"
    needs = "needs/shop.xml"

Time is virtual: contracts are created at t=0 and each timeline sample is
delivered at its own timestamp, so traces are reproducible byte for byte.
"""
from __future__ import annotations

import difflib
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import List, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..contract import Coordinator, Outcome
from ..core.model import TemplateLibrary
from ..core.runtime import Runtime
from ..directory import (INSTANCE, TEMPLATE, TYPE, Directory, NeedDescriptor,
                         OfferDescriptor, parse_rules)
from ..environment import (EnvironmentService, TimelineEvent, parse_environment,
                           parse_timeline)
from ..errors import MiddlewareError, ScenarioParseError, TraceMismatch
from ..personality import Personality


@dataclass
class DirectoryEntry:
    kind: str
    id: str
    parent: str = "/"
    offer: Optional[OfferDescriptor] = None
    personality: Optional[Personality] = None
    adl: str = ""


@dataclass
class AppSpec:
    template: str
    needs: NeedDescriptor
    id: Optional[str] = None


@dataclass
class Scenario:
    name: str
    root: Path
    environment_xml: str
    adl: str
    entries: List[DirectoryEntry] = field(default_factory=list)
    rules_text: str = ""
    apps: List[AppSpec] = field(default_factory=list)
    timeline: List[TimelineEvent] = field(default_factory=list)
    expected: Optional[str] = None
    change_delta: float = 0.1


@dataclass
class ScenarioResult:
    scenario: Scenario
    trace: str
    outcomes: List[Outcome]
    coordinator: Coordinator
    expected: Optional[str] = None

    @property
    def lines(self) -> List[str]:
        return self.trace.splitlines()

    @property
    def rebounds(self) -> List[Outcome]:
        return [o for o in self.outcomes if o.kind == "Rebound"]

    @property
    def matches(self) -> bool:
        return self.expected is None or self.expected == self.trace


def bundled_scenarios() -> List[str]:
    base = resources.files("adaptmw") / "scenarios"
    return sorted(p.name for p in base.iterdir() if (p / "scenario.toml").is_file())


def resolve_scenario(name_or_path) -> Path:
    """A path to a scenario file or directory, or the name of a bundled one."""
    path = Path(name_or_path)
    if path.is_dir():
        path = path / "scenario.toml"
    if path.is_file():
        return path
    bundled = resources.files("adaptmw") / "scenarios" / str(name_or_path) / "scenario.toml"
    if bundled.is_file():
        return Path(str(bundled))
    raise ScenarioParseError(f"no scenario {name_or_path!r}")


def load_scenario(name_or_path) -> Scenario:
    path = resolve_scenario(name_or_path)
    root = path.parent
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from None

    def read(key, required=True):
        rel = data.get(key)
        if rel is None:
            if required:
                raise ScenarioParseError(f"{path}: missing key {key!r}")
            return None
        return _read(root, rel)

    try:
        sc = Scenario(
            name=data.get("name", root.name),
            root=root,
            environment_xml=read("environment"),
            adl=read("adl"),
            rules_text=read("rules", required=False) or "",
            expected=read("expect", required=False),
            change_delta=float(data.get("change_delta", 0.1)),
        )
        for item in data.get("directory", []):
            sc.entries.append(DirectoryEntry(
                kind=item["kind"], id=item["id"], parent=item.get("parent", "/"),
                offer=OfferDescriptor.from_xml(_read(root, item["offer"]))
                if "offer" in item else None,
                personality=Personality.from_xml(_read(root, item["personality"]))
                if "personality" in item else None,
                adl=_read(root, item["adl"]) if "adl" in item else ""))
        for item in data.get("app", []):
            sc.apps.append(AppSpec(item["template"],
                                   NeedDescriptor.from_xml(_read(root, item["needs"])),
                                   item.get("id")))
        timeline = read("timeline", required=False)
        if timeline:
            sc.timeline = parse_timeline(timeline)
    except KeyError as exc:
        raise ScenarioParseError(f"{path}: entry lacks key {exc}") from None
    except ScenarioParseError:
        raise
    except (MiddlewareError, ValueError) as exc:
        raise ScenarioParseError(f"{path}: {exc}") from None
    if not sc.apps:
        raise ScenarioParseError(f"{path}: no [[app]] to run")
    return sc


def _read(root: Path, rel: str) -> str:
    target = root / rel
    if not target.is_file():
        raise ScenarioParseError(f"referenced file {rel!r} does not exist")
    return target.read_text(encoding="utf-8")


def run_scenario(scenario, expect: Optional[str] = None) -> ScenarioResult:
    """Run a scenario; raises :class:`TraceMismatch` if an expected trace differs.

    ``expect`` is expected trace text and overrides the scenario's own.
    """
    sc = scenario if isinstance(scenario, Scenario) else load_scenario(scenario)
    try:
        baseline = parse_environment(sc.environment_xml)
        library = TemplateLibrary()
        library.update_from_adl(sc.adl)
        runtime = Runtime()

        environment = EnvironmentService()
        node = environment.register_node(baseline)
        directory = Directory()
        for e in sc.entries:
            if e.kind not in (TYPE, TEMPLATE, INSTANCE):
                raise ScenarioParseError(f"unknown directory entry kind {e.kind!r}")
            if e.personality is not None:
                e.personality.check(library)
            directory.import_(e.kind, e.id, e.parent, e.offer, e.adl, e.personality)
        for rule in parse_rules(sc.rules_text):
            directory.add_rule(rule)
    except ScenarioParseError:
        raise
    except (MiddlewareError, ValueError) as exc:
        raise ScenarioParseError(f"scenario {sc.name}: {exc}") from None

    coordinator = Coordinator(directory, runtime, library, environment, node,
                              change_delta=sc.change_delta)
    for app in sc.apps:
        inst = runtime.instantiate(app.template, library, instance_id=app.id or app.template)
        coordinator.register_app(inst.id)
        coordinator.create_contract(inst.id, app.needs)

    outcomes: List[Outcome] = []
    for event in sc.timeline:
        coordinator.now = event.t
        coordinator.post(environment.sample(event.t, event.field, event.value, node))
        outcomes.extend(coordinator.drain())

    trace = "".join(line + "\n" for line in coordinator.trace())
    expected = expect if expect is not None else sc.expected
    result = ScenarioResult(sc, trace, outcomes, coordinator, expected)
    if not result.matches:
        diff = "".join(difflib.unified_diff(expected.splitlines(True), trace.splitlines(True),
                                            "expected", "actual"))
        exc = TraceMismatch(f"trace of {sc.name} differs from the expected trace", diff)
        exc.result = result
        raise exc
    return result
