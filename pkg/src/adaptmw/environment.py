"""Execution environment: descriptors, sensors, monitors and preferences.

A node is described by an :class:`EnvironmentDescriptor`, exchanged as XML::

    <Environment>
      <id><IPAddress>195.221.291.171</IPAddress></id>
      <provides>
        <network>
          <network_bandwidth>6 Mbps</network_bandwidth>
          <protocol>IEEE 802.11b</protocol>
        </network>
        <CPU><type>Pentium IV</type><speed>3 GHz</speed></CPU>
        <execution_environment>jdk1.4</execution_environment>
      </provides>
    </Environment>

Fields are addressed by dotted paths (``network.bandwidth``, ``cpu.speed``,
``software.execution_environment``, or any extra key such as
``memory.size``).  The first segment is the field's *dimension*; sensors
and monitors are organised by dimension.
"""
from __future__ import annotations

import dataclasses
import math
import re
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import (InactiveMonitor, MalformedXml, MissingId, ScenarioParseError,
                     UnknownMonitor, UnknownNode)

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")
_XML_ILLEGAL = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f￾￿]")

NETWORK_FIELDS = {"network_bandwidth": "bandwidth", "protocol": "protocol"}
CPU_FIELDS = {"type": "type", "speed": "speed"}
QUANTITY_FIELDS = {"network.bandwidth", "cpu.speed"}
KNOWN_FIELDS = QUANTITY_FIELDS | {"network.protocol", "cpu.type",
                                  "software.execution_environment"}


def format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


@dataclass(frozen=True)
class Quantity:
    """A number with a unit carried as text; units are never converted."""
    value: float
    unit: str = ""

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ValueError(f"quantity must be finite, got {self.value}")
        if self.unit != self.unit.strip() or " " in self.unit:
            raise ValueError(f"bad unit {self.unit!r}")

    @classmethod
    def parse(cls, text: str) -> "Quantity":
        parts = text.split()
        if not parts or len(parts) > 2:
            raise ValueError(f"not a quantity: {text!r}")
        try:
            number = float(parts[0])
        except ValueError:
            raise ValueError(f"not a quantity: {text!r}") from None
        return cls(number, parts[1] if len(parts) == 2 else "")

    def __str__(self):
        return f"{format_number(self.value)} {self.unit}".rstrip()


Value = Union[Quantity, str]


def _check_text(what: str, text: Optional[str]):
    if text is None:
        return
    if not isinstance(text, str) or text != text.strip() or _XML_ILLEGAL.search(text):
        raise ValueError(f"{what}: {text!r} is not a trimmed XML-safe string")


@dataclass(frozen=True)
class Network:
    bandwidth: Optional[Quantity] = None
    protocol: Optional[str] = None

    def __post_init__(self):
        if self.bandwidth is not None and self.bandwidth.value < 0:
            raise ValueError("bandwidth must be non-negative")
        _check_text("protocol", self.protocol)

    def is_empty(self):
        return self.bandwidth is None and self.protocol is None


@dataclass(frozen=True)
class Cpu:
    type: Optional[str] = None
    speed: Optional[Quantity] = None

    def __post_init__(self):
        if self.speed is not None and self.speed.value < 0:
            raise ValueError("cpu speed must be non-negative")
        _check_text("cpu type", self.type)

    def is_empty(self):
        return self.type is None and self.speed is None


@dataclass(frozen=True)
class EnvironmentDescriptor:
    id: str
    network: Optional[Network] = None
    cpu: Optional[Cpu] = None
    execution_environment: Optional[str] = None
    extra: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        _check_text("id", self.id)
        if not self.id:
            raise ValueError("descriptor id must be non-empty")
        # an empty section is the same as an absent one
        if self.network is not None and self.network.is_empty():
            object.__setattr__(self, "network", None)
        if self.cpu is not None and self.cpu.is_empty():
            object.__setattr__(self, "cpu", None)
        _check_text("execution_environment", self.execution_environment)
        object.__setattr__(self, "extra", dict(self.extra))
        _check_extra(self.extra)


def _check_extra(extra: Mapping[str, str]):
    keys = sorted(extra)
    for key in keys:
        parts = key.split(".")
        if not all(_NAME.match(p) for p in parts):
            raise ValueError(f"extra key {key!r} is not a dotted XML name")
        head = parts[0]
        if head == "execution_environment":
            raise ValueError(f"extra key {key!r} shadows a known element")
        if head in ("network", "CPU"):
            known = NETWORK_FIELDS if head == "network" else CPU_FIELDS
            if len(parts) == 1 or parts[1] in known:
                raise ValueError(f"extra key {key!r} shadows a known element")
        _check_text(f"extra {key}", extra[key])
    for a, b in zip(keys, keys[1:]):
        if b.startswith(a + "."):
            raise ValueError(f"extra keys {a!r} and {b!r} overlap")


# -- XML -------------------------------------------------------------------

def parse_environment(text: str) -> EnvironmentDescriptor:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from None
    if root.tag != "Environment":
        raise MalformedXml(f"root element is <{root.tag}>, expected <Environment>")
    id_node = root.find("id/IPAddress")
    if id_node is None or not (id_node.text or "").strip():
        raise MissingId("environment document has no <id><IPAddress>")

    network = cpu = exec_env = None
    extra: Dict[str, str] = {}
    provides = root.find("provides")
    try:
        for child in (provides if provides is not None else ()):
            if child.tag == "network":
                values = {}
                for item in child:
                    if item.tag in NETWORK_FIELDS:
                        values[NETWORK_FIELDS[item.tag]] = _text(item)
                    else:
                        _flatten(item, f"network.{item.tag}", extra)
                bandwidth = values.get("bandwidth")
                network = Network(Quantity.parse(bandwidth) if bandwidth is not None else None,
                                  values.get("protocol"))
            elif child.tag == "CPU":
                values = {}
                for item in child:
                    if item.tag in CPU_FIELDS:
                        values[CPU_FIELDS[item.tag]] = _text(item)
                    else:
                        _flatten(item, f"CPU.{item.tag}", extra)
                speed = values.get("speed")
                cpu = Cpu(values.get("type"), Quantity.parse(speed) if speed is not None else None)
            elif child.tag == "execution_environment":
                exec_env = _text(child)
            else:
                _flatten(child, child.tag, extra)
        return EnvironmentDescriptor(id_node.text.strip(), network, cpu, exec_env, extra)
    except ValueError as exc:
        raise MalformedXml(str(exc)) from None


def _text(node) -> str:
    return (node.text or "").strip()


def _flatten(node, key, out):
    children = list(node)
    if not children:
        out[key] = _text(node)
    for child in children:
        _flatten(child, f"{key}.{child.tag}", out)


def serialize_environment(d: EnvironmentDescriptor) -> str:
    """Canonical XML: id, then provides (network, CPU, execution_environment, extras)."""
    root = ET.Element("Environment")
    ET.SubElement(ET.SubElement(root, "id"), "IPAddress").text = d.id
    provides = ET.SubElement(root, "provides")
    grouped: Dict[str, Dict[str, str]] = {"network": {}, "CPU": {}}
    rest: Dict[str, str] = {}
    for key in sorted(d.extra):
        head, _, tail = key.partition(".")
        if head in grouped:
            grouped[head][tail] = d.extra[key]
        else:
            rest[key] = d.extra[key]

    if d.network is not None or grouped["network"]:
        node = ET.SubElement(provides, "network")
        if d.network is not None and d.network.bandwidth is not None:
            ET.SubElement(node, "network_bandwidth").text = str(d.network.bandwidth)
        if d.network is not None and d.network.protocol is not None:
            ET.SubElement(node, "protocol").text = d.network.protocol
        _unflatten(node, grouped["network"])
    if d.cpu is not None or grouped["CPU"]:
        node = ET.SubElement(provides, "CPU")
        if d.cpu is not None and d.cpu.type is not None:
            ET.SubElement(node, "type").text = d.cpu.type
        if d.cpu is not None and d.cpu.speed is not None:
            ET.SubElement(node, "speed").text = str(d.cpu.speed)
        _unflatten(node, grouped["CPU"])
    if d.execution_environment is not None:
        ET.SubElement(provides, "execution_environment").text = d.execution_environment
    _unflatten(provides, rest)
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def _unflatten(parent, flat: Mapping[str, str]):
    nodes: Dict[Tuple[str, ...], ET.Element] = {}
    for key in sorted(flat):
        parts = tuple(key.split("."))
        node = parent
        for depth in range(1, len(parts) + 1):
            prefix = parts[:depth]
            if prefix not in nodes:
                nodes[prefix] = ET.SubElement(node, parts[depth - 1])
            node = nodes[prefix]
        node.text = flat[key]


# -- field access ----------------------------------------------------------

def dimension_of(path: str) -> str:
    return path.split(".", 1)[0]


def _extra_key(path: str) -> str:
    head, _, tail = path.partition(".")
    if head == "cpu":
        return f"CPU.{tail}"
    return path


def get_field(d: EnvironmentDescriptor, path: str) -> Optional[Value]:
    if path == "network.bandwidth":
        return d.network.bandwidth if d.network else None
    if path == "network.protocol":
        return d.network.protocol if d.network else None
    if path == "cpu.type":
        return d.cpu.type if d.cpu else None
    if path == "cpu.speed":
        return d.cpu.speed if d.cpu else None
    if path == "software.execution_environment":
        return d.execution_environment
    return d.extra.get(_extra_key(path))


def with_field(d: EnvironmentDescriptor, path: str, value: Value) -> EnvironmentDescriptor:
    if path in ("network.bandwidth", "network.protocol"):
        net = d.network or Network()
        attr = path.split(".")[1]
        return dataclasses.replace(d, network=dataclasses.replace(net, **{attr: value}))
    if path in ("cpu.type", "cpu.speed"):
        cpu = d.cpu or Cpu()
        attr = path.split(".")[1]
        return dataclasses.replace(d, cpu=dataclasses.replace(cpu, **{attr: value}))
    if path == "software.execution_environment":
        return dataclasses.replace(d, execution_environment=value)
    extra = dict(d.extra)
    extra[_extra_key(path)] = str(value)
    return dataclasses.replace(d, extra=extra)


def parse_value(path: str, text: str) -> Value:
    text = text.strip()
    if path in QUANTITY_FIELDS:
        return Quantity.parse(text)
    return text


def value_text(value: Value) -> str:
    return str(value)


# -- predicates ------------------------------------------------------------

def _as_quantity(value) -> Optional[Quantity]:
    if isinstance(value, Quantity):
        return value
    if isinstance(value, str):
        try:
            return Quantity.parse(value)
        except ValueError:
            return None
    return None


@dataclass(frozen=True)
class LessThan:
    threshold: Quantity
    op = "lt"

    def holds(self, value, old=None) -> bool:
        q = _as_quantity(value)
        return q is not None and q.unit == self.threshold.unit and q.value < self.threshold.value

    def __str__(self):
        return f"< {self.threshold}"


@dataclass(frozen=True)
class GreaterThan:
    threshold: Quantity
    op = "gt"

    def holds(self, value, old=None) -> bool:
        q = _as_quantity(value)
        return q is not None and q.unit == self.threshold.unit and q.value > self.threshold.value

    def __str__(self):
        return f"> {self.threshold}"


@dataclass(frozen=True)
class Equals:
    value: str
    op = "eq"

    def holds(self, value, old=None) -> bool:
        return value is not None and value_text(value) == self.value

    def __str__(self):
        return f"= {self.value}"


@dataclass(frozen=True)
class ChangedBy:
    """Relative drift of at least ``delta`` from the previous value.

    Text values, and quantities whose unit changed, count as a full change
    whenever they differ.
    """
    delta: float
    op = "changed"

    def __post_init__(self):
        if not (0 < self.delta <= 1):
            raise ValueError(f"relative delta must be in (0, 1], got {self.delta}")

    def holds(self, value, old=None) -> bool:
        if value is None or old is None:
            return False
        return relative_change(old, value) >= self.delta

    def __str__(self):
        return f"changed by {format_number(self.delta)}"


def relative_change(old: Value, new: Value) -> float:
    qo, qn = _as_quantity(old), _as_quantity(new)
    if qo is not None and qn is not None and qo.unit == qn.unit:
        if qo.value == 0:
            return 0.0 if qn.value == 0 else 1.0
        return abs(qn.value - qo.value) / abs(qo.value)
    return 0.0 if value_text(old) == value_text(new) else 1.0


Predicate = Union[LessThan, GreaterThan, Equals, ChangedBy]
PREDICATE_OPS = {"lt": LessThan, "gt": GreaterThan, "eq": Equals, "changed": ChangedBy}


def make_predicate(op: str, value: str) -> Predicate:
    op = op.strip()
    if op in ("lt", "<"):
        return LessThan(Quantity.parse(value))
    if op in ("gt", ">"):
        return GreaterThan(Quantity.parse(value))
    if op in ("eq", "=", "=="):
        return Equals(value.strip())
    if op in ("changed", "changedBy"):
        return ChangedBy(float(value))
    raise ValueError(f"unknown predicate operator {op!r}")


def predicate_value(pred: Predicate) -> str:
    if isinstance(pred, (LessThan, GreaterThan)):
        return str(pred.threshold)
    if isinstance(pred, Equals):
        return pred.value
    return format_number(pred.delta)


@dataclass(frozen=True)
class Constraint:
    """A predicate applied to one field of an environment."""
    field: str
    predicate: Predicate

    def holds(self, env: EnvironmentDescriptor) -> bool:
        return self.predicate.holds(get_field(env, self.field))

    @property
    def dimension(self) -> str:
        return dimension_of(self.field)

    def to_element(self, tag="constraint") -> ET.Element:
        return ET.Element(tag, {"field": self.field, "op": self.predicate.op,
                                "value": predicate_value(self.predicate)})

    @classmethod
    def from_element(cls, node) -> "Constraint":
        try:
            return cls(node.attrib["field"], make_predicate(node.attrib["op"],
                                                            node.attrib["value"]))
        except KeyError as exc:
            raise MalformedXml(f"<{node.tag}> lacks attribute {exc}") from None
        except ValueError as exc:
            raise MalformedXml(str(exc)) from None

    def __str__(self):
        return f"{self.field} {self.predicate}"


# -- sensors and monitors --------------------------------------------------

@dataclass
class Sensor:
    id: str
    dimension: str
    node: str = "local"
    active: bool = False


@dataclass(frozen=True)
class Preference:
    """Interest in a dimension (``network``) or a single field (``network.bandwidth``)."""
    dimension: str
    predicate: Predicate
    subscriber: str

    def covers(self, path: str) -> bool:
        return path == self.dimension or path.startswith(self.dimension + ".")


@dataclass(frozen=True)
class Notification:
    subscriber: str
    monitor: str
    field: str
    old: Optional[Value]
    new: Value
    t: float = 0.0


@dataclass
class Monitor:
    id: str
    sensors: List[str] = field(default_factory=list)
    subscriptions: List[Preference] = field(default_factory=list)
    last: Dict[str, Value] = field(default_factory=dict)

    @property
    def active(self) -> bool:
        return bool(self.subscriptions)

    def filter(self, path: str, value: Value, old: Optional[Value] = None,
               t: float = 0.0) -> List[Notification]:
        """One notification per subscription whose predicate the sample satisfies."""
        if not self.active:
            raise InactiveMonitor(f"monitor {self.id} has no subscriptions")
        if old is None:
            old = self.last.get(path)
        self.last[path] = value
        return [Notification(p.subscriber, self.id, path, old, value, t)
                for p in self.subscriptions
                if p.covers(path) and p.predicate.holds(value, old)]


DEFAULT_DIMENSIONS = ("network", "cpu", "software")


class EnvironmentService:
    """Nodes, their sensors and monitors, and the sample log.

    The current view of a node is its administrator-provided baseline with
    every recorded sample applied in order; the latest sample for a field
    wins.  Samples from inactive sensors are never recorded.
    """

    def __init__(self):
        self.baselines: Dict[str, EnvironmentDescriptor] = {}
        self.logs: Dict[str, List[Tuple[float, str, Value]]] = {}
        self.sensors: Dict[str, Sensor] = {}
        self.monitors: Dict[str, Monitor] = {}
        self._sensor_monitor: Dict[str, str] = {}
        self._lock = threading.RLock()

    def register_node(self, baseline: EnvironmentDescriptor, node: Optional[str] = None,
                      with_default_monitors: bool = True) -> str:
        node = node or baseline.id
        with self._lock:
            self.baselines[node] = baseline
            self.logs.setdefault(node, [])
            if with_default_monitors:
                for dim in DEFAULT_DIMENSIONS:
                    if self.monitor_for(dim, node) is None:
                        self.add_monitor(f"{dim}-monitor" if node == baseline.id and
                                         f"{dim}-monitor" not in self.monitors
                                         else f"{dim}-monitor@{node}",
                                         [Sensor(f"{dim}-sensor@{node}", dim, node)])
        return node

    def add_monitor(self, monitor_id: str, sensors: Sequence[Sensor]) -> Monitor:
        with self._lock:
            if monitor_id in self.monitors:
                raise ValueError(f"monitor {monitor_id!r} already exists")
            monitor = Monitor(monitor_id)
            for sensor in sensors:
                if sensor.id in self.sensors:
                    raise ValueError(f"sensor {sensor.id!r} already exists")
                self.sensors[sensor.id] = sensor
                self._sensor_monitor[sensor.id] = monitor_id
                monitor.sensors.append(sensor.id)
            self.monitors[monitor_id] = monitor
            return monitor

    def monitor(self, monitor_id: str) -> Monitor:
        try:
            return self.monitors[monitor_id]
        except KeyError:
            raise UnknownMonitor(f"no monitor {monitor_id!r}") from None

    def monitor_for(self, dimension: str, node: Optional[str] = None) -> Optional[str]:
        """Id of the first monitor (by id) owning a sensor of ``dimension``."""
        for mid in sorted(self.monitors):
            for sid in self.monitors[mid].sensors:
                s = self.sensors[sid]
                if s.dimension == dimension and (node is None or s.node == node):
                    return mid
        return None

    def subscribe(self, monitor_id: str, pref: Preference) -> None:
        with self._lock:
            monitor = self.monitor(monitor_id)
            monitor.subscriptions.append(pref)
            for sid in monitor.sensors:
                self.sensors[sid].active = True

    def unsubscribe(self, monitor_id: str, subscriber: str) -> int:
        """Drop every preference of ``subscriber``; returns how many went."""
        with self._lock:
            monitor = self.monitor(monitor_id)
            kept = [p for p in monitor.subscriptions if p.subscriber != subscriber]
            removed = len(monitor.subscriptions) - len(kept)
            monitor.subscriptions = kept
            if not kept:
                for sid in monitor.sensors:
                    self.sensors[sid].active = False
            return removed

    def feed(self, sensor_id: str, t: float, path: str, value: Value) -> List[Notification]:
        """Push one sensor sample through its monitor."""
        with self._lock:
            sensor = self.sensors[sensor_id]
            if dimension_of(path) != sensor.dimension:
                raise ValueError(f"sensor {sensor_id} measures {sensor.dimension}, not {path}")
            if not sensor.active:
                return []
            old = get_field(self.current_environment(sensor.node), path)
            self.logs[sensor.node].append((t, path, value))
            return self.monitors[self._sensor_monitor[sensor_id]].filter(path, value, old, t)

    def sample(self, t: float, path: str, value: Value,
               node: Optional[str] = None) -> List[Notification]:
        """Route a sample to the sensor measuring its dimension, if any."""
        dim = dimension_of(path)
        for sid in sorted(self.sensors):
            s = self.sensors[sid]
            if s.dimension == dim and (node is None or s.node == node):
                return self.feed(sid, t, path, value)
        return []

    def current_environment(self, node: str) -> EnvironmentDescriptor:
        with self._lock:
            if node not in self.baselines:
                raise UnknownNode(f"no node {node!r}")
            return merge_samples(self.baselines[node], self.logs[node])


def merge_samples(baseline: EnvironmentDescriptor,
                  log: Iterable[Tuple[float, str, Value]]) -> EnvironmentDescriptor:
    env = baseline
    for _, path, value in log:
        env = with_field(env, path, value)
    return env


# -- sensor timelines ------------------------------------------------------

@dataclass(frozen=True)
class TimelineEvent:
    t: float
    field: str
    value: Value


_TIMELINE_LINE = re.compile(
    r"^t=(?P<t>\S+)\s+(?P<field>[A-Za-z_][\w-]*(?:\.[A-Za-z_][\w-]*)+)=(?P<value>.*)$")


def parse_timeline(text: str) -> List[TimelineEvent]:
    """Lines ``t=<seconds> <dimension>.<field>=<value>``; ``#`` starts a comment."""
    events = []
    last = -math.inf
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _TIMELINE_LINE.match(line)
        if m is None:
            raise ScenarioParseError(f"timeline line {lineno}: cannot parse {raw!r}")
        try:
            t = float(m.group("t"))
            value = parse_value(m.group("field"), m.group("value"))
        except ValueError as exc:
            raise ScenarioParseError(f"timeline line {lineno}: {exc}") from None
        if not math.isfinite(t) or t < last:
            raise ScenarioParseError(f"timeline line {lineno}: time goes backwards")
        last = t
        events.append(TimelineEvent(t, m.group("field"), value))
    return events


def format_timeline(events: Iterable[TimelineEvent]) -> str:
    return "".join(f"t={format_number(e.t)} {e.field}={value_text(e.value)}\n"
                   for e in events)
