"""Naming and trading registry of personalities.

Entries form a strict tree: service types at the top, templates under a
type, instances under a template::

    /transaction
    /transaction/flat            template, carries ADL and an offer
    /transaction/flat/flat-tx    instance, carries an offer and a personality

An export query ranks every compatible instance by adaptation rules first,
then by how much of the offer's ideal environment holds, then by id.
When no instance fits but a template does, the best template is
instantiated and the new instance returned.
"""
from __future__ import annotations

import json
import re
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .environment import Constraint, EnvironmentDescriptor
from .errors import (CycleDetected, DuplicateId, InUse, LevelMismatch, MalformedXml,
                     MissingOffer, NoMatch, OfferMismatch, UnknownPath)
from .personality import Personality, version_tuple

TYPE, TEMPLATE, INSTANCE = "type", "template", "instance"
_ID = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.-]*$")


# -- half-contracts --------------------------------------------------------

@dataclass(frozen=True)
class OfferDescriptor:
    """What a personality provides and the environment it is best suited to."""
    personality: str
    service: str
    model: str
    version: str
    ideal: Tuple[Constraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ideal", tuple(self.ideal))
        version_tuple(self.version)

    @property
    def triple(self):
        return (self.service, self.model, self.version)

    def to_element(self) -> ET.Element:
        root = ET.Element("offer", personality=self.personality)
        for tag in ("service", "model", "version"):
            ET.SubElement(root, tag).text = getattr(self, tag)
        ideal = ET.SubElement(root, "ideal")
        for c in self.ideal:
            ideal.append(c.to_element())
        return root

    def to_xml(self) -> str:
        root = self.to_element()
        ET.indent(root)
        return ET.tostring(root, encoding="unicode") + "\n"

    @classmethod
    def from_xml(cls, text: str) -> "OfferDescriptor":
        root = _parse(text, "offer")
        values = {}
        for tag in ("service", "model", "version"):
            node = root.find(tag)
            if node is None or not (node.text or "").strip():
                raise MalformedXml(f"<offer> lacks <{tag}>")
            values[tag] = node.text.strip()
        ideal = tuple(Constraint.from_element(n) for n in root.iterfind("ideal/constraint"))
        try:
            return cls(root.get("personality", ""), values["service"], values["model"],
                       values["version"], ideal)
        except ValueError as exc:
            raise MalformedXml(str(exc)) from None

    def for_personality(self, personality_id: str) -> "OfferDescriptor":
        return OfferDescriptor(personality_id, self.service, self.model, self.version, self.ideal)


@dataclass(frozen=True)
class Requirement:
    service: str
    model: Optional[str] = None
    min_version: Optional[str] = None

    def __post_init__(self):
        if self.min_version is not None:
            version_tuple(self.min_version)

    def satisfied_by(self, offer: OfferDescriptor) -> bool:
        if offer.service != self.service:
            return False
        if self.model is not None and offer.model != self.model:
            return False
        if self.min_version is not None and \
                version_tuple(offer.version) < version_tuple(self.min_version):
            return False
        return True


@dataclass(frozen=True)
class NeedDescriptor:
    """What an application component requires of the platform."""
    requester: str
    required: Tuple[Requirement, ...]
    constraints: Tuple[Constraint, ...] = ()
    preferences: Tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("required", "constraints", "preferences"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.required:
            raise ValueError(f"need of {self.requester} requires no service")
        services = [r.service for r in self.required]
        if len(set(services)) != len(services):
            raise ValueError(f"need of {self.requester} names a service twice")

    @property
    def services(self) -> List[str]:
        return [r.service for r in self.required]

    def requirement(self, service: str) -> Requirement:
        for r in self.required:
            if r.service == service:
                return r
        raise KeyError(service)

    def to_xml(self) -> str:
        root = ET.Element("need", requester=self.requester)
        for r in self.required:
            attrs = {"service": r.service}
            if r.model is not None:
                attrs["model"] = r.model
            if r.min_version is not None:
                attrs["minVersion"] = r.min_version
            ET.SubElement(root, "requires", attrs)
        for c in self.constraints:
            root.append(c.to_element())
        for p in self.preferences:
            ET.SubElement(root, "preference", name=p)
        ET.indent(root)
        return ET.tostring(root, encoding="unicode") + "\n"

    @classmethod
    def from_xml(cls, text: str, requester: Optional[str] = None) -> "NeedDescriptor":
        root = _parse(text, "need")
        try:
            required = tuple(Requirement(n.attrib["service"], n.get("model"), n.get("minVersion"))
                             for n in root.iterfind("requires"))
        except KeyError:
            raise MalformedXml("<requires> lacks a service attribute") from None
        except ValueError as exc:
            raise MalformedXml(str(exc)) from None
        constraints = tuple(Constraint.from_element(n) for n in root.iterfind("constraint"))
        preferences = tuple(n.get("name", "") for n in root.iterfind("preference"))
        try:
            return cls(requester or root.get("requester", ""), required, constraints, preferences)
        except ValueError as exc:
            raise MalformedXml(str(exc)) from None


def _parse(text, tag):
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from None
    if root.tag != tag:
        raise MalformedXml(f"expected <{tag}>, got <{root.tag}>")
    return root


@dataclass(frozen=True)
class MatchResult:
    compatible: bool
    score: float


def match(offer: OfferDescriptor, need: NeedDescriptor, env: EnvironmentDescriptor,
          service: Optional[str] = None) -> MatchResult:
    """Compatibility of an offer with a need in ``env``, and its environment score.

    With ``service`` given, only that requirement of the need is considered.
    """
    required = need.required if service is None else (need.requirement(service),)
    compatible = any(r.satisfied_by(offer) for r in required) and \
        all(c.holds(env) for c in need.constraints)
    if offer.ideal:
        score = sum(c.holds(env) for c in offer.ideal) / len(offer.ideal)
    else:
        score = 1.0
    return MatchResult(compatible, score)


# -- adaptation rules ------------------------------------------------------

@dataclass(frozen=True)
class AdaptationRule:
    """Within ``scope``, implementation ``better`` gives higher quality than ``worse``."""
    scope: str
    better: str
    worse: str
    author: str = "administrator"
    id: str = ""

    def __post_init__(self):
        if self.author not in ("developer", "administrator"):
            raise ValueError(f"rule author must be developer or administrator, not {self.author}")
        if not self.id:
            object.__setattr__(self, "id", f"{self.scope}:{self.better}>{self.worse}")

    def __str__(self):
        return f"rule {self.scope}: {self.better} > {self.worse}"


_RULE_LINE = re.compile(r"^rule\s+(?P<scope>\S+?)\s*:\s*(?P<a>\S+)\s*>\s*(?P<b>\S+)"
                        r"(?:\s+by\s+(?P<author>developer|administrator))?$")


def parse_rules(text: str) -> List[AdaptationRule]:
    """Lines ``rule <scope>: <idA> > <idB>`` with an optional ``by <author>``."""
    rules = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _RULE_LINE.match(line)
        if m is None:
            raise ValueError(f"rules line {lineno}: cannot parse {raw!r}")
        rules.append(AdaptationRule(m.group("scope"), m.group("a"), m.group("b"),
                                    m.group("author") or "administrator"))
    return rules


def rule_closure(rules: Iterable[AdaptationRule], scope: str) -> Dict[str, Set[str]]:
    """Every name mapped to the names it is transitively better than."""
    below: Dict[str, Set[str]] = {}
    for r in rules:
        if r.scope == scope:
            below.setdefault(r.better, set()).add(r.worse)
    closure: Dict[str, Set[str]] = {}
    for name in below:
        seen, todo = set(), list(below[name])
        while todo:
            n = todo.pop()
            if n not in seen:
                seen.add(n)
                todo.extend(below.get(n, ()))
        closure[name] = seen
    return closure


def rule_layers(items: Sequence[Tuple[str, str, Sequence[str]]],
                rules: Iterable[AdaptationRule]) -> Dict[str, int]:
    """Rule rank of each candidate ``(id, scope, names)``; lower ranks first.

    A candidate beats another of the same scope when one of its names is
    transitively better than one of the other's names.  The rank is the
    longest chain of candidates strictly above it, so whenever A beats B
    without B also beating A, A ranks first.  Candidates that beat each
    other (rules naming an instance and its template can conflict) share
    a rank.
    """
    rules = list(rules)
    closures = {scope: rule_closure(rules, scope) for scope in {s for _, s, _ in items}}
    beats: Dict[str, Set[str]] = {}
    for cid, scope, names in items:
        below = set().union(*(closures[scope].get(n, ()) for n in names))
        beats[cid] = {oid for oid, s, other in items
                      if oid != cid and s == scope and below.intersection(other)}
    reach: Dict[str, Set[str]] = {}
    for cid in beats:
        seen, todo = set(), list(beats[cid])
        while todo:
            n = todo.pop()
            if n not in seen:
                seen.add(n)
                todo.extend(beats[n])
        reach[cid] = seen
    above = {cid: {o for o in reach if cid in reach[o] and o not in reach[cid]}
             for cid in reach}
    layer: Dict[str, int] = {}

    def visit(cid):
        if cid not in layer:
            layer[cid] = 1 + max((visit(o) for o in above[cid]), default=-1)
        return layer[cid]

    for cid in above:
        visit(cid)
    return layer


# -- the tree --------------------------------------------------------------

@dataclass
class InstanceNode:
    id: str
    template: "TemplateNode"
    offer: OfferDescriptor
    personality: Personality

    @property
    def path(self):
        return f"{self.template.path}/{self.id}"


@dataclass
class TemplateNode:
    id: str
    type: "TypeNode"
    offer: OfferDescriptor
    personality: Personality
    adl: str = ""
    instances: Dict[str, InstanceNode] = field(default_factory=dict)

    @property
    def path(self):
        return f"{self.type.path}/{self.id}"


@dataclass
class TypeNode:
    id: str
    adl: str = ""
    templates: Dict[str, TemplateNode] = field(default_factory=dict)

    @property
    def path(self):
        return f"/{self.id}"


class Directory:
    """The type → template → instance tree plus adaptation rules.

    One re-entrant lock serialises every operation, so an export query that
    instantiates a template does so atomically with respect to other
    queries.
    """

    def __init__(self):
        self.types: Dict[str, TypeNode] = {}
        self.rules: List[AdaptationRule] = []
        self.holders: Dict[str, Set[str]] = {}
        self._lock = threading.RLock()

    # lookup

    def resolve(self, path: str):
        parts = [p for p in path.strip().split("/") if p]
        node = None
        try:
            if parts:
                node = self.types[parts[0]]
            if len(parts) > 1:
                node = node.templates[parts[1]]
            if len(parts) > 2:
                node = node.instances[parts[2]]
        except KeyError:
            raise UnknownPath(f"no entry at {path!r}") from None
        if len(parts) > 3:
            raise UnknownPath(f"no entry at {path!r}")
        return node

    def templates(self) -> List[TemplateNode]:
        return [t for ty in self.types.values() for t in ty.templates.values()]

    def instances(self) -> List[InstanceNode]:
        return [i for t in self.templates() for i in t.instances.values()]

    def instance(self, instance_id: str) -> InstanceNode:
        for i in self.instances():
            if i.id == instance_id:
                return i
        raise UnknownPath(f"no instance {instance_id!r}")

    def size(self) -> Tuple[int, int, int]:
        return (len(self.types), len(self.templates()), len(self.instances()))

    # administration

    def import_(self, kind: str, entry_id: str, parent: str = "/",
                offer: Optional[OfferDescriptor] = None, adl: str = "",
                personality: Optional[Personality] = None) -> str:
        """Insert a node under ``parent``; returns its path.

        Template ids and instance ids are unique across the whole tree, so
        rules and contracts can name them without a path.
        """
        with self._lock:
            if not _ID.match(entry_id):
                raise ValueError(f"bad entry id {entry_id!r}")
            parent_node = self.resolve(parent)
            if kind == TYPE:
                if parent_node is not None:
                    raise LevelMismatch(f"type {entry_id} must sit at the root")
                if entry_id in self.types:
                    raise DuplicateId(f"type {entry_id} already exists")
                node = self.types[entry_id] = TypeNode(entry_id, adl)
                return node.path
            if kind == TEMPLATE:
                if not isinstance(parent_node, TypeNode):
                    raise LevelMismatch(f"template {entry_id} must sit under a type")
                if any(t.id == entry_id for t in self.templates()):
                    raise DuplicateId(f"template {entry_id} already exists")
                if offer is None:
                    raise MissingOffer(f"template {entry_id} carries no offer")
                if offer.service != parent_node.id:
                    raise OfferMismatch(
                        f"offer of {entry_id} is for {offer.service}, not {parent_node.id}")
                if personality is None:
                    personality = Personality(entry_id, offer.service, offer.model,
                                              offer.version, entry_id)
                if personality.key != offer.triple:
                    raise OfferMismatch(f"offer of {entry_id} disagrees with {personality.id}")
                node = TemplateNode(entry_id, parent_node, offer.for_personality(personality.id),
                                    personality, adl)
                parent_node.templates[entry_id] = node
                return node.path
            if kind == INSTANCE:
                if not isinstance(parent_node, TemplateNode):
                    raise LevelMismatch(f"instance {entry_id} must sit under a template")
                if any(i.id == entry_id for i in self.instances()):
                    raise DuplicateId(f"instance {entry_id} already exists")
                if offer is None:
                    offer = parent_node.offer
                if offer.triple != parent_node.offer.triple:
                    raise OfferMismatch(
                        f"offer of {entry_id} disagrees with template {parent_node.id}")
                node = InstanceNode(entry_id, parent_node,
                                    offer.for_personality(parent_node.personality.id),
                                    parent_node.personality)
                parent_node.instances[entry_id] = node
                return node.path
            raise LevelMismatch(f"unknown entry kind {kind!r}")

    def remove(self, path: str) -> None:
        with self._lock:
            node = self.resolve(path)
            if node is None:
                raise UnknownPath("the root cannot be removed")
            busy = sorted(i.id for i in _instances_under(node) if self.holders.get(i.id))
            if busy:
                raise InUse(f"{path} holds instances bound in contracts: {', '.join(busy)}")
            if isinstance(node, TypeNode):
                del self.types[node.id]
            elif isinstance(node, TemplateNode):
                del node.type.templates[node.id]
            else:
                del node.template.instances[node.id]

    def add_rule(self, rule: AdaptationRule) -> None:
        with self._lock:
            if rule.better == rule.worse or \
                    self._reaches(rule.scope, rule.worse, rule.better):
                raise CycleDetected(f"{rule} would close a cycle")
            if rule not in self.rules:
                self.rules.append(rule)

    def _reaches(self, scope, start, goal) -> bool:
        edges: Dict[str, List[str]] = {}
        for r in self.rules:
            if r.scope == scope:
                edges.setdefault(r.better, []).append(r.worse)
        seen, todo = set(), [start]
        while todo:
            name = todo.pop()
            if name == goal:
                return True
            if name not in seen:
                seen.add(name)
                todo.extend(edges.get(name, ()))
        return False

    def acquire(self, instance_id: str, holder: str) -> None:
        with self._lock:
            self.instance(instance_id)
            self.holders.setdefault(instance_id, set()).add(holder)

    def release(self, instance_id: str, holder: str) -> None:
        with self._lock:
            held = self.holders.get(instance_id)
            if held:
                held.discard(holder)
                if not held:
                    del self.holders[instance_id]

    # trading

    def rank(self, need: NeedDescriptor, env: EnvironmentDescriptor,
             service: Optional[str] = None) -> List[Tuple[InstanceNode, float]]:
        """Compatible instances in rank order, each with its score."""
        with self._lock:
            found = []
            for inst in self.instances():
                m = match(inst.offer, need, env, service)
                if m.compatible:
                    found.append((inst, m.score))
            layers = rule_layers([(i.id, i.offer.service, (i.id, i.template.id))
                                  for i, _ in found], self.rules)
            found.sort(key=lambda f: (layers[f[0].id], -f[1], f[0].id))
            return found

    def export_query(self, need: NeedDescriptor, env: EnvironmentDescriptor,
                     service: Optional[str] = None) -> List[InstanceNode]:
        with self._lock:
            ranked = [inst for inst, _ in self.rank(need, env, service)]
            if ranked:
                return ranked
            candidates = []
            for t in self.templates():
                m = match(t.offer, need, env, service)
                if m.compatible:
                    candidates.append((t, m.score))
            if not candidates:
                wanted = service or ", ".join(need.services)
                who = need.requester or "the need"
                raise NoMatch(f"nothing in the directory satisfies {who} for {wanted}",
                              service=wanted, contract=need.requester)
            layers = rule_layers([(t.id, t.offer.service, (t.id,)) for t, _ in candidates],
                                 self.rules)
            template = min(candidates, key=lambda c: (layers[c[0].id], -c[1], c[0].id))[0]
            return [self.instantiate(template)]

    def instantiate(self, template: TemplateNode) -> InstanceNode:
        with self._lock:
            taken = {i.id for i in self.instances()}
            n = 1
            while f"{template.id}-{n}" in taken:
                n += 1
            path = self.import_(INSTANCE, f"{template.id}-{n}", template.path)
            return self.resolve(path)

    # persistence

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "types": [{
                    "id": ty.id, "adl": ty.adl,
                    "templates": [{
                        "id": t.id, "adl": t.adl, "offer": t.offer.to_xml(),
                        "personality": t.personality.to_xml(),
                        "instances": [{"id": i.id, "offer": i.offer.to_xml()}
                                      for i in t.instances.values()],
                    } for t in ty.templates.values()],
                } for ty in self.types.values()],
                "rules": [{"scope": r.scope, "better": r.better, "worse": r.worse,
                           "author": r.author} for r in self.rules],
            }

    @classmethod
    def from_dict(cls, data: dict) -> "Directory":
        d = cls()
        for ty in data.get("types", ()):
            d.import_(TYPE, ty["id"], "/", adl=ty.get("adl", ""))
            for t in ty.get("templates", ()):
                d.import_(TEMPLATE, t["id"], f"/{ty['id']}",
                          OfferDescriptor.from_xml(t["offer"]), t.get("adl", ""),
                          Personality.from_xml(t["personality"]))
                for i in t.get("instances", ()):
                    d.import_(INSTANCE, i["id"], f"/{ty['id']}/{t['id']}",
                              OfferDescriptor.from_xml(i["offer"]))
        for r in data.get("rules", ()):
            d.add_rule(AdaptationRule(r["scope"], r["better"], r["worse"],
                                      r.get("author", "administrator")))
        return d

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Directory":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def show(self) -> str:
        lines = []
        for ty in self.types.values():
            lines.append(ty.path)
            for t in ty.templates.values():
                o = t.offer
                lines.append(f"{t.path}  [{o.service} {o.model} {o.version}]")
                for i in t.instances.values():
                    held = " in-use" if self.holders.get(i.id) else ""
                    lines.append(f"{i.path}{held}")
        lines.extend(str(r) for r in self.rules)
        return "\n".join(lines) + ("\n" if lines else "")


def _instances_under(node) -> Sequence[InstanceNode]:
    if isinstance(node, InstanceNode):
        return [node]
    if isinstance(node, TemplateNode):
        return list(node.instances.values())
    return [i for t in node.templates.values() for i in t.instances.values()]
