"""Technical services as component assemblies.

A :class:`Personality` is one model variant of one technical service
(flat transactions v1.3, say), realised by a component template.  A
:class:`ServiceBundle` groups personalities for different services under
coherence constraints.  :func:`weave` encloses an application instance and
its personalities in a new composite, binds them and installs the
personalities' interceptors on the application.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .core.model import (BindingSpec, ComponentTemplate, Composite, InterfaceDecl,
                         Role, TemplateLibrary)
from .core.runtime import STARTED, Interceptor, Runtime
from .errors import (CompositionError, MalformedTemplate, MalformedXml,
                     MissingInterface, UnknownMember)


def version_tuple(version: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in version.split("."))
    except ValueError:
        raise ValueError(f"not a dotted numeric version: {version!r}") from None


@dataclass(frozen=True)
class Personality:
    id: str
    service: str
    model: str
    version: str
    template: str
    intercepts: Tuple[str, ...] = ()
    offer: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "intercepts", tuple(self.intercepts))
        version_tuple(self.version)

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.service, self.model, self.version)

    @property
    def major(self) -> int:
        return version_tuple(self.version)[0]

    def check(self, library: Mapping[str, ComponentTemplate]) -> None:
        template = library.get(self.template)
        if template is None:
            raise CompositionError(f"{self.id}: unknown template {self.template!r}")
        decl = template.interface(self.service)
        if decl is None or decl.role is not Role.SERVER:
            raise CompositionError(
                f"{self.id}: template {self.template} has no server interface {self.service!r}")

    def to_xml(self) -> str:
        root = ET.Element("personality", id=self.id)
        for tag in ("service", "model", "version", "template"):
            ET.SubElement(root, tag).text = getattr(self, tag)
        if self.offer is not None:
            ET.SubElement(root, "offer").text = self.offer
        intercepts = ET.SubElement(root, "intercepts")
        for name in self.intercepts:
            ET.SubElement(intercepts, "interface").text = name
        ET.indent(root)
        return ET.tostring(root, encoding="unicode") + "\n"

    @classmethod
    def from_xml(cls, text: str) -> "Personality":
        try:
            root = ET.fromstring(text)
        except ET.ParseError as exc:
            raise MalformedXml(str(exc)) from None
        if root.tag != "personality":
            raise MalformedXml(f"expected <personality>, got <{root.tag}>")

        def text_of(tag, default=None):
            node = root.find(tag)
            if node is None or not (node.text or "").strip():
                if default is not None:
                    return default
                raise MalformedXml(f"<personality> lacks <{tag}>")
            return node.text.strip()

        service = text_of("service")
        pid = root.get("id") or text_of("template")
        intercepts = tuple((n.text or "").strip() for n in root.iterfind("intercepts/interface"))
        offer = root.find("offer")
        try:
            return cls(pid, service, text_of("model"), text_of("version"),
                       text_of("template"), intercepts,
                       offer.text.strip() if offer is not None and offer.text else None)
        except ValueError as exc:
            raise MalformedXml(str(exc)) from None


class PersonalityRegistry(dict):
    """Personalities by id; (service, model, version) must stay unique."""

    def register(self, personality: Personality) -> Personality:
        for other in self.values():
            if other.id != personality.id and other.key == personality.key:
                raise CompositionError(
                    f"{personality.id} duplicates {other.id} {personality.key}")
        self[personality.id] = personality
        return personality


def assemble(elementary: Sequence[ComponentTemplate], descriptor: Personality,
             library: TemplateLibrary,
             bindings: Iterable[BindingSpec] = ()) -> Personality:
    """Build the composite template realising ``descriptor``.

    Every client interface of an elementary template is wired to the first
    other elementary template serving an interface of the same name,
    unless ``bindings`` already wires it.  The composite exports only the
    service's server interface and is registered in ``library`` under
    ``descriptor.template``.
    """
    elementary = list(elementary)
    if not elementary:
        raise CompositionError(f"{descriptor.id}: no elementary components")
    ids = [t.id for t in elementary]
    if len(set(ids)) != len(ids):
        raise CompositionError(f"{descriptor.id}: elementary components repeat")
    if descriptor.template in ids:
        raise CompositionError(f"{descriptor.id}: assembly id clashes with a part")

    wiring = list(bindings)
    wired = {(b.client_child, b.client_iface) for b in wiring}
    for t in elementary:
        for decl in t.clients():
            if (t.id, decl.name) in wired:
                continue
            provider = next((o for o in elementary if o.id != t.id and _serves(o, decl)), None)
            if provider is None:
                if decl.optional:
                    continue
                raise CompositionError(f"{descriptor.id}: nothing serves {t.id}.{decl.name}")
            wiring.append(BindingSpec(t.id, decl.name, provider.id, decl.name))

    exported = next((t.interface(descriptor.service) for t in elementary
                     if _is_server(t.interface(descriptor.service))), None)
    if exported is None:
        raise CompositionError(
            f"{descriptor.id}: no part serves the {descriptor.service!r} interface")

    composite = ComponentTemplate(descriptor.template, (exported,),
                                  Composite(tuple(ids), tuple(wiring)))
    scratch = TemplateLibrary(library)
    try:
        for t in elementary:
            scratch.add(t)
        scratch.add(composite)
        scratch.check(composite.id)
    except MalformedTemplate as exc:
        raise CompositionError(f"{descriptor.id}: {exc}") from None
    for t in elementary:
        library.add(t)
    library.add(composite, replace=True)
    return descriptor


def _serves(template, client_decl):
    decl = template.interface(client_decl.name)
    return _is_server(decl) and decl.accepts(client_decl)


def _is_server(decl):
    return decl is not None and decl.role is Role.SERVER


# -- bundles ---------------------------------------------------------------

@dataclass(frozen=True)
class Requires:
    service: str
    needed: str

    def violation(self, members: Sequence[Personality]) -> Optional[str]:
        services = {p.service for p in members}
        if self.service in services and self.needed not in services:
            return f"{self.service} requires {self.needed}"
        return None


@dataclass(frozen=True)
class Excludes:
    model_a: str
    model_b: str

    def violation(self, members: Sequence[Personality]) -> Optional[str]:
        models = {p.model for p in members}
        if self.model_a in models and self.model_b in models:
            return f"models {self.model_a} and {self.model_b} exclude each other"
        return None


@dataclass(frozen=True)
class SameVersionMajor:
    service_a: str
    service_b: str

    def violation(self, members: Sequence[Personality]) -> Optional[str]:
        by_service = {p.service: p for p in members}
        a, b = by_service.get(self.service_a), by_service.get(self.service_b)
        if a is not None and b is not None and a.major != b.major:
            return f"{a.id} v{a.version} and {b.id} v{b.version} differ in major version"
        return None


CoherenceConstraint = (Requires, Excludes, SameVersionMajor)


@dataclass(frozen=True)
class Violation:
    constraint: object
    reason: str


@dataclass(frozen=True)
class ServiceBundle:
    id: str
    members: frozenset
    coherence: Tuple[object, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        object.__setattr__(self, "coherence", tuple(self.coherence))


def check_coherence(members: Sequence[Personality],
                    constraints: Iterable[object]) -> List[Violation]:
    violations = []
    seen: Dict[str, str] = {}
    for p in sorted(members, key=lambda p: p.id):
        if p.service in seen:
            violations.append(Violation(
                None, f"{seen[p.service]} and {p.id} both provide {p.service}"))
        else:
            seen[p.service] = p.id
    for constraint in constraints:
        reason = constraint.violation(members)
        if reason is not None:
            violations.append(Violation(constraint, reason))
    return violations


def validate_bundle(bundle: ServiceBundle,
                    registry: Mapping[str, Personality]) -> List[Violation]:
    """Every violated rule of ``bundle``; an empty list means coherent."""
    missing = sorted(m for m in bundle.members if m not in registry)
    if missing:
        raise UnknownMember(f"{bundle.id}: unknown members {', '.join(missing)}")
    return check_coherence([registry[m] for m in bundle.members], bundle.coherence)


# -- weaving ---------------------------------------------------------------

class ServiceInterceptor(Interceptor):
    """Routes intercepted application calls to a personality's hooks.

    The hooks are ``before_call``/``after_call`` on the primitive content
    that serves the personality's service interface; a personality without
    them is pass-through.
    """

    def __init__(self, service: str, content):
        self.service = service
        self.content = content
        self._before = getattr(content, "before_call", None)
        self._after = getattr(content, "after_call", None)

    def before(self, instance, interface, op, args):
        if self._before is not None:
            self._before(instance, interface, op, args)

    def after(self, instance, interface, op, args, result):
        if self._after is not None:
            return self._after(instance, interface, op, args, result)
        return result

    def __repr__(self):
        return f"<ServiceInterceptor {self.service}>"


@dataclass
class ServiceSlot:
    personality: Personality
    instance: str
    binding: Optional[str] = None
    interceptors: List[Tuple[str, Interceptor]] = field(default_factory=list)


@dataclass
class Composition:
    """Result of :func:`weave`: the enclosing composite and what it holds."""
    id: str
    app: str
    slots: Dict[str, ServiceSlot] = field(default_factory=dict)

    def personality(self, service: str) -> Personality:
        return self.slots[service].personality

    @property
    def binding_ids(self) -> List[str]:
        return [s.binding for s in self.slots.values() if s.binding is not None]


def _plan(runtime: Runtime, app_id: str, personality: Personality,
          library: Mapping[str, ComponentTemplate]) -> bool:
    """Check ``personality`` can be woven on the app; True if it gets bound."""
    app = runtime.get(app_id)
    personality.check(library)
    served = library[personality.template].interface(personality.service)
    wanted = app.interfaces.get(personality.service)
    if wanted is not None and wanted.role is Role.CLIENT:
        if not served.accepts(wanted):
            raise CompositionError(
                f"{personality.id} cannot serve every op of {app_id}.{wanted.name}")
        return True
    if not personality.intercepts:
        raise MissingInterface(
            f"{app_id} has no client interface {personality.service!r} for {personality.id}")
    for name in personality.intercepts:
        if name not in app.interfaces:
            raise MissingInterface(f"{personality.id} intercepts {name!r}, absent on {app_id}")
    return False


def _content_serving(runtime: Runtime, instance_id: str, interface: str):
    inst = runtime.get(instance_id)
    while inst.children is not None:
        inst = runtime.get(inst.delegates[interface])
    return inst.behavior


def _attach(runtime, comp: Composition, personality: Personality, library, bound: bool):
    iid = f"{comp.id}/{personality.id}"
    inst = runtime.instantiate(personality.template, library, instance_id=iid)
    runtime.add_child(comp.id, inst.id)
    slot = ServiceSlot(personality, inst.id)
    if bound:
        slot.binding = runtime.bind((comp.app, personality.service),
                                    (inst.id, personality.service)).id
    content = _content_serving(runtime, inst.id, personality.service)
    for name in personality.intercepts:
        interceptor = ServiceInterceptor(personality.service, content)
        runtime.add_interceptor(comp.app, name, interceptor)
        slot.interceptors.append((name, interceptor))
    if runtime.get(comp.id).state is STARTED:
        runtime.start(inst.id)
    comp.slots[personality.service] = slot
    return slot


def _detach(runtime, comp: Composition, service: str):
    slot = comp.slots.pop(service)
    for name, interceptor in slot.interceptors:
        runtime.remove_interceptor(comp.app, name, interceptor)
    if slot.binding is not None:
        runtime.unbind(slot.binding)
    if runtime.get(slot.instance).state is STARTED:
        runtime.stop(slot.instance)
    runtime.remove_child(comp.id, slot.instance)
    runtime.destroy(slot.instance)
    return slot


def weave(runtime: Runtime, app_id: str, personalities: Sequence[Personality],
          library: Mapping[str, ComponentTemplate],
          composition_id: Optional[str] = None) -> Composition:
    """Enclose ``app_id`` with its personalities in a new composite.

    The composite re-exports the app's interfaces unchanged; client
    interfaces satisfied internally become optional on the composite.
    A started app ends up inside a started composite.
    """
    app = runtime.get(app_id)
    if app.parent is not None:
        raise CompositionError(f"{app_id} is already inside {app.parent}")
    services = [p.service for p in personalities]
    if len(set(services)) != len(services):
        raise CompositionError("two personalities for the same service")
    plan = [(p, _plan(runtime, app_id, p, library)) for p in personalities]
    for p, bound in plan:
        if bound and runtime.binding_for(app_id, p.service) is not None:
            raise CompositionError(f"{app_id}.{p.service} is already bound")

    bound_names = {p.service for p, bound in plan if bound}
    exported = []
    for decl in app.interfaces.values():
        if decl.role is Role.CLIENT and decl.name in bound_names and not decl.optional:
            decl = InterfaceDecl(decl.name, decl.role, decl.signature, optional=True)
        exported.append(decl)

    with runtime.exclusive():
        if composition_id is None:
            composition_id = f"{app_id}+services"
            n = 1
            while composition_id in runtime.instances:
                n += 1
                composition_id = f"{app_id}+services{n}"
        was_started = app.state is STARTED
        if was_started:
            with runtime.quiesce([app_id]):
                runtime.stop(app_id)
        shell = runtime.create_composite(exported, [app_id], template=f"{app.template}+services",
                                         instance_id=composition_id)
        comp = Composition(shell.id, app_id)
        try:
            for p, bound in plan:
                _attach(runtime, comp, p, library, bound)
        except Exception:
            for service in list(comp.slots):
                _detach(runtime, comp, service)
            runtime.remove_child(shell.id, app_id)
            runtime.destroy(shell.id)
            if was_started:
                runtime.start(app_id)
            raise
        if was_started:
            runtime.start(shell.id)
    return comp


def swap(runtime: Runtime, comp: Composition, new: Personality,
         library: Mapping[str, ComponentTemplate], timeout: Optional[float] = 10.0):
    """Replace the personality bound for ``new.service``, quiescently.

    Returns the personality that was replaced.
    """
    old = comp.slots.get(new.service)
    if old is None:
        raise CompositionError(f"{comp.id} has no {new.service!r} personality to replace")
    if old.personality.id == new.id:
        return old.personality
    bound = _plan(runtime, comp.app, new, library)
    with runtime.quiesce([comp.app, old.instance], timeout):
        _detach(runtime, comp, new.service)
        try:
            _attach(runtime, comp, new, library, bound)
        except Exception:
            _attach(runtime, comp, old.personality, library, old.binding is not None)
            raise
    return old.personality


def unweave(runtime: Runtime, comp: Composition,
            timeout: Optional[float] = 10.0) -> str:
    """Dissolve the composition; the app is left stopped at top level."""
    with runtime.quiesce([comp.app] + [s.instance for s in comp.slots.values()], timeout):
        shell = runtime.get(comp.id)
        if shell.state is STARTED:
            runtime.stop(comp.id)
        for service in list(comp.slots):
            _detach(runtime, comp, service)
        runtime.remove_child(comp.id, comp.app)
        runtime.destroy(comp.id)
    return comp.app
