"""Static description of components: interfaces, templates and bindings.

A template is either *primitive* (its content is a behavior object looked up
by id when instantiated) or *composite* (its content is a list of
sub-templates plus the bindings wiring them together).  Composites delegate
by name: a server interface ``s`` of the composite is served by the first
child, in ``contains`` order, that has a server interface ``s``; a child
client interface that is not bound internally is forwarded to the
composite's own client interface of the same name.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple, Union

from ..errors import MalformedTemplate


class Role(str, enum.Enum):
    CLIENT = "client"
    SERVER = "server"


class LifecycleState(str, enum.Enum):
    CREATED = "Created"
    STARTED = "Started"
    STOPPED = "Stopped"


@dataclass(frozen=True, order=True)
class Operation:
    name: str
    arity: int = 0

    def __str__(self):
        return f"{self.name}/{self.arity}"


@dataclass(frozen=True)
class InterfaceDecl:
    name: str
    role: Role
    signature: Tuple[Operation, ...]
    optional: bool = False

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        sig = tuple(op if isinstance(op, Operation) else Operation(*op)
                    for op in self.signature)
        object.__setattr__(self, "signature", sig)
        if not sig:
            raise MalformedTemplate(f"interface {self.name!r} has an empty signature")
        if len(set(sig)) != len(sig):
            raise MalformedTemplate(f"interface {self.name!r} repeats an operation")
        if self.optional and self.role is not Role.CLIENT:
            raise MalformedTemplate(f"server interface {self.name!r} cannot be optional")

    @property
    def ops(self) -> frozenset:
        return frozenset(self.signature)

    def accepts(self, other: "InterfaceDecl") -> bool:
        """True if this (server) interface can serve every op of ``other``."""
        return other.ops <= self.ops


def server(name, *ops) -> InterfaceDecl:
    return InterfaceDecl(name, Role.SERVER, tuple(_op(o) for o in ops))


def client(name, *ops, optional=False) -> InterfaceDecl:
    return InterfaceDecl(name, Role.CLIENT, tuple(_op(o) for o in ops), optional)


def _op(spec) -> Operation:
    if isinstance(spec, Operation):
        return spec
    if isinstance(spec, str):
        name, _, arity = spec.partition("/")
        return Operation(name, int(arity) if arity else 0)
    return Operation(*spec)


@dataclass(frozen=True)
class Primitive:
    behavior: str


@dataclass(frozen=True)
class BindingSpec:
    """Internal binding ``client_child.client_iface -> server_child.server_iface``."""
    client_child: str
    client_iface: str
    server_child: str
    server_iface: str

    def __str__(self):
        return (f"{self.client_child}.{self.client_iface} -> "
                f"{self.server_child}.{self.server_iface}")


@dataclass(frozen=True)
class Composite:
    children: Tuple[str, ...]
    bindings: Tuple[BindingSpec, ...] = ()


Content = Union[Primitive, Composite]


@dataclass(frozen=True)
class ComponentTemplate:
    id: str
    interfaces: Tuple[InterfaceDecl, ...]
    content: Content

    def __post_init__(self):
        object.__setattr__(self, "interfaces", tuple(self.interfaces))
        if isinstance(self.content, Composite):
            object.__setattr__(self, "content", Composite(
                tuple(self.content.children), tuple(self.content.bindings)))
        names = [i.name for i in self.interfaces]
        if len(set(names)) != len(names):
            raise MalformedTemplate(f"template {self.id!r} declares an interface twice")

    @property
    def is_composite(self) -> bool:
        return isinstance(self.content, Composite)

    def interface(self, name: str) -> Optional[InterfaceDecl]:
        for decl in self.interfaces:
            if decl.name == name:
                return decl
        return None

    def servers(self):
        return [i for i in self.interfaces if i.role is Role.SERVER]

    def clients(self):
        return [i for i in self.interfaces if i.role is Role.CLIENT]

    @property
    def adl(self) -> str:
        from .adl import serialize_adl
        return serialize_adl([self])


class TemplateLibrary(dict):
    """Mapping of template id to :class:`ComponentTemplate`."""

    def __init__(self, templates: Union[Sequence[ComponentTemplate],
                                        Mapping[str, ComponentTemplate]] = ()):
        super().__init__()
        if isinstance(templates, Mapping):
            templates = templates.values()
        for t in templates:
            self.add(t)

    def add(self, template: ComponentTemplate, replace=False) -> ComponentTemplate:
        if not replace and template.id in self and self[template.id] != template:
            raise MalformedTemplate(f"template {template.id!r} already defined differently")
        self[template.id] = template
        return template

    def update_from_adl(self, text: str):
        from .adl import parse_adl
        parsed = parse_adl(text)
        for t in parsed:
            self.add(t)
        return parsed

    def check(self, template_id: str) -> ComponentTemplate:
        """Validate ``template_id`` and everything it contains."""
        template = self.get(template_id)
        if template is None:
            raise MalformedTemplate(f"unknown template {template_id!r}")
        self._check(template, ())
        return template

    def _check(self, template: ComponentTemplate, stack):
        if template.id in stack:
            raise MalformedTemplate(
                "recursive containment: " + " > ".join(stack + (template.id,)))
        if not template.is_composite:
            return
        content = template.content
        if not content.children:
            raise MalformedTemplate(f"composite {template.id!r} has no children")
        if len(set(content.children)) != len(content.children):
            raise MalformedTemplate(f"composite {template.id!r} contains a child twice")
        children = {}
        for child_id in content.children:
            child = self.get(child_id)
            if child is None:
                raise MalformedTemplate(
                    f"composite {template.id!r} contains unknown template {child_id!r}")
            self._check(child, stack + (template.id,))
            children[child_id] = child

        bound = set()
        for spec in content.bindings:
            c_child, s_child = children.get(spec.client_child), children.get(spec.server_child)
            if c_child is None or s_child is None:
                raise MalformedTemplate(f"{template.id}: binding {spec} names an unknown child")
            c_decl = c_child.interface(spec.client_iface)
            s_decl = s_child.interface(spec.server_iface)
            if c_decl is None or s_decl is None:
                raise MalformedTemplate(
                    f"{template.id}: binding {spec} names an undeclared interface")
            if c_decl.role is not Role.CLIENT or s_decl.role is not Role.SERVER:
                raise MalformedTemplate(f"{template.id}: binding {spec} has mismatched roles")
            if not s_decl.accepts(c_decl):
                raise MalformedTemplate(f"{template.id}: binding {spec} has incompatible signatures")
            key = (spec.client_child, spec.client_iface)
            if key in bound:
                raise MalformedTemplate(f"{template.id}: client {key[0]}.{key[1]} bound twice")
            bound.add(key)

        for decl in template.servers():
            delegate = next((children[c].interface(decl.name) for c in content.children
                             if _is_server(children[c].interface(decl.name))), None)
            if delegate is None:
                raise MalformedTemplate(
                    f"{template.id}: no child serves exported interface {decl.name!r}")
            if not delegate.accepts(decl):
                raise MalformedTemplate(
                    f"{template.id}: child cannot serve every op of {decl.name!r}")

        for child_id, child in children.items():
            for decl in child.clients():
                if (child_id, decl.name) in bound:
                    continue
                outer = template.interface(decl.name)
                if outer is None or outer.role is not Role.CLIENT:
                    if decl.optional:
                        continue
                    raise MalformedTemplate(
                        f"{template.id}: dangling client {child_id}.{decl.name}")
                if not outer.accepts(decl):
                    raise MalformedTemplate(
                        f"{template.id}: client {decl.name!r} narrower than {child_id}'s")


def _is_server(decl):
    return decl is not None and decl.role is Role.SERVER


@dataclass(eq=False)
class Binding:
    id: str
    client: Tuple[str, str]
    server: Tuple[str, str]
    owner: Optional[str] = None
    active: bool = False

    def view(self) -> Tuple[str, Tuple[str, str], Tuple[str, str], bool]:
        return (self.id, self.client, self.server, self.active)

    def __repr__(self):
        state = "active" if self.active else "inactive"
        return (f"<Binding {self.id} {self.client[0]}.{self.client[1]} -> "
                f"{self.server[0]}.{self.server[1]} {state}>")


@dataclass(eq=False)
class Controller:
    interceptors: dict = field(default_factory=dict)
    facets: dict = field(default_factory=dict)
