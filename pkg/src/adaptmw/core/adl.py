"""Text form of component templates.

One block per component::

    component flat-tx {
        server transaction(begin/0, commit/0, abort/0);
        client log(write/1) optional;
        contains engine journal;
        bind engine.log -> journal.log;
    }

A block without ``contains`` is primitive; its behavior id defaults to the
component id and may be set with ``behavior <id>;``.  ``#`` and ``//`` start
comments.
"""
from __future__ import annotations

import re
from typing import Iterable, List

from ..errors import AdlSyntaxError, MalformedTemplate
from .model import (BindingSpec, ComponentTemplate, Composite, InterfaceDecl,
                    Operation, Primitive, Role)

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>(?:\#|//)[^\n]*)
  | (?P<arrow>->)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z0-9_]+)*)
  | (?P<punct>[{}();,./])
""", re.VERBOSE)

KEYWORDS = {"component", "server", "client", "optional", "contains", "bind", "behavior"}


class _Tokens:
    def __init__(self, text: str):
        self.items = []
        pos, line = 0, 1
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:
                raise AdlSyntaxError(f"unexpected character {text[pos]!r}", line)
            kind = m.lastgroup
            value = m.group()
            if kind not in ("ws", "comment"):
                self.items.append((kind, value, line))
            line += value.count("\n")
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.items[self.i] if self.i < len(self.items) else (None, None, self._line())

    def _line(self):
        return self.items[-1][2] if self.items else 1

    def next(self):
        tok = self.peek()
        if tok[0] is not None:
            self.i += 1
        return tok

    def expect(self, value):
        kind, got, line = self.next()
        if got != value:
            raise AdlSyntaxError(f"expected {value!r}, got {got!r}", line)

    def ident(self, what="identifier"):
        kind, got, line = self.next()
        if kind != "ident" or got in KEYWORDS:
            raise AdlSyntaxError(f"expected {what}, got {got!r}", line)
        return got

    def at_end(self):
        return self.i >= len(self.items)


def parse_adl(text: str) -> List[ComponentTemplate]:
    """Parse every component block in ``text``."""
    toks = _Tokens(text)
    templates = []
    seen = set()
    while not toks.at_end():
        line = toks.peek()[2]
        template = _parse_block(toks)
        if template.id in seen:
            raise AdlSyntaxError(f"component {template.id!r} defined twice", line)
        seen.add(template.id)
        templates.append(template)
    return templates


def parse_one(text: str) -> ComponentTemplate:
    templates = parse_adl(text)
    if len(templates) != 1:
        raise AdlSyntaxError(f"expected exactly one component, found {len(templates)}")
    return templates[0]


def _parse_block(toks: _Tokens) -> ComponentTemplate:
    toks.expect("component")
    cid = toks.ident("component id")
    toks.expect("{")
    interfaces = []
    children = None
    bindings = []
    behavior = None
    while True:
        kind, word, line = toks.next()
        if word == "}":
            break
        if word in ("server", "client"):
            interfaces.append(_parse_interface(toks, word, line))
        elif word == "contains":
            names = [toks.ident("child id")]
            while toks.peek()[1] != ";":
                names.append(toks.ident("child id"))
            toks.expect(";")
            children = (children or []) + names
        elif word == "bind":
            c_child = toks.ident()
            toks.expect(".")
            c_iface = toks.ident()
            toks.expect("->")
            s_child = toks.ident()
            toks.expect(".")
            s_iface = toks.ident()
            toks.expect(";")
            bindings.append(BindingSpec(c_child, c_iface, s_child, s_iface))
        elif word == "behavior":
            if behavior is not None:
                raise AdlSyntaxError("behavior given twice", line)
            behavior = toks.ident("behavior id")
            toks.expect(";")
        elif kind is None:
            raise AdlSyntaxError(f"unterminated component {cid!r}", line)
        else:
            raise AdlSyntaxError(f"unexpected {word!r} in component {cid!r}", line)

    if children is not None:
        if behavior is not None:
            raise AdlSyntaxError(f"composite {cid!r} cannot name a behavior")
        content = Composite(tuple(children), tuple(bindings))
    else:
        if bindings:
            raise AdlSyntaxError(f"primitive {cid!r} cannot declare bindings")
        content = Primitive(behavior or cid)
    try:
        return ComponentTemplate(cid, tuple(interfaces), content)
    except MalformedTemplate as exc:
        raise AdlSyntaxError(str(exc)) from None


def _parse_interface(toks: _Tokens, role: str, line: int) -> InterfaceDecl:
    name = toks.ident("interface name")
    toks.expect("(")
    ops = []
    if toks.peek()[1] != ")":
        while True:
            op_name = toks.ident("operation name")
            arity = 0
            if toks.peek()[1] == "/":
                toks.next()
                kind, value, l2 = toks.next()
                if kind != "int":
                    raise AdlSyntaxError(f"expected arity, got {value!r}", l2)
                arity = int(value)
            ops.append(Operation(op_name, arity))
            if toks.peek()[1] == ",":
                toks.next()
                continue
            break
    toks.expect(")")
    optional = False
    if toks.peek()[1] == "optional":
        toks.next()
        optional = True
    toks.expect(";")
    try:
        return InterfaceDecl(name, Role(role), tuple(ops), optional)
    except MalformedTemplate as exc:
        raise AdlSyntaxError(str(exc), line) from None


def serialize_adl(templates: Iterable[ComponentTemplate]) -> str:
    return "\n".join(_serialize_one(t) for t in templates)


def _serialize_one(t: ComponentTemplate) -> str:
    lines = [f"component {t.id} {{"]
    for decl in t.interfaces:
        ops = ", ".join(str(op) for op in decl.signature)
        suffix = " optional" if decl.optional else ""
        lines.append(f"    {decl.role.value} {decl.name}({ops}){suffix};")
    if isinstance(t.content, Composite):
        lines.append("    contains " + " ".join(t.content.children) + ";")
        for spec in t.content.bindings:
            lines.append(f"    bind {spec};")
    else:
        lines.append(f"    behavior {t.content.behavior};")
    lines.append("}")
    return "\n".join(lines) + "\n"
