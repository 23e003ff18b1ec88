"""Stub behaviors available to every runtime by id.

They carry no real service semantics: they echo, record what they see and,
for the security stub, refuse calls when told to.
"""
from __future__ import annotations

from ..errors import InterceptorVeto, Unbound
from .model import Role
from .runtime import Behavior


class Echo(Behavior):
    """Returns its first argument, or ``None`` for nullary operations."""

    def dispatch(self, interface, op, args):
        return args[0] if args else None


class Recorder(Echo):
    """Echo that keeps a log of calls and of interceptions it took part in."""

    def __init__(self):
        self.calls = []
        self.intercepted = []

    def dispatch(self, interface, op, args):
        self.calls.append((interface, op, args))
        return args[0] if args else None

    def before_call(self, instance, interface, op, args):
        self.intercepted.append(("before", interface, op))

    def after_call(self, instance, interface, op, args, result):
        self.intercepted.append(("after", interface, op))
        return result


class Veto(Recorder):
    """Security stub: refuses intercepted calls while ``deny`` is set."""

    def __init__(self):
        super().__init__()
        self.deny = False

    def before_call(self, instance, interface, op, args):
        if self.deny:
            raise InterceptorVeto(f"access to {interface}.{op} refused")
        super().before_call(instance, interface, op, args)


class App(Behavior):
    """Application stub.

    Each server operation first forwards to every client interface that
    declares the same operation (in declaration order), then echoes its
    first argument.  Unbound optional clients are skipped.
    """

    def __init__(self):
        self._clients = None

    def _routes(self):
        if self._clients is None:
            inst = self.ctx.runtime.get(self.ctx.instance_id)
            self._clients = [(d.name, frozenset((o.name, o.arity) for o in d.signature),
                              d.optional)
                             for d in inst.interfaces.values() if d.role is Role.CLIENT]
        return self._clients

    def dispatch(self, interface, op, args):
        for name, ops, optional in self._routes():
            if (op, len(args)) in ops:
                try:
                    self.call(name, op, *args)
                except Unbound:
                    if not optional:
                        raise
        return args[0] if args else None


BUILTIN_BEHAVIORS = {
    "echo": Echo,
    "recorder": Recorder,
    "veto": Veto,
    "app": App,
}
