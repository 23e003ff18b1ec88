"""Live component instances: bindings, interception, lifecycle.

All structural mutation (bind, unbind, lifecycle, content changes) happens
under one re-entrant lock.  Every invocation hop registers itself on the
instance it enters, so :meth:`Runtime.quiesce` can wait until a set of
instances has no call in flight and then mutate them while new calls are
held back at the lock.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from ..errors import (AlreadyBound, IllegalTransition, MalformedTemplate,
                      NotStarted, QuiescenceError, RoleMismatch, ScopeMismatch,
                      SignatureMismatch, Unbound, UnboundMandatoryInterface,
                      UnknownBehavior, UnknownBinding, UnknownFacet,
                      UnknownInstance, UnknownInterface, UnknownOperation)
from .model import (Binding, ComponentTemplate, Composite, Controller,
                    InterfaceDecl, LifecycleState, Role, TemplateLibrary)

CREATED = LifecycleState.CREATED
STARTED = LifecycleState.STARTED
STOPPED = LifecycleState.STOPPED
SERVER = Role.SERVER
CLIENT = Role.CLIENT

_LEGAL = {(CREATED, STARTED), (STARTED, STOPPED), (STOPPED, STARTED)}

Endpoint = Tuple[str, str]


class Interceptor:
    """Pass-through interceptor; subclasses override the hooks they need.

    Hooks get the call as plain positional values (no record is built per
    call).  ``before`` may raise :class:`~adaptmw.errors.InterceptorVeto` to
    abort the call; ``after`` returns the (possibly replaced) result.
    """

    def before(self, instance: str, interface: str, op: str, args: tuple) -> None:
        pass

    def after(self, instance: str, interface: str, op: str, args: tuple, result):
        return result


class Behavior:
    """Optional base class for primitive content.

    The runtime sets :attr:`ctx` on instantiation, which lets the behavior
    call out through its client interfaces.
    """

    ctx: Optional["ComponentContext"] = None

    def call(self, interface: str, op: str, *args):
        return self.ctx.call(interface, op, *args)


class ComponentContext:
    def __init__(self, runtime: "Runtime", instance_id: str):
        self.runtime = runtime
        self.instance_id = instance_id

    def call(self, interface, op, *args):
        return self.runtime.invoke(self.instance_id, interface, op, args)


class ComponentInstance:
    __slots__ = ("id", "template", "interfaces", "ops", "roles", "controller",
                 "behavior", "handler", "children", "parent", "state",
                 "bindings", "delegates", "inflight", "hooks")

    def __init__(self, id, template, interfaces: Sequence[InterfaceDecl]):
        self.id = id
        self.template = template
        self.interfaces: Dict[str, InterfaceDecl] = {d.name: d for d in interfaces}
        self.ops = {d.name: frozenset((o.name, o.arity) for o in d.signature)
                    for d in interfaces}
        self.roles = {d.name: d.role for d in interfaces}
        self.controller = Controller()
        self.behavior = None
        self.handler = None
        self.children: Optional[List[str]] = None
        self.parent: Optional[str] = None
        self.state = CREATED
        self.bindings: set = set()
        self.delegates: Dict[str, str] = {}
        self.inflight = 0
        # interface -> (before hooks in order, after hooks in reverse order)
        self.hooks: Dict[str, tuple] = {}

    @property
    def is_composite(self) -> bool:
        return self.children is not None

    def __repr__(self):
        kind = "composite" if self.is_composite else "primitive"
        return f"<ComponentInstance {self.id} {kind} {self.state.value}>"


def _content_facet(runtime, inst):
    return list(inst.children or ())


def _binding_facet(runtime, inst):
    return runtime.client_bindings(inst.id)


def _lifecycle_facet(runtime, inst):
    return inst.state


class Runtime:
    """Registry of live instances and the bindings between them."""

    def __init__(self, behaviors: Optional[Dict[str, Callable[[], object]]] = None):
        from .behaviors import BUILTIN_BEHAVIORS

        self.instances: Dict[str, ComponentInstance] = {}
        self.bindings: Dict[str, Binding] = {}
        self.behaviors: Dict[str, Callable[[], object]] = dict(BUILTIN_BEHAVIORS)
        if behaviors:
            self.behaviors.update(behaviors)
        self._by_client: Dict[Endpoint, Binding] = {}
        self._top_bindings: set = set()
        self._lock = threading.RLock()
        self._cond = threading.Condition(self._lock)
        self._draining = 0
        self._binding_ids = itertools.count(1)
        self._instance_ids: Dict[str, itertools.count] = {}

    # -- lookup ----------------------------------------------------------

    def get(self, instance_id: str) -> ComponentInstance:
        try:
            return self.instances[instance_id]
        except KeyError:
            raise UnknownInstance(f"no instance {instance_id!r}") from None

    def _decl(self, inst: ComponentInstance, name: str) -> InterfaceDecl:
        try:
            return inst.interfaces[name]
        except KeyError:
            raise UnknownInterface(f"{inst.id} has no interface {name!r}") from None

    def client_bindings(self, instance_id: str) -> List[Binding]:
        inst = self.get(instance_id)
        found = [self._by_client[(inst.id, name)] for name in inst.interfaces
                 if (inst.id, name) in self._by_client]
        return sorted(found, key=lambda b: _binding_order(b.id))

    def bindings_in(self, composite_id: Optional[str]) -> List[Binding]:
        """Bindings recorded in a composite's content (``None``: top level)."""
        ids = self._top_bindings if composite_id is None else self.get(composite_id).bindings
        return sorted((self.bindings[b] for b in ids), key=lambda b: _binding_order(b.id))

    def binding_for(self, instance_id: str, interface: str) -> Optional[Binding]:
        return self._by_client.get((instance_id, interface))

    # -- instantiation ---------------------------------------------------

    def _fresh_id(self, base: str) -> str:
        counter = self._instance_ids.setdefault(base, itertools.count(1))
        while True:
            candidate = f"{base}#{next(counter)}"
            if candidate not in self.instances:
                return candidate

    def instantiate(self, template, library: Optional[TemplateLibrary] = None,
                    instance_id: Optional[str] = None) -> ComponentInstance:
        """Create a Created instance tree from ``template``.

        ``template`` may be a template or an id into ``library``.  Composite
        children are instantiated recursively and their internal bindings
        are created inactive.
        """
        if library is None:
            library = TemplateLibrary()
        if isinstance(template, ComponentTemplate):
            if template.id not in library:
                library = TemplateLibrary(library)
                library.add(template)
            template_id = template.id
        else:
            template_id = template
        library.check(template_id)
        with self._lock:
            if instance_id is None:
                instance_id = self._fresh_id(template_id)
            elif instance_id in self.instances:
                raise MalformedTemplate(f"instance id {instance_id!r} already in use")
            created: List[str] = []
            try:
                return self._build(library[template_id], library, instance_id, None, created)
            except Exception:
                for iid in reversed(created):
                    self._forget(iid)
                raise

    def _build(self, template, library, iid, parent, created):
        inst = ComponentInstance(iid, template.id, template.interfaces)
        inst.parent = parent
        self._install_facets(inst)
        if isinstance(template.content, Composite):
            inst.children = []
            self.instances[iid] = inst
            created.append(iid)
            for child_tid in template.content.children:
                child = self._build(library[child_tid], library, f"{iid}/{child_tid}",
                                    iid, created)
                inst.children.append(child.id)
            self._refresh_delegates(inst)
            for spec in template.content.bindings:
                self._record_binding((f"{iid}/{spec.client_child}", spec.client_iface),
                                     (f"{iid}/{spec.server_child}", spec.server_iface),
                                     iid)
        else:
            factory = self.behaviors.get(template.content.behavior)
            if factory is None:
                raise UnknownBehavior(f"no behavior registered as {template.content.behavior!r}")
            behavior = factory()
            inst.behavior = behavior
            inst.handler = getattr(behavior, "dispatch", None)
            if isinstance(behavior, Behavior) or hasattr(behavior, "ctx"):
                behavior.ctx = ComponentContext(self, iid)
            self.instances[iid] = inst
            created.append(iid)
        return inst

    def _install_facets(self, inst):
        inst.controller.facets.update(
            content=_content_facet, binding=_binding_facet, lifecycle=_lifecycle_facet)

    def _forget(self, iid):
        inst = self.instances.pop(iid, None)
        if inst is None:
            return
        for bid in list(inst.bindings):
            self._drop_binding(self.bindings[bid])

    def _refresh_delegates(self, inst):
        delegates = {}
        for name, decl in inst.interfaces.items():
            if decl.role is not SERVER:
                continue
            for cid in inst.children:
                child = self.instances[cid]
                if child.roles.get(name) is SERVER:
                    delegates[name] = cid
                    break
        inst.delegates = delegates

    # -- content control -------------------------------------------------

    def create_composite(self, interfaces: Sequence[InterfaceDecl],
                         children: Iterable[str] = (), template: str = "composite",
                         instance_id: Optional[str] = None) -> ComponentInstance:
        """Build an empty composite shell at top level and adopt ``children``."""
        with self._lock:
            if instance_id is None:
                instance_id = self._fresh_id(template)
            elif instance_id in self.instances:
                raise MalformedTemplate(f"instance id {instance_id!r} already in use")
            inst = ComponentInstance(instance_id, template, tuple(interfaces))
            inst.children = []
            self._install_facets(inst)
            self.instances[instance_id] = inst
            try:
                for cid in children:
                    self.add_child(instance_id, cid)
            except Exception:
                for cid in list(inst.children):
                    self.remove_child(instance_id, cid)
                del self.instances[instance_id]
                raise
            return inst

    def add_child(self, parent_id: str, child_id: str) -> None:
        with self._lock:
            parent, child = self.get(parent_id), self.get(child_id)
            if not parent.is_composite:
                raise IllegalTransition(f"{parent_id} is primitive")
            if child.parent is not None:
                raise ScopeMismatch(f"{child_id} already belongs to {child.parent}")
            if child_id == parent_id or self._is_ancestor(child_id, parent_id):
                raise ScopeMismatch("containment cycle")
            if self._touching(child_id):
                raise ScopeMismatch(f"{child_id} still has top-level bindings")
            if child.state is STARTED and parent.state is not STARTED:
                raise IllegalTransition(f"cannot put started {child_id} in a non-started parent")
            child.parent = parent_id
            parent.children.append(child_id)
            self._refresh_delegates(parent)

    def remove_child(self, parent_id: str, child_id: str) -> None:
        with self._lock:
            parent, child = self.get(parent_id), self.get(child_id)
            if child.parent != parent_id:
                raise ScopeMismatch(f"{child_id} is not a child of {parent_id}")
            if self._touching(child_id):
                raise ScopeMismatch(f"{child_id} is still bound inside {parent_id}")
            parent.children.remove(child_id)
            child.parent = None
            self._refresh_delegates(parent)

    def destroy(self, instance_id: str) -> None:
        """Drop a top-level instance tree from the registry.

        Internal bindings go with it; bindings that reach outside the tree
        must be removed first.
        """
        with self._lock:
            inst = self.get(instance_id)
            if inst.parent is not None:
                raise ScopeMismatch(f"{instance_id} is still inside {inst.parent}")
            subtree = set(self._subtree(instance_id))
            for b in self.bindings.values():
                ends = {b.client[0], b.server[0]}
                if ends & subtree and not ends <= subtree:
                    raise ScopeMismatch(f"{b.id} crosses the boundary of {instance_id}")
                if b.owner is None and ends & subtree:
                    raise ScopeMismatch(f"{b.id} binds {instance_id} at top level")
            for iid in reversed(list(self._subtree(instance_id))):
                self._forget(iid)

    def _subtree(self, iid):
        yield iid
        for cid in self.instances[iid].children or ():
            yield from self._subtree(cid)

    def _is_ancestor(self, ancestor, iid):
        parent = self.instances[iid].parent
        while parent is not None:
            if parent == ancestor:
                return True
            parent = self.instances[parent].parent
        return False

    def _touching(self, iid) -> bool:
        return any(iid in (b.client[0], b.server[0]) for b in self.bindings.values())

    # -- bindings --------------------------------------------------------

    def bind(self, client: Endpoint, server: Endpoint) -> Binding:
        with self._lock:
            c_inst, s_inst = self.get(client[0]), self.get(server[0])
            c_decl, s_decl = self._decl(c_inst, client[1]), self._decl(s_inst, server[1])
            if c_decl.role is not CLIENT:
                raise RoleMismatch(f"{client[0]}.{client[1]} is not a client interface")
            if s_decl.role is not SERVER:
                raise RoleMismatch(f"{server[0]}.{server[1]} is not a server interface")
            if not s_decl.accepts(c_decl):
                missing = sorted(str(o) for o in c_decl.ops - s_decl.ops)
                raise SignatureMismatch(
                    f"{server[0]}.{server[1]} lacks {', '.join(missing)}")
            if tuple(client) in self._by_client:
                raise AlreadyBound(f"{client[0]}.{client[1]} is already bound")
            if c_inst.parent != s_inst.parent:
                raise ScopeMismatch("binding endpoints live in different composites")
            return self._record_binding(tuple(client), tuple(server), c_inst.parent)

    def _record_binding(self, client, server, owner) -> Binding:
        binding = Binding(f"b{next(self._binding_ids)}", client, server, owner)
        binding.active = (self.instances[client[0]].state is STARTED
                          and self.instances[server[0]].state is STARTED)
        self.bindings[binding.id] = binding
        self._by_client[client] = binding
        if owner is None:
            self._top_bindings.add(binding.id)
        else:
            self.instances[owner].bindings.add(binding.id)
        return binding

    def unbind(self, binding) -> None:
        with self._lock:
            bid = binding.id if isinstance(binding, Binding) else binding
            found = self.bindings.get(bid)
            if found is None:
                raise UnknownBinding(f"no binding {bid!r}")
            self._drop_binding(found)

    def _drop_binding(self, binding: Binding):
        del self.bindings[binding.id]
        self._by_client.pop(binding.client, None)
        if binding.owner is None:
            self._top_bindings.discard(binding.id)
        elif binding.owner in self.instances:
            self.instances[binding.owner].bindings.discard(binding.id)
        binding.active = False

    def _refresh_bindings(self):
        for b in self.bindings.values():
            b.active = (self.instances[b.client[0]].state is STARTED
                        and self.instances[b.server[0]].state is STARTED)

    # -- interception ----------------------------------------------------

    def add_interceptor(self, instance_id: str, interface: str, interceptor,
                        position: Optional[int] = None) -> None:
        with self._lock:
            inst = self.get(instance_id)
            self._decl(inst, interface)
            chain = list(inst.controller.interceptors.get(interface, ()))
            chain.insert(len(chain) if position is None else position, interceptor)
            # chains are replaced, never mutated, so in-flight loops see a stable list
            inst.controller.interceptors[interface] = tuple(chain)
            _compile_hooks(inst, interface)

    def remove_interceptor(self, instance_id: str, interface: str, interceptor) -> None:
        with self._lock:
            inst = self.get(instance_id)
            chain = list(inst.controller.interceptors.get(interface, ()))
            chain.remove(interceptor)
            if chain:
                inst.controller.interceptors[interface] = tuple(chain)
            else:
                inst.controller.interceptors.pop(interface, None)
            _compile_hooks(inst, interface)

    def interceptors(self, instance_id: str, interface: str) -> tuple:
        return tuple(self.get(instance_id).controller.interceptors.get(interface, ()))

    # -- invocation ------------------------------------------------------

    def invoke(self, instance_id: str, interface: str, op: str, args=()):
        """Call ``op`` on ``interface`` of an instance.

        A server interface runs the instance's content (delegating to a
        child for composites); a client interface follows its binding, or
        the enclosing composite's client interface of the same name.
        """
        inst = self.instances.get(instance_id)
        if inst is None:
            raise UnknownInstance(f"no instance {instance_id!r}")
        return self._call(inst, interface, op, tuple(args))

    def _call(self, inst: ComponentInstance, iface, op, args):
        if inst.state is not STARTED:
            raise NotStarted(f"{inst.id} is {inst.state.value}")
        ops = inst.ops.get(iface)
        if ops is None:
            raise UnknownInterface(f"{inst.id} has no interface {iface!r}")
        if (op, len(args)) not in ops:
            raise UnknownOperation(f"{inst.id}.{iface} has no {op}/{len(args)}")
        lock = self._lock
        with lock:
            inst.inflight += 1
        try:
            hooks = inst.hooks.get(iface)
            if hooks is None:
                return self._dispatch(inst, iface, op, args)
            befores, afters = hooks
            iid = inst.id
            if len(befores) == 1:
                befores[0](iid, iface, op, args)
                return afters[0](iid, iface, op, args,
                                 self._dispatch(inst, iface, op, args))
            for before in befores:
                before(iid, iface, op, args)
            result = self._dispatch(inst, iface, op, args)
            for after in afters:
                result = after(iid, iface, op, args, result)
            return result
        finally:
            with lock:
                inst.inflight -= 1
                if self._draining and not inst.inflight:
                    self._cond.notify_all()

    def _dispatch(self, inst: ComponentInstance, iface, op, args):
        if inst.roles[iface] is SERVER:
            if inst.children is None:
                if inst.handler is not None:
                    return inst.handler(iface, op, args)
                return getattr(inst.behavior, op)(*args)
            child_id = inst.delegates.get(iface)
            if child_id is None:
                raise Unbound(f"no child of {inst.id} serves {iface!r}")
            return self._call(self.instances[child_id], iface, op, args)
        binding = self._by_client.get((inst.id, iface))
        if binding is not None:
            if not binding.active:
                raise Unbound(f"binding {binding.id} from {inst.id}.{iface} is inactive")
            target, target_iface = binding.server
            return self._call(self.instances[target], target_iface, op, args)
        if inst.parent is not None:
            parent = self.instances[inst.parent]
            if parent.roles.get(iface) is CLIENT:
                return self._call(parent, iface, op, args)
        raise Unbound(f"{inst.id}.{iface} is not bound")

    # -- introspection ---------------------------------------------------

    def introspect(self, instance_id: str, facet: str):
        inst = self.get(instance_id)
        view = inst.controller.facets.get(facet)
        if view is None:
            raise UnknownFacet(f"{instance_id} has no {facet!r} facet")
        return view(self, inst)

    def add_facet(self, instance_id: str, name: str, view) -> None:
        """Register an extra sub-controller; ``view(runtime, instance)``."""
        with self._lock:
            self.get(instance_id).controller.facets[name] = view

    # -- lifecycle -------------------------------------------------------

    def set_lifecycle(self, instance_id: str, target) -> None:
        target = LifecycleState(target)
        with self._lock:
            inst = self.get(instance_id)
            if (inst.state, target) not in _LEGAL:
                raise IllegalTransition(
                    f"{instance_id}: {inst.state.value} -> {target.value}")
            if target is STARTED:
                if inst.parent is not None and self.instances[inst.parent].state is not STARTED:
                    raise IllegalTransition(f"{instance_id}: parent {inst.parent} is not started")
                self._check_startable(inst)
                self._start_tree(inst)
            else:
                self._stop_tree(inst)
            self._refresh_bindings()

    def start(self, instance_id: str) -> None:
        self.set_lifecycle(instance_id, STARTED)

    def stop(self, instance_id: str) -> None:
        self.set_lifecycle(instance_id, STOPPED)

    def _check_startable(self, inst):
        for name, decl in inst.interfaces.items():
            if decl.role is CLIENT and not decl.optional and not self._satisfied(inst, name):
                raise UnboundMandatoryInterface(f"{inst.id}.{name} is not bound")
        for cid in inst.children or ():
            self._check_startable(self.instances[cid])

    def _satisfied(self, inst, name) -> bool:
        while True:
            if (inst.id, name) in self._by_client:
                return True
            if inst.parent is None:
                return False
            inst = self.instances[inst.parent]
            if inst.roles.get(name) is not CLIENT:
                return False

    def _start_tree(self, inst):
        inst.state = STARTED
        for cid in inst.children or ():
            child = self.instances[cid]
            if child.state is not STARTED:
                self._start_tree(child)

    def _stop_tree(self, inst):
        for cid in inst.children or ():
            child = self.instances[cid]
            if child.state is STARTED:
                self._stop_tree(child)
        inst.state = STOPPED

    # -- quiescence ------------------------------------------------------

    @contextmanager
    def quiesce(self, instance_ids: Iterable[str], timeout: Optional[float] = 10.0):
        """Hold the structural lock with no call in flight on ``instance_ids``.

        Must not be used from inside an invocation of one of those
        instances; that would wait on itself and time out.
        """
        with self._cond:
            targets = [self.get(i) for i in instance_ids]
            self._draining += 1
            try:
                if not self._cond.wait_for(
                        lambda: all(t.inflight == 0 for t in targets), timeout):
                    raise QuiescenceError(
                        "calls still in flight on " + ", ".join(t.id for t in targets))
            finally:
                self._draining -= 1
            yield

    @contextmanager
    def exclusive(self):
        """Hold the structural lock across several mutations."""
        with self._lock:
            yield

    def inflight(self, instance_id: str) -> int:
        return self.get(instance_id).inflight


def _compile_hooks(inst: ComponentInstance, interface: str) -> None:
    chain = inst.controller.interceptors.get(interface)
    if not chain:
        inst.hooks.pop(interface, None)
        return
    inst.hooks[interface] = (tuple(i.before for i in chain),
                             tuple(i.after for i in reversed(chain)))


def _binding_order(bid: str):
    return int(bid[1:]) if bid[1:].isdigit() else 0
