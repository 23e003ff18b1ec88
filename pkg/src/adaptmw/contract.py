"""Contracts between an application component and its personalities.

The :class:`Coordinator` is the contract factory.  Creating a contract
runs five phases, each recorded in the contract history:

``relevant-monitors``
    the monitors worth watching for the application's needs
``coordinator-subscribe``
    the coordinator subscribes to each of them
``sensor-activate``
    the monitors switch their sensors on
``directory-query``
    the directory proposes a personality per required service
``bind``
    the application and personalities are woven together

Afterwards monitor notifications mark contracts for renegotiation, and a
renegotiation swaps a personality when the directory now ranks another one
first.
"""
from __future__ import annotations

import collections
import dataclasses
import shlex
import threading
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Mapping, Optional, Sequence, Set, Tuple

from .core.model import ComponentTemplate
from .core.runtime import STARTED, Runtime
from .directory import Directory, InstanceNode, NeedDescriptor
from .environment import (ChangedBy, EnvironmentDescriptor, EnvironmentService,
                          Notification, Preference, dimension_of, format_number)
from .errors import (AlreadyDestroyed, CompositionError, IllegalContractState,
                     IncoherentBundle, MalformedTemplate, MiddlewareError, NoMatch,
                     UnknownContract, UnknownInstance, UnknownSubscription, WeaveFailure)
from .personality import (Composition, Personality, Requires, check_coherence, swap,
                          unweave, weave)

NEGOTIATING = "Negotiating"
ACTIVE = "Active"
RENEGOTIATING = "Renegotiating"
DESTROYED = "Destroyed"

PHASES = ("relevant-monitors", "coordinator-subscribe", "sensor-activate",
          "directory-query", "bind")

# Preferences name qualities, not dimensions; these say which dimension
# bears on each.  Security depends on the network the node sits on.
PREFERENCE_HINTS = {
    "security": "network",
    "haut niveau de sécurité": "network",
    "high security": "network",
    "bandwidth": "network",
    "latency": "network",
    "performance": "cpu",
    "speed": "cpu",
    "platform": "software",
}


@dataclass(frozen=True)
class HistoryEntry:
    t: float
    event: str
    details: Tuple[Tuple[str, str], ...] = ()

    def line(self, contract_id: str) -> str:
        parts = [f"t={format_number(self.t)}", f"contract={contract_id}", f"event={self.event}"]
        parts.extend(f"{k}={_quote(v)}" for k, v in self.details)
        return " ".join(parts)


def _quote(value) -> str:
    text = str(value)
    return text if text and " " not in text else shlex.quote(text)


@dataclass
class Contract:
    id: str
    app: str
    needs: NeedDescriptor
    bound: Dict[str, str] = field(default_factory=dict)
    composition: Optional[Composition] = None
    monitors: List[str] = field(default_factory=list)
    state: str = NEGOTIATING
    history: List[HistoryEntry] = field(default_factory=list)

    @property
    def bindings(self) -> List[str]:
        return self.composition.binding_ids if self.composition else []

    def trace(self) -> List[str]:
        return [entry.line(self.id) for entry in self.history]


@dataclass(frozen=True)
class Outcome:
    """Result of renegotiating one required service."""
    kind: str                   # Rebound, Unchanged or Degraded
    service: str
    old: Optional[str] = None
    new: Optional[str] = None
    reason: str = ""


def Rebound(service, old, new):
    return Outcome("Rebound", service, old, new)


def Unchanged(service, current):
    return Outcome("Unchanged", service, current, current)


def Degraded(service, current, reason):
    return Outcome("Degraded", service, current, None, reason)


class Coordinator:
    """Creates, notifies, renegotiates and destroys contracts.

    Monitor subscriptions are reference counted: a monitor stays
    subscribed exactly while some live contract finds it relevant.
    """

    def __init__(self, directory: Directory, runtime: Runtime,
                 library: Mapping[str, ComponentTemplate], environment: EnvironmentService,
                 node: str, change_delta: float = 0.1, coherence: Sequence = (),
                 coordinator_id: str = "coordinator"):
        self.id = coordinator_id
        self.directory = directory
        self.runtime = runtime
        self.library = library
        self.environment = environment
        self.node = node
        self.change_delta = change_delta
        self.coherence = list(coherence)
        self.contracts: Dict[str, Contract] = {}
        self.subscriptions: Dict[str, Set[str]] = {}
        self.apps: Set[str] = set()
        self.now = 0.0
        self.inbox: Deque[Notification] = collections.deque()
        self._events: List[Tuple[str, HistoryEntry]] = []
        self._lock = threading.RLock()
        self._contract_locks: Dict[str, threading.RLock] = {}
        self._count = 0

    # bookkeeping

    def register_app(self, instance_id: str) -> None:
        self.runtime.get(instance_id)
        self.apps.add(instance_id)

    def contract(self, contract_id: str) -> Contract:
        try:
            return self.contracts[contract_id]
        except KeyError:
            raise UnknownContract(f"no contract {contract_id!r}") from None

    def _record(self, contract: Contract, event: str, **details) -> None:
        entry = HistoryEntry(self.now, event, tuple((k, str(v)) for k, v in details.items()))
        contract.history.append(entry)
        with self._lock:
            self._events.append((contract.id, entry))

    def trace(self) -> List[str]:
        """Every history entry of every contract, in the order it happened."""
        return [entry.line(cid) for cid, entry in self._events]

    # relevance

    def need_dimensions(self, needs: NeedDescriptor) -> List[str]:
        dims: List[str] = []
        for c in needs.constraints:
            dims.append(c.dimension)
        for pref in needs.preferences:
            dim = PREFERENCE_HINTS.get(pref.strip().lower())
            if dim is None and pref:
                head = dimension_of(pref)
                if self.environment.monitor_for(head, self.node) is not None:
                    dim = head
            if dim is not None:
                dims.append(dim)
        return list(dict.fromkeys(dims))

    def relevant_monitors(self, needs: NeedDescriptor) -> List[str]:
        monitors = []
        for dim in self.need_dimensions(needs):
            mid = self.environment.monitor_for(dim, self.node)
            if mid is not None and mid not in monitors:
                monitors.append(mid)
        return monitors

    def _subscribe(self, contract: Contract, monitors: Sequence[str]) -> None:
        with self._lock:
            for mid in monitors:
                holders = self.subscriptions.setdefault(mid, set())
                if not holders:
                    monitor = self.environment.monitor(mid)
                    dims = dict.fromkeys(self.environment.sensors[s].dimension
                                         for s in monitor.sensors)
                    for dim in dims:
                        self.environment.subscribe(
                            mid, Preference(dim, ChangedBy(self.change_delta), self.id))
                holders.add(contract.id)

    def _unsubscribe(self, contract: Contract) -> None:
        with self._lock:
            for mid in contract.monitors:
                holders = self.subscriptions.get(mid)
                if holders is None:
                    continue
                holders.discard(contract.id)
                if not holders:
                    del self.subscriptions[mid]
                    self.environment.unsubscribe(mid, self.id)

    # selection

    def _select(self, needs: NeedDescriptor, env: EnvironmentDescriptor
                ) -> Dict[str, Tuple[InstanceNode, List[InstanceNode]]]:
        """Top-ranked coherent instance per required service, plus the ranking."""
        chosen: Dict[str, Tuple[InstanceNode, List[InstanceNode]]] = {}
        partial = [c for c in self.coherence if not isinstance(c, Requires)]
        for service in needs.services:
            ranked = self.directory.export_query(needs, env, service)
            picked = None
            for inst in ranked:
                members = [c.personality for c, _ in chosen.values()] + [inst.personality]
                if not check_coherence(members, partial):
                    picked = inst
                    break
            if picked is None:
                raise IncoherentBundle(f"no coherent choice for {service}")
            chosen[service] = (picked, ranked)
        violations = check_coherence([c.personality for c, _ in chosen.values()], self.coherence)
        if violations:
            raise IncoherentBundle("; ".join(v.reason for v in violations))
        return chosen

    @staticmethod
    def _bound_personality(inst: InstanceNode) -> Personality:
        # one runtime instance per directory instance, named after it
        return dataclasses.replace(inst.personality, id=inst.id)

    # lifecycle

    def create_contract(self, app: str, needs: NeedDescriptor,
                        contract_id: Optional[str] = None) -> Contract:
        if app not in self.apps:
            raise UnknownInstance(f"application {app!r} is not registered")
        with self._lock:
            if contract_id is None:
                self._count += 1
                contract_id = f"c{self._count}"
                while contract_id in self.contracts:
                    self._count += 1
                    contract_id = f"c{self._count}"
            elif contract_id in self.contracts:
                raise IllegalContractState(f"contract {contract_id} already exists")
            contract = Contract(contract_id, app, needs)
            self.contracts[contract_id] = contract
            self._contract_locks[contract_id] = threading.RLock()

        with self._contract_locks[contract_id]:
            contract.monitors = self.relevant_monitors(needs)
            self._record(contract, "relevant-monitors", monitors=",".join(contract.monitors))
            self._subscribe(contract, contract.monitors)
            self._record(contract, "coordinator-subscribe",
                         monitors=",".join(contract.monitors))
            sensors = [s for mid in contract.monitors
                       for s in self.environment.monitor(mid).sensors
                       if self.environment.sensors[s].active]
            self._record(contract, "sensor-activate", sensors=",".join(sensors))
            try:
                env = self.environment.current_environment(self.node)
                chosen = self._select(needs, env)
            except MiddlewareError as exc:
                self._abort(contract, exc)
                raise
            self._record(contract, "directory-query", selected=",".join(
                f"{s}:{inst.id}" for s, (inst, _) in chosen.items()))
            try:
                personalities = [self._bound_personality(inst) for inst, _ in chosen.values()]
                contract.composition = weave(self.runtime, app, personalities, self.library,
                                             composition_id=f"{app}@{contract_id}")
                if self.runtime.get(contract.composition.id).state is not STARTED:
                    self.runtime.start(contract.composition.id)
            except (CompositionError, MalformedTemplate, MiddlewareError) as exc:
                if contract.composition is not None:
                    unweave(self.runtime, contract.composition)
                    contract.composition = None
                self._abort(contract, exc)
                raise WeaveFailure(str(exc)) from exc
            for service, (inst, _) in chosen.items():
                contract.bound[service] = inst.id
                self.directory.acquire(inst.id, contract_id)
            self._record(contract, "bind", personalities=",".join(
                f"{s}:{i}" for s, i in contract.bound.items()),
                bindings=",".join(contract.bindings) or "-")
            contract.state = ACTIVE
        return contract

    def _abort(self, contract: Contract, exc: Exception) -> None:
        self._unsubscribe(contract)
        contract.state = DESTROYED
        self._record(contract, "failed", error=type(exc).__name__)

    def post(self, notifications: Sequence[Notification]) -> None:
        """Queue monitor notifications; :meth:`drain` processes them in order."""
        with self._lock:
            self.inbox.extend(notifications)

    def drain(self) -> List[Outcome]:
        outcomes = []
        while True:
            with self._lock:
                if not self.inbox:
                    return outcomes
                note = self.inbox.popleft()
            for cid in self.notify_change(note):
                outcomes.extend(self.renegotiate(cid))

    def notify_change(self, notification: Notification) -> List[str]:
        """Mark contracts whose needs bear on the sample's dimension."""
        with self._lock:
            if notification.subscriber != self.id or \
                    not self.subscriptions.get(notification.monitor):
                raise UnknownSubscription(
                    f"{self.id} is not subscribed to {notification.monitor}")
            dim = dimension_of(notification.field)
            affected = []
            for contract in self.contracts.values():
                if contract.state not in (ACTIVE, RENEGOTIATING):
                    continue
                if dim not in self.need_dimensions(contract.needs):
                    continue
                with self._contract_locks[contract.id]:
                    contract.state = RENEGOTIATING
                    self._record(contract, "notified", field=notification.field,
                                 old=notification.old, new=notification.new)
                affected.append(contract.id)
            return affected

    def renegotiate(self, contract_id: str,
                    env: Optional[EnvironmentDescriptor] = None) -> List[Outcome]:
        """Rebind every service whose top-ranked instance changed.

        If the directory has nothing left for a service the old binding is
        kept, the outcome is Degraded and the contract stays Renegotiating.
        """
        contract = self.contract(contract_id)
        with self._contract_locks[contract_id]:
            if contract.state != RENEGOTIATING:
                raise IllegalContractState(
                    f"contract {contract_id} is {contract.state}, not {RENEGOTIATING}")
            if env is None:
                env = self.environment.current_environment(self.node)
            outcomes = []
            try:
                chosen = self._select(contract.needs, env)
            except (NoMatch, IncoherentBundle) as exc:
                for service in contract.needs.services:
                    outcomes.append(Degraded(service, contract.bound.get(service), str(exc)))
                    self._record(contract, "Degraded", service=service,
                                 bound=contract.bound.get(service), error=type(exc).__name__)
                return outcomes
            for service, (inst, _) in chosen.items():
                old = contract.bound[service]
                if inst.id == old:
                    outcomes.append(Unchanged(service, old))
                    self._record(contract, "Unchanged", service=service, bound=old)
                    continue
                self.directory.acquire(inst.id, contract_id)
                swap(self.runtime, contract.composition, self._bound_personality(inst),
                     self.library)
                self.directory.release(old, contract_id)
                contract.bound[service] = inst.id
                outcomes.append(Rebound(service, old, inst.id))
                self._record(contract, "Rebound", service=service, old=old, new=inst.id)
            contract.state = ACTIVE
            return outcomes

    def destroy_contract(self, contract_id: str) -> None:
        contract = self.contract(contract_id)
        with self._contract_locks[contract_id]:
            if contract.state == DESTROYED:
                raise AlreadyDestroyed(f"contract {contract_id} is already destroyed")
            if contract.composition is not None:
                unweave(self.runtime, contract.composition)
                contract.composition = None
            for inst in contract.bound.values():
                self.directory.release(inst, contract_id)
            self._unsubscribe(contract)
            contract.state = DESTROYED
            self._record(contract, "destroyed")

    def subscribed_monitors(self) -> Set[str]:
        return {mid for mid, holders in self.subscriptions.items() if holders}
