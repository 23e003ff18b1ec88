import threading
import time

import pytest

from adaptmw.core import (Interceptor, LifecycleState, Runtime, TemplateLibrary,
                          client, server)
from adaptmw.core.model import ComponentTemplate, InterfaceDecl, Primitive, Role
from adaptmw.errors import (AlreadyBound, IllegalTransition, InterceptorVeto,
                            MalformedTemplate, NotStarted, QuiescenceError, RoleMismatch,
                            SignatureMismatch, Unbound, UnboundMandatoryInterface,
                            UnknownBinding, UnknownFacet)


class Tracing(Interceptor):
    def __init__(self, name, log):
        self.name, self.log = name, log

    def before(self, instance, interface, op, args):
        self.log.append(f"{self.name}.before")

    def after(self, instance, interface, op, args, result):
        self.log.append(f"{self.name}.after")
        return result


class Refuse(Interceptor):
    def before(self, instance, interface, op, args):
        raise InterceptorVeto("no", self)


def started(rt, library, tid, iid=None):
    inst = rt.instantiate(tid, library, instance_id=iid)
    rt.start(inst.id)
    return inst


def test_interface_decl_rejects_empty_signature():
    with pytest.raises(MalformedTemplate):
        InterfaceDecl("svc", Role.SERVER, ())


def test_optional_server_is_rejected():
    with pytest.raises(MalformedTemplate):
        InterfaceDecl("svc", Role.SERVER, server("x", "a/0").signature, optional=True)


def test_duplicate_interface_names_rejected():
    with pytest.raises(MalformedTemplate):
        ComponentTemplate("t", (server("a", "x/0"), client("a", "x/0")), Primitive("echo"))


def test_instantiate_primitive(library):
    inst = Runtime().instantiate("echo", library)
    assert inst.state is LifecycleState.CREATED
    assert inst.children is None


def test_instantiate_composite_has_inactive_internal_binding(library):
    rt = Runtime()
    inst = rt.instantiate("pair", library)
    assert inst.children == [f"{inst.id}/user", f"{inst.id}/echo"]
    internal = rt.bindings_in(inst.id)
    assert len(internal) == 1 and not internal[0].active
    rt.start(inst.id)
    assert internal[0].active
    assert rt.invoke(inst.id, "run", "echo", (7,)) == 7


def test_composite_binding_to_undeclared_interface_is_malformed():
    lib = TemplateLibrary()
    lib.update_from_adl("""
        component a { client x(f/0); behavior echo; }
        component b { server y(f/0); behavior echo; }
        component c { contains a b; bind a.x -> b.nope; }
    """)
    with pytest.raises(MalformedTemplate):
        Runtime().instantiate("c", lib)


def test_unknown_child_is_malformed():
    lib = TemplateLibrary()
    lib.update_from_adl("component c { server s(f/0); contains ghost; }")
    with pytest.raises(MalformedTemplate):
        lib.check("c")


def test_bind_errors(library):
    rt = Runtime()
    user = rt.instantiate("user", library)
    echo = rt.instantiate("echo", library)
    other = rt.instantiate("echo", library)
    with pytest.raises(RoleMismatch):
        rt.bind((echo.id, "svc"), (user.id, "run"))
    b = rt.bind((user.id, "svc"), (echo.id, "svc"))
    with pytest.raises(AlreadyBound):
        rt.bind((user.id, "svc"), (other.id, "svc"))
    assert rt.introspect(user.id, "binding") == [b]


def test_signature_subset_relation():
    lib = TemplateLibrary()
    lib.update_from_adl("""
        component wide { client s(a/0, b/0, c/0); behavior echo; }
        component narrow { server s(a/0, b/0); behavior echo; }
        component exact { server s(a/0, b/0, c/0, d/1); behavior echo; }
    """)
    rt = Runtime()
    w, n, e = (rt.instantiate(t, lib) for t in ("wide", "narrow", "exact"))
    with pytest.raises(SignatureMismatch):
        rt.bind((w.id, "s"), (n.id, "s"))
    assert rt.bind((w.id, "s"), (e.id, "s")).server == (e.id, "s")


def test_binding_active_iff_both_started(library):
    rt = Runtime()
    user = rt.instantiate("user", library)
    echo = started(rt, library, "echo")
    b = rt.bind((user.id, "svc"), (echo.id, "svc"))
    assert not b.active
    rt.start(user.id)
    assert b.active
    rt.stop(echo.id)
    assert not b.active
    with pytest.raises(Unbound):
        rt.invoke(user.id, "svc", "echo", (1,))


def test_unbind_then_invoke_is_unbound(library):
    rt = Runtime()
    user = rt.instantiate("user", library)
    echo = started(rt, library, "echo")
    b = rt.bind((user.id, "svc"), (echo.id, "svc"))
    rt.start(user.id)
    before = len(rt.bindings)
    rt.unbind(b)
    assert len(rt.bindings) == before - 1
    with pytest.raises(Unbound):
        rt.invoke(user.id, "svc", "echo", (1,))
    with pytest.raises(UnknownBinding):
        rt.unbind("b999")


def test_invoke_identity_and_interceptor_order(library):
    rt = Runtime()
    echo = started(rt, library, "echo")
    assert rt.invoke(echo.id, "svc", "echo", ("x",)) == "x"
    log = []
    rt.add_interceptor(echo.id, "svc", Tracing("i1", log))
    rt.add_interceptor(echo.id, "svc", Tracing("i2", log))
    assert rt.invoke(echo.id, "svc", "echo", ("x",)) == "x"
    assert log == ["i1.before", "i2.before", "i2.after", "i1.after"]


def test_veto_aborts_before_target(library):
    rt = Runtime()
    rec = started(rt, library, "recorder")
    rt.add_interceptor(rec.id, "svc", Refuse())
    with pytest.raises(InterceptorVeto):
        rt.invoke(rec.id, "svc", "echo", (1,))
    assert rec.behavior.calls == []


def test_not_started(library):
    rt = Runtime()
    echo = rt.instantiate("echo", library)
    with pytest.raises(NotStarted):
        rt.invoke(echo.id, "svc", "echo", (1,))


def test_facets(library):
    rt = Runtime()
    echo = rt.instantiate("echo", library)
    assert rt.introspect(echo.id, "content") == []
    assert rt.introspect(echo.id, "lifecycle") is LifecycleState.CREATED
    with pytest.raises(UnknownFacet):
        rt.introspect(echo.id, "quota")
    rt.add_facet(echo.id, "quota", lambda runtime, inst: 3)
    assert rt.introspect(echo.id, "quota") == 3


def test_binding_facet_after_two_binds():
    lib = TemplateLibrary()
    lib.update_from_adl("""
        component two { client a(f/0); client b(f/0); behavior echo; }
        component srv { server a(f/0); server b(f/0); behavior echo; }
    """)
    rt = Runtime()
    two, srv = rt.instantiate("two", lib), rt.instantiate("srv", lib)
    rt.bind((two.id, "a"), (srv.id, "a"))
    rt.bind((two.id, "b"), (srv.id, "b"))
    assert len(rt.introspect(two.id, "binding")) == 2


def test_lifecycle_transitions(library):
    rt = Runtime()
    pair = rt.instantiate("pair", library)
    rt.start(pair.id)
    assert rt.get(pair.id).state is LifecycleState.STARTED
    with pytest.raises(IllegalTransition):
        rt.start(pair.id)
    rt.stop(pair.id)
    assert all(rt.get(c).state is LifecycleState.STOPPED for c in pair.children)
    with pytest.raises(IllegalTransition):
        rt.start(pair.children[0])
    rt.start(pair.id)


def test_unbound_mandatory_client_blocks_start(library):
    lib = TemplateLibrary(library)
    lib.update_from_adl("""
        component half { server run(echo/1); client svc(echo/1); contains user; }
    """)
    rt = Runtime()
    half = rt.instantiate("half", lib)
    with pytest.raises(UnboundMandatoryInterface):
        rt.start(half.id)
    echo = started(rt, lib, "echo")
    rt.bind((half.id, "svc"), (echo.id, "svc"))
    rt.start(half.id)
    # the child's client is forwarded through the composite's client
    assert rt.invoke(half.id, "run", "echo", (3,)) == 3


def test_quiesce_waits_for_inflight_call(library):
    gate = threading.Event()
    entered = threading.Event()

    class Slow(Interceptor):
        def before(self, instance, interface, op, args):
            entered.set()
            gate.wait(5)

    rt = Runtime()
    echo = started(rt, library, "echo")
    rt.add_interceptor(echo.id, "svc", Slow())
    worker = threading.Thread(target=rt.invoke, args=(echo.id, "svc", "echo", (1,)))
    worker.start()
    entered.wait(5)
    with pytest.raises(QuiescenceError):
        with rt.quiesce([echo.id], timeout=0.05):
            pass
    threading.Timer(0.05, gate.set).start()
    t0 = time.monotonic()
    with rt.quiesce([echo.id], timeout=5):
        assert rt.inflight(echo.id) == 0
    assert time.monotonic() - t0 >= 0.03
    worker.join()
