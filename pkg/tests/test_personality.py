import pytest

from adaptmw.core import Runtime, TemplateLibrary, parse_adl
from adaptmw.errors import CompositionError, InterceptorVeto, MissingInterface, UnknownMember
from adaptmw.personality import (Excludes, Personality, PersonalityRegistry, Requires,
                                 SameVersionMajor, ServiceBundle, assemble, check_coherence,
                                 swap, unweave, validate_bundle, weave)

ADL = """
component shop { server orders(buy/1); client transaction(buy/1); behavior app; }
component kiosk { server orders(buy/1); behavior app; }
component flat-tx-engine { server transaction(buy/1); behavior recorder; }
component nested-tx-engine { server transaction(buy/1); behavior recorder; }
component guard { server security(check/1); behavior veto; }
component front { server transaction(buy/1); client stage(buy/1); behavior app; }
component middle { server stage(buy/1); client last(buy/1); behavior app; }
component back { server last(buy/1); behavior recorder; }
"""


@pytest.fixture
def lib():
    lib = TemplateLibrary()
    for t in parse_adl(ADL):
        lib.add(t)
    return lib


def flat(lib):
    return assemble([lib["flat-tx-engine"]],
                    Personality("flat", "transaction", "flat", "1.3", "flat-tx"), lib)


def test_assemble_single_primitive(lib):
    p = flat(lib)
    assert (p.service, p.model) == ("transaction", "flat")
    t = lib["flat-tx"]
    assert [d.name for d in t.servers()] == ["transaction"]
    assert t.content.children == ("flat-tx-engine",)


def test_assemble_nothing_fails(lib):
    with pytest.raises(CompositionError):
        assemble([], Personality("x", "transaction", "flat", "1.0", "x-t"), lib)


def test_assemble_chain_of_three(lib):
    assemble([lib["front"], lib["middle"], lib["back"]],
             Personality("chain", "transaction", "chained", "1.0", "chain-t"), lib)
    t = lib["chain-t"]
    assert len(t.content.children) == 3
    assert len(t.content.bindings) == 2
    rt = Runtime()
    inst = rt.instantiate("chain-t", lib)
    rt.start(inst.id)
    assert rt.invoke(inst.id, "transaction", "buy", (4,)) == 4
    assert rt.get(f"{inst.id}/back").behavior.calls == [("last", "buy", (4,))]


def test_assemble_dangling_client_fails(lib):
    with pytest.raises(CompositionError):
        assemble([lib["front"]], Personality("x", "transaction", "f", "1.0", "x-t"), lib)


def test_registry_rejects_duplicate_triple():
    reg = PersonalityRegistry()
    reg.register(Personality("a", "transaction", "flat", "1.3", "t"))
    with pytest.raises(CompositionError):
        reg.register(Personality("b", "transaction", "flat", "1.3", "u"))


def test_personality_xml_round_trip():
    p = Personality("g", "security", "acl", "2.1", "guard", ("orders",))
    assert Personality.from_xml(p.to_xml()) == p


TX_NESTED = Personality("tx", "transaction", "nested", "2.0", "t1")
PERSIST = Personality("ps", "persistence", "v1", "1.0", "t2")
LOCK = Personality("lk", "locking", "lightweight-lock", "1.4", "t3")


def registry(*ps):
    reg = PersonalityRegistry()
    for p in ps:
        reg.register(p)
    return reg


def test_bundle_without_constraints_is_ok():
    reg = registry(TX_NESTED, PERSIST)
    assert validate_bundle(ServiceBundle("b", frozenset({"tx", "ps"})), reg) == []


def test_requires_satisfied():
    reg = registry(TX_NESTED, PERSIST)
    bundle = ServiceBundle("b", frozenset({"tx", "ps"}),
                           (Requires("transaction", "persistence"),))
    assert validate_bundle(bundle, reg) == []


def test_excludes_violated_once():
    reg = registry(TX_NESTED, LOCK)
    bundle = ServiceBundle("b", frozenset({"tx", "lk"}),
                           (Excludes("nested", "lightweight-lock"),
                            Requires("transaction", "locking")))
    violations = validate_bundle(bundle, reg)
    assert len(violations) == 1
    assert isinstance(violations[0].constraint, Excludes)


def test_same_version_major():
    a = Personality("a", "transaction", "flat", "2.1", "t")
    b = Personality("b", "persistence", "v1", "3.0", "u")
    assert check_coherence([a, b], [SameVersionMajor("transaction", "persistence")])
    assert not check_coherence([a], [SameVersionMajor("transaction", "persistence")])


def test_unknown_member():
    with pytest.raises(UnknownMember):
        validate_bundle(ServiceBundle("b", frozenset({"ghost"})), registry())


def test_weave_binds_and_intercepts(lib):
    p = flat(lib)
    p = Personality(p.id, p.service, p.model, p.version, p.template, ("orders",))
    rt = Runtime()
    app = rt.instantiate("shop", lib)
    before = dict(app.interfaces)
    comp = weave(rt, app.id, [p], lib)
    shell = rt.get(comp.id)
    assert len(shell.children) == 2
    assert {n: (d.role, d.signature) for n, d in shell.interfaces.items()} == \
        {n: (d.role, d.signature) for n, d in before.items()}
    assert len(comp.binding_ids) == 1
    assert rt.interceptors(app.id, "orders")
    rt.start(comp.id)
    assert rt.invoke(comp.id, "orders", "buy", ("x",)) == "x"
    engine = rt.get(f"{comp.id}/flat/flat-tx-engine").behavior
    assert engine.calls == [("transaction", "buy", ("x",))]
    assert engine.intercepted == [("before", "orders", "buy"), ("after", "orders", "buy")]


def test_weave_nothing_is_identity(lib):
    rt = Runtime()
    bare = rt.instantiate("kiosk", lib)
    rt.start(bare.id)
    app = rt.instantiate("kiosk", lib)
    comp = weave(rt, app.id, [], lib)
    rt.start(comp.id)
    assert len(rt.get(comp.id).children) == 1
    for x in (1, "a", None, 2.5):
        assert rt.invoke(comp.id, "orders", "buy", (x,)) == rt.invoke(bare.id, "orders", "buy", (x,))


def test_weave_missing_interface(lib):
    assemble([lib["guard"]], Personality("g", "security", "acl", "1.0", "guard-p"), lib)
    rt = Runtime()
    app = rt.instantiate("kiosk", lib)
    with pytest.raises(MissingInterface):
        weave(rt, app.id, [Personality("g", "security", "acl", "1.0", "guard-p")], lib)
    assert rt.get(app.id).parent is None


def test_security_veto_through_weaving(lib):
    p = assemble([lib["guard"]],
                 Personality("g", "security", "acl", "1.0", "guard-p", ("orders",)), lib)
    rt = Runtime()
    app = rt.instantiate("kiosk", lib)
    comp = weave(rt, app.id, [p], lib)
    rt.start(comp.id)
    assert rt.invoke(comp.id, "orders", "buy", (1,)) == 1
    rt.get(f"{comp.id}/g/guard").behavior.deny = True
    with pytest.raises(InterceptorVeto):
        rt.invoke(comp.id, "orders", "buy", (1,))


def test_swap_and_unweave(lib):
    p1 = flat(lib)
    p2 = assemble([lib["nested-tx-engine"]],
                  Personality("nested", "transaction", "nested", "1.0", "nested-tx"), lib)
    rt = Runtime()
    app = rt.instantiate("shop", lib)
    comp = weave(rt, app.id, [p1], lib)
    rt.start(comp.id)
    assert swap(rt, comp, p2, lib) == p1
    assert rt.invoke(comp.id, "orders", "buy", (2,)) == 2
    assert rt.get(f"{comp.id}/nested/nested-tx-engine").behavior.calls
    assert f"{comp.id}/flat" not in rt.instances
    assert unweave(rt, comp) == app.id
    assert set(rt.instances) == {app.id}
    assert rt.bindings == {}
