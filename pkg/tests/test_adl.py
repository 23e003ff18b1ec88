import pytest

from adaptmw.core import parse_adl, parse_one, serialize_adl
from adaptmw.core.model import Composite, Primitive
from adaptmw.errors import AdlSyntaxError, MalformedTemplate

TEXT = """
# a transaction personality assembled from two parts
component flat-tx {
    server transaction(begin/0, commit/0, abort/0);
    client log(write/1) optional;
    contains engine journal;
    bind engine.log -> journal.log;
}
component engine { server transaction(begin/0, commit/0, abort/0); client log(write/1); }
component journal { server log(write/1); behavior recorder; }  // trailing comment
"""


def test_parse_blocks():
    flat, engine, journal = parse_adl(TEXT)
    assert flat.is_composite
    assert flat.content == Composite(("engine", "journal"),
                                     flat.content.bindings)
    assert flat.interface("log").optional
    assert engine.content == Primitive("engine")
    assert journal.content == Primitive("recorder")


def test_round_trip():
    templates = parse_adl(TEXT)
    again = parse_adl(serialize_adl(templates))
    assert again == templates
    assert serialize_adl(again) == serialize_adl(templates)


def test_adl_property_is_parseable():
    t = parse_adl(TEXT)[0]
    assert parse_one(t.adl) == t


@pytest.mark.parametrize("text", [
    "component { }",
    "component a { server s(); }",
    "component a { server s(x/0) }",
    "component a { server s(x/0); } component a { server s(x/0); }",
    "component a { wibble; }",
    "component a { server s(x/0); $ }",
])
def test_syntax_errors(text):
    with pytest.raises(MalformedTemplate):
        parse_adl(text)


def test_syntax_error_reports_line():
    with pytest.raises(AdlSyntaxError) as info:
        parse_adl("component a {\n  server s(x/0);\n  bogus thing;\n}")
    assert info.value.line == 3
