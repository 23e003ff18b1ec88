import pathlib

import pytest
from hypothesis import HealthCheck, settings

from adaptmw.core import TemplateLibrary

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

HERE = pathlib.Path(__file__).parent
SCENARIOS = HERE.parent / "src" / "adaptmw" / "scenarios"
FIG4 = (SCENARIOS / "common" / "environment.xml").read_text()

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def fig4_text():
    return FIG4


@pytest.fixture
def library():
    lib = TemplateLibrary()
    lib.update_from_adl("""
        component echo { server svc(echo/1, ping/0); behavior echo; }
        component recorder { server svc(echo/1, ping/0); behavior recorder; }
        component user { client svc(echo/1); server run(echo/1); behavior app; }
        component pair {
            server run(echo/1);
            contains user echo;
            bind user.svc -> echo.svc;
        }
    """)
    return lib
