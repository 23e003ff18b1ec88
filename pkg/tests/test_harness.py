import pytest

from adaptmw.cli import main
from adaptmw.errors import BenchPreconditionError, FunctionalMismatch, ScenarioParseError, TraceMismatch
from adaptmw.harness import bench
from adaptmw.harness.scenario import bundled_scenarios, load_scenario, run_scenario
from conftest import SCENARIOS


def test_bundled_scenarios_listed():
    assert bundled_scenarios() == ["bandwidth-drop", "fig2-baseline", "stable-environment"]


@pytest.mark.parametrize("name", ["fig2-baseline", "bandwidth-drop", "stable-environment"])
def test_bundled_scenarios_match_expected(name):
    result = run_scenario(name)
    assert result.matches


def test_empty_timeline_has_no_rebound():
    result = run_scenario("fig2-baseline")
    assert result.scenario.timeline == []
    assert "Rebound" not in result.trace


def test_bandwidth_drop_rebinds_once():
    result = run_scenario("bandwidth-drop")
    assert [(o.old, o.new) for o in result.rebounds] == [("flat-tx", "lowbw-tx-2")]


def test_mismatch_reports_diff():
    with pytest.raises(TraceMismatch) as info:
        run_scenario("bandwidth-drop", expect="nothing\n")
    assert "+t=10 contract=c1 event=Rebound" in info.value.diff


def test_trace_is_deterministic():
    assert run_scenario("bandwidth-drop").trace == run_scenario("bandwidth-drop").trace


def test_bad_scenarios(tmp_path):
    (tmp_path / "scenario.toml").write_text('environment = "missing.xml"\nadl = "x"\n')
    with pytest.raises(ScenarioParseError):
        load_scenario(tmp_path)
    (tmp_path / "scenario.toml").write_text("this is not toml = = =")
    with pytest.raises(ScenarioParseError):
        load_scenario(tmp_path)
    with pytest.raises(ScenarioParseError):
        load_scenario("no-such-scenario")


def test_cli_run(tmp_path, capsys):
    out = tmp_path / "trace.txt"
    expected = SCENARIOS / "bandwidth-drop" / "expected.trace"
    assert main(["run", "bandwidth-drop", "--trace-out", str(out),
                 "--expect", str(expected)]) == 0
    assert out.read_text() == expected.read_text()
    wrong = SCENARIOS / "fig2-baseline" / "expected.trace"
    assert main(["run", "bandwidth-drop", "--expect", str(wrong)]) == 1
    assert main(["run", "no-such-scenario"]) == 2


def test_cli_directory(tmp_path, capsys):
    store = str(tmp_path / "d.json")
    common = SCENARIOS / "common"
    base = ["dir", "--store", store]
    assert main(base + ["import", "type", "transaction"]) == 0
    assert main(base + ["import", "template", "lowbw", "--parent", "/transaction",
                        "--offer", str(common / "offer-lowbw.xml"),
                        "--personality", str(common / "personality-lowbw.xml")]) == 0
    query = base + ["query", "--need", str(common / "needs-shop.xml"),
                    "--env", str(common / "environment.xml")]
    capsys.readouterr()
    assert main(query) == 0
    assert main(query) == 0
    assert capsys.readouterr().out.splitlines() == ["/transaction/lowbw/lowbw-1"] * 2
    assert main(base + ["rule", "rule transaction: a > b"]) == 0
    assert main(base + ["rule", "rule transaction: b > a"]) == 2
    assert main(base + ["remove", "/transaction/lowbw/lowbw-1"]) == 0
    assert main(base + ["remove", "/transaction/lowbw/lowbw-1"]) == 2
    capsys.readouterr()
    assert main(base + ["show"]) == 0
    assert "lowbw-1" not in capsys.readouterr().out


def test_bench_preconditions():
    with pytest.raises(BenchPreconditionError):
        bench.bench_interception(calls=10)
    with pytest.raises(BenchPreconditionError):
        bench.bench_interception(calls=100_000, repetitions=2)


def test_functional_gate_rejects_altering_interceptor(monkeypatch):
    class Tamper(bench.Interceptor):
        def after(self, instance, interface, op, args, result):
            return result if not isinstance(result, str) else result + "!"

    monkeypatch.setattr(bench, "PassThrough", Tamper)
    with pytest.raises(FunctionalMismatch):
        bench.bench_interception(calls=100_000, chain_length=1)


@pytest.mark.slow
def test_bench_chain_zero_is_near_zero():
    report = bench.bench_interception(calls=100_000, chain_length=0)
    assert report.repetitions == 5
    assert len(report.per_repetition) == 5
    assert report.overhead_percent == sorted(report.per_repetition)[2]
    assert abs(report.overhead_percent) < 5
