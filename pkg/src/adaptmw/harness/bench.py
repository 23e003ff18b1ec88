"""Interception overhead micro-benchmark.

Workload: a driver component calls ``echo/1`` on a server component through
a binding.  The woven configuration installs ``chain_length`` pass-through
interceptors on the server interface; the bare one installs none.  Both
configurations live in the same runtime and are timed in alternating
blocks so drift in machine load hits them alike.

Timing is only accepted after the woven results have been checked
identical, value and type, to the bare results for every argument.
"""
from __future__ import annotations

import gc
import statistics
import time
from dataclasses import dataclass, field
from typing import List

from ..core.adl import parse_adl
from ..core.model import TemplateLibrary
from ..core.runtime import Interceptor, Runtime
from ..errors import BenchPreconditionError, FunctionalMismatch

MIN_CALLS = 100_000
MIN_REPETITIONS = 5
BLOCK = 5_000

WORKLOAD_ADL = """
component bench-server { server svc(echo/1); behavior echo; }
component bench-driver { client svc(echo/1); behavior echo; }
"""


class PassThrough(Interceptor):
    """Runs on every call and changes nothing."""

    def before(self, instance, interface, op, args):
        return None

    def after(self, instance, interface, op, args, result):
        return result


@dataclass
class BenchReport:
    calls: int
    chain_length: int
    repetitions: int
    bare_ns: float              # median per-call latency over repetitions
    woven_ns: float
    overhead_percent: float     # median of the per-repetition overheads
    dispersion_percent: float   # stdev of the per-repetition overheads
    per_repetition: List[float] = field(default_factory=list)
    functional_calls: int = 0

    def lines(self) -> List[str]:
        return [
            f"calls={self.calls} chain={self.chain_length} repetitions={self.repetitions}",
            f"bare={self.bare_ns:.1f}ns/call woven={self.woven_ns:.1f}ns/call",
            f"overhead={self.overhead_percent:.2f}% dispersion={self.dispersion_percent:.2f}%",
            "per-repetition=" + ",".join(f"{x:.2f}" for x in self.per_repetition),
            f"functional check: {self.functional_calls} calls identical",
        ]


def _setup(chain_length: int):
    library = TemplateLibrary()
    for t in parse_adl(WORKLOAD_ADL):
        library.add(t)
    rt = Runtime()
    pairs = []
    for label, chain in (("bare", 0), ("woven", chain_length)):
        server = rt.instantiate("bench-server", library, instance_id=f"{label}-server")
        driver = rt.instantiate("bench-driver", library, instance_id=f"{label}-driver")
        rt.bind((driver.id, "svc"), (server.id, "svc"))
        for _ in range(chain):
            rt.add_interceptor(server.id, "svc", PassThrough())
        rt.start(server.id)
        rt.start(driver.id)
        pairs.append(driver.id)
    return rt, pairs[0], pairs[1]


def _arguments(n: int) -> list:
    kinds = (lambda i: i, lambda i: i / 3, lambda i: str(i), lambda i: (i, -i), lambda i: None)
    return [(kinds[i % len(kinds)](i),) for i in range(n)]


def _identical(a, b) -> bool:
    return type(a) is type(b) and (a == b or repr(a) == repr(b))


def functional_check(rt: Runtime, bare: str, woven: str, calls: int) -> int:
    invoke = rt.invoke
    for args in _arguments(calls):
        x = invoke(bare, "svc", "echo", args)
        y = invoke(woven, "svc", "echo", args)
        if not _identical(x, y):
            raise FunctionalMismatch(f"woven returned {y!r} where bare returned {x!r} for {args!r}")
    return calls


def _time_block(rt: Runtime, driver: str, argv) -> float:
    invoke = rt.invoke
    start = time.perf_counter_ns()
    for args in argv:
        invoke(driver, "svc", "echo", args)
    return (time.perf_counter_ns() - start) / len(argv)


def bench_interception(calls: int = 1_000_000, chain_length: int = 1,
                       repetitions: int = MIN_REPETITIONS,
                       functional_calls: int = None) -> BenchReport:
    """Time ``calls`` invocations bare and woven, ``repetitions`` times each."""
    if calls < MIN_CALLS:
        raise BenchPreconditionError(f"calls must be at least {MIN_CALLS}, got {calls}")
    if repetitions < MIN_REPETITIONS:
        raise BenchPreconditionError(
            f"repetitions must be at least {MIN_REPETITIONS}, got {repetitions}")
    if chain_length < 0:
        raise BenchPreconditionError("chain length cannot be negative")
    rt, bare, woven = _setup(chain_length)
    checked = functional_check(rt, bare, woven, functional_calls or calls)

    argv = [(i,) for i in range(calls)]
    warm = argv[:max(10_000, calls // 10)]
    _time_block(rt, bare, warm)
    _time_block(rt, woven, warm)

    # each repetition interleaves short bare and woven blocks; a block's
    # mean latency is one sample and the repetition keeps the median sample
    size = min(BLOCK, calls)
    blocks = [argv[i:i + size] for i in range(0, calls, size)]
    bare_t, woven_t = [], []
    enabled = gc.isenabled()
    gc.disable()
    try:
        for rep in range(repetitions):
            b_samples, w_samples = [], []
            for j, block in enumerate(blocks):
                if (rep + j) % 2:
                    w_samples.append(_time_block(rt, woven, block))
                    b_samples.append(_time_block(rt, bare, block))
                else:
                    b_samples.append(_time_block(rt, bare, block))
                    w_samples.append(_time_block(rt, woven, block))
            bare_t.append(statistics.median(b_samples))
            woven_t.append(statistics.median(w_samples))
    finally:
        if enabled:
            gc.enable()

    per_rep = [(w - b) / b * 100 for b, w in zip(bare_t, woven_t)]
    bare_ns = statistics.median(bare_t)
    woven_ns = statistics.median(woven_t)
    return BenchReport(calls, chain_length, repetitions, bare_ns, woven_ns,
                       statistics.median(per_rep), statistics.stdev(per_rep), per_rep, checked)
