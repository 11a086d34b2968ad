"""Sandboxed test runs, the mutant x test plan, fail-fast execution, dry-run estimates.

Isolation is per run inside the embedded runtime: every run gets a fresh store,
so linear memory, globals and probe state never leak between runs. A timer
bumps the engine epoch at the deadline, which interrupts the running code.
"""

from __future__ import annotations

import enum
import logging
import re
import threading
import time
from dataclasses import dataclass, field

import wasmtime

from .errors import InstantiationFailure
from .instrumentation import (
    ENTER, EXIT, PROBE_MODULE, DynamicCallTree, ProbeRecorder, build_call_tree,
)
from .runtime import Artifact, Runtime
from .test_framework import TestCase, Verdict, judge

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_MS = 3000
HOST_EXIT = (PROBE_MODULE, "exit")


class StatusKind(enum.Enum):
    PASSED = "Passed"
    FAILED = "Failed"
    TIMEOUT = "Timeout"
    CRASHED = "Crashed"
    ABNORMAL_EXIT = "AbnormalExit"


@dataclass(frozen=True)
class ExecutionStatus:
    kind: StatusKind
    code: int | None = None

    @property
    def passed(self) -> bool:
        return self.kind is StatusKind.PASSED

    def __str__(self) -> str:
        if self.kind is StatusKind.ABNORMAL_EXIT:
            return f"AbnormalExit({self.code})"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "ExecutionStatus":
        m = re.fullmatch(r"AbnormalExit\((-?\d+)\)", text)
        if m:
            return cls(StatusKind.ABNORMAL_EXIT, int(m.group(1)))
        return cls(StatusKind(text))


PASSED = ExecutionStatus(StatusKind.PASSED)
FAILED = ExecutionStatus(StatusKind.FAILED)
TIMEOUT = ExecutionStatus(StatusKind.TIMEOUT)
CRASHED = ExecutionStatus(StatusKind.CRASHED)


def abnormal_exit(code: int) -> ExecutionStatus:
    return ExecutionStatus(StatusKind.ABNORMAL_EXIT, code)


class HostExit(Exception):
    """Raised from the host ``exit`` import to unwind out of the guest."""

    def __init__(self, code: int):
        super().__init__(code)
        self.code = code


def _host_exit(code):
    raise HostExit(code)


def _noop(_idx):
    pass


def _instantiate(store, artifacts: list[Artifact], recorder: ProbeRecorder | None):
    # function types belong to one engine, so build this per store
    i32_void = wasmtime.FuncType([wasmtime.ValType.i32()], [])
    instances: dict[str, wasmtime.Instance] = {}
    by_id: dict[int, wasmtime.Instance] = {}
    for art in artifacts:
        imports = art.module.imports
        externs = []
        for k, imp in enumerate(imports):
            probe_slot = art.instrumented and k >= len(imports) - 2
            if probe_slot:
                if imp.module != PROBE_MODULE or imp.name not in (ENTER, EXIT):
                    raise InstantiationFailure(f"{art.name}: probe imports missing")
                if recorder is None:
                    hook = _noop
                else:
                    enter, exit_ = recorder.hooks(art.module_id)
                    hook = enter if imp.name == ENTER else exit_
                externs.append(wasmtime.Func(store, i32_void, hook))
            elif (imp.module, imp.name) == HOST_EXIT:
                externs.append(wasmtime.Func(store, i32_void, _host_exit))
            elif imp.module in instances:
                ext = instances[imp.module].exports(store).get(imp.name)
                if ext is None:
                    raise InstantiationFailure(
                        f"{art.name}: {imp.module}.{imp.name} is not exported")
                externs.append(ext)
            else:
                raise InstantiationFailure(
                    f"{art.name}: unresolved import {imp.module}.{imp.name}")
        inst = wasmtime.Instance(store, art.module, externs)
        instances[art.name] = inst
        by_id[art.module_id] = inst
    return by_id


@dataclass(frozen=True)
class RunOutcome:
    status: ExecutionStatus
    duration_ms: float
    value: object = None


def sandbox_run(runtime: Runtime, artifacts: list[Artifact], test: TestCase, timeout_ms: int,
                recorder: ProbeRecorder | None = None) -> RunOutcome:
    """Run one test in a fresh instance set and classify how it ended."""
    engine = runtime.engine
    store = wasmtime.Store(engine)
    store.set_epoch_deadline(1)
    timer = threading.Timer(timeout_ms / 1000.0, engine.increment_epoch)
    value = None
    started = time.perf_counter()
    timer.start()
    try:
        try:
            instances = _instantiate(store, artifacts, recorder)
            module_id, export = test.invoke
            func = instances[module_id].exports(store).get(export)
            if not isinstance(func, wasmtime.Func):
                raise InstantiationFailure(f"test entry {export} is not an exported function")
        except wasmtime.Trap:
            raise
        except (wasmtime.WasmtimeError, KeyError) as exc:
            raise InstantiationFailure(str(exc)) from None
        value = func(store, *test.arguments)
    except HostExit as exc:
        status = abnormal_exit(exc.code)
    except wasmtime.Trap as exc:
        status = TIMEOUT if exc.trap_code == wasmtime.TrapCode.INTERRUPT else CRASHED
    except InstantiationFailure:
        raise
    except (wasmtime.WasmtimeError, TypeError) as exc:
        log.debug("run of %s failed outside a trap: %s", test.name, exc)
        status = CRASHED
    else:
        status = PASSED if judge(test.framework, value) is Verdict.PASSED else FAILED
    finally:
        timer.cancel()
        timer.join()
    duration = (time.perf_counter() - started) * 1000.0
    return RunOutcome(status, duration, value)


# -- baseline -----------------------------------------------------------------

@dataclass
class BaselineResult:
    test: TestCase
    status: ExecutionStatus
    tree: DynamicCallTree
    duration_ms: float

    @property
    def original_failure(self) -> bool:
        return not self.status.passed


def run_baseline(runtime: Runtime, tests: list[TestCase], artifacts: list[Artifact],
                 timeout_ms: int) -> list[BaselineResult]:
    results = []
    for test in tests:
        recorder = ProbeRecorder()
        outcome = sandbox_run(runtime, artifacts, test, timeout_ms, recorder)
        runtime.counters.baseline_runs += 1
        tree = build_call_tree(recorder.events, test.entry)
        results.append(BaselineResult(test, outcome.status, tree, outcome.duration_ms))
    return results


# -- planning -----------------------------------------------------------------

@dataclass
class SessionPlan:
    n_tests: int
    n_mutants: int
    runs: list[tuple[str, int]]
    # mp_id -> [(test_id, distance)] nearest first
    candidates: dict[str, list[tuple[int, int]]] = field(default_factory=dict)

    @property
    def planned_runs(self) -> int:
        return len(self.runs)


def plan(coverages: dict[int, dict], points, max_distance: int) -> SessionPlan:
    """Pair every point with the tests that reach its function within ``max_distance``.

    ``coverages`` maps test_id to that test's coverage map; it should only hold
    tests that passed at baseline.
    """
    runs: list[tuple[str, int]] = []
    candidates: dict[str, list[tuple[int, int]]] = {}
    for point in points:
        found = []
        for test_id, cov in coverages.items():
            d = cov.get(point.func_ref)
            if d is not None and 1 <= d <= max_distance:
                found.append((d, test_id))
        found.sort()
        candidates[point.mp_id] = [(t, d) for d, t in found]
        runs.extend((point.mp_id, t) for _, t in found)
    return SessionPlan(len(coverages), len(points), runs, candidates)


# -- mutant execution ---------------------------------------------------------

class Outcome(enum.Enum):
    KILLED = "killed"
    SURVIVED = "survived"


@dataclass
class MutantResult:
    mp_id: str
    outcome: Outcome
    per_test: list[tuple[int, ExecutionStatus, float]]
    runs_executed: int

    @property
    def killed(self) -> bool:
        return self.outcome is Outcome.KILLED

    @property
    def killing_test(self) -> int | None:
        for test_id, status, _ in self.per_test:
            if not status.passed:
                return test_id
        return None


def execute_mutant(point, candidates: list[TestCase], fail_fast: bool, timeout_ms: int, *,
                   runtime: Runtime, artifacts: list[Artifact]) -> MutantResult:
    """Run the candidate tests, in order, against an already compiled mutant."""
    per_test = []
    for test in candidates:
        outcome = sandbox_run(runtime, artifacts, test, timeout_ms)
        runtime.counters.mutant_runs += 1
        per_test.append((test.test_id, outcome.status, outcome.duration_ms))
        if fail_fast and not outcome.status.passed:
            break
    killed = any(not status.passed for _, status, _ in per_test)
    return MutantResult(point.mp_id, Outcome.KILLED if killed else Outcome.SURVIVED,
                        per_test, len(per_test))


# -- dry run ------------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    n_tests: int
    n_mutants: int
    planned_runs: int
    worst_case_ms: int


def dry_run(session_plan: SessionPlan, timeout_ms: int) -> Estimate:
    """Pessimistic runtime: every planned run hits the timeout."""
    return Estimate(session_plan.n_tests, session_plan.n_mutants,
                    session_plan.planned_runs, session_plan.planned_runs * timeout_ms)
