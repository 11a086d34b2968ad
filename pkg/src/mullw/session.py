"""End-to-end session: load, instrument, compile, find tests, baseline, enumerate,
execute mutants, persist.

Progress is reported as structured ``<step>:<event>:<detail>`` log records on
the ``mullw.session`` logger.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .cache import ORIGINAL, ArtifactCache, CacheKey, compile_cached
from .config import SessionConfig
from .errors import InvalidModule, NoTestsFound
from .execution import (
    BaselineResult, Estimate, MutantResult, SessionPlan, dry_run, execute_mutant, plan, run_baseline,
)
from .instrumentation import coverage, instrument, instrument_bytes, reachable_functions
from .module_store import LoadedModule, load_modules
from .mutation.engine import MutationPoint, apply_mutation, enumerate_points
from .reporting import persist
from .runtime import Artifact, Runtime
from .test_framework import Framework, TestCase, find_tests_custom, find_tests_simple

log = logging.getLogger("mullw.session")

STEPS = ("load", "instrument", "compile", "find_tests", "baseline", "enumerate", "execute", "persist")


def event(step: str, name: str, detail: object = "") -> None:
    log.info("%s:%s:%s", step, name, detail)


@dataclass
class SessionRecord:
    config: SessionConfig
    modules: list[LoadedModule]
    tests: list[TestCase]
    baseline: list[BaselineResult]
    points: list[MutationPoint]
    plan: SessionPlan
    estimate: Estimate
    dry_run: bool
    results: list[MutantResult] = field(default_factory=list)
    # mp_id -> smallest distance of any candidate test
    min_distance: dict[str, int] = field(default_factory=dict)
    mutant_phase_ms: float = 0.0
    runtime: Runtime | None = field(default=None, repr=False)
    cache: ArtifactCache | None = field(default=None, repr=False)
    db_path: Path | None = None

    def result(self, mp_id: str) -> MutantResult | None:
        for r in self.results:
            if r.mp_id == mp_id:
                return r
        return None


def _check_stems(modules: list[LoadedModule]) -> None:
    seen: dict[str, str] = {}
    for m in modules:
        if m.stem in seen:
            raise InvalidModule(m.path, f"module name {m.stem!r} already used by {seen[m.stem]}")
        seen[m.stem] = m.path


def build_session(config: SessionConfig, runtime: Runtime | None = None) -> SessionRecord:
    """Run Steps 1 to 7 and return the in-memory session record."""
    runtime = runtime or Runtime()
    cache_dir = config.effective_cache_dir()
    cache = ArtifactCache(cache_dir, runtime) if cache_dir is not None else None

    event("load", "start", len(config.bitcode_files))
    modules = load_modules(config.bitcode_files, config.base_dir)
    _check_stems(modules)
    for m in modules:
        event("load", "module", f"{m.path} {m.checksum[:12]}")

    event("instrument", "start", len(modules))
    instrumented = [instrument(m) for m in modules]
    event("instrument", "done", sum(len(i.probes) for i in instrumented))

    event("compile", "start", len(modules))
    originals = []
    for m, inst in zip(modules, instrumented):
        compiled = compile_cached(runtime, cache, CacheKey(m.checksum, ORIGINAL),
                                  lambda inst=inst: inst.bytes)
        originals.append(Artifact(m.id, m.stem, compiled))
    event("compile", "done", f"compilations={runtime.counters.compilations}")

    event("find_tests", "start", config.test_framework.value)
    if config.test_framework is Framework.SIMPLE:
        tests = find_tests_simple(modules)
    else:
        tests = find_tests_custom(modules, list(config.custom_tests))
    if not tests:
        raise NoTestsFound()
    event("find_tests", "done", len(tests))

    event("baseline", "start", len(tests))
    baseline = run_baseline(runtime, tests, originals, config.timeout_ms)
    coverages = {}
    for b in baseline:
        if b.original_failure:
            event("baseline", "excluded", f"{b.test.name} {b.status}")
            continue
        coverages[b.test.test_id] = coverage(b.tree)
    event("baseline", "done", f"passed={len(coverages)}")

    event("enumerate", "start", ",".join(o.value for o in config.mutation_operators))
    covered: set = set()
    for cov in coverages.values():
        covered |= reachable_functions(cov, config.max_distance)
    points = enumerate_points(modules, config.mutation_operators, covered,
                              config.exclude_functions)
    session_plan = plan(coverages, points, config.max_distance)
    estimate = dry_run(session_plan, config.timeout_ms)
    event("enumerate", "done", f"points={len(points)} runs={session_plan.planned_runs}")

    record = SessionRecord(config, modules, tests, baseline, points, session_plan, estimate,
                           config.dry_run, runtime=runtime, cache=cache)
    for mp_id, cands in session_plan.candidates.items():
        if cands:
            record.min_distance[mp_id] = cands[0][1]

    if config.dry_run:
        event("execute", "skipped",
              f"planned_runs={estimate.planned_runs} worst_case_ms={estimate.worst_case_ms}")
        return record

    event("execute", "start", len(points))
    by_id = {t.test_id: t for t in tests}
    started = time.perf_counter()
    for point in points:
        module = modules[point.func_ref[0]]
        candidates = [by_id[t] for t, _ in session_plan.candidates[point.mp_id]]
        compiled = compile_cached(
            runtime, cache, CacheKey(module.checksum, point.mp_id),
            lambda p=point, m=module: instrument_bytes(m, apply_mutation(p, m.bytes)).bytes)
        artifacts = list(originals)
        artifacts[module.id] = Artifact(module.id, module.stem, compiled)
        result = execute_mutant(point, candidates, config.fail_fast, config.timeout_ms,
                                runtime=runtime, artifacts=artifacts)
        record.results.append(result)
        event("execute", "mutant", f"{point.mp_id} {result.outcome.value}")
    record.mutant_phase_ms = (time.perf_counter() - started) * 1000.0
    event("execute", "done", f"mutant_runs={runtime.counters.mutant_runs}")
    return record


def run_session(config: SessionConfig, db_path: str | Path,
                runtime: Runtime | None = None) -> SessionRecord:
    """Steps 1 to 8. Errors propagate as ``MullwError`` subclasses."""
    record = build_session(config, runtime)
    event("persist", "start", db_path)
    record.db_path = persist(record, db_path)
    event("persist", "done", db_path)
    return record
