"""Test discovery and verdicts.

A framework is a finder (modules -> test cases) plus a judging rule for the
value a test entry returns. Two are provided: ``SimpleTest``, where every
exported function whose name starts with ``test`` is a test returning 1 on
success, and ``CustomTest``, where tests are listed in the session config and
return 0 on success like a process exit code.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import DuplicateTestName, UnknownTestFunction, ValidationError
from .module_store import LoadedModule

SIMPLE_TEST_PREFIX = "test"


class Framework(enum.Enum):
    SIMPLE = "SimpleTest"
    CUSTOM = "CustomTest"


class Verdict(enum.Enum):
    PASSED = "Passed"
    FAILED = "Failed"


@dataclass(frozen=True)
class TestVerdict:
    status: Verdict
    duration: float


@dataclass(frozen=True)
class CustomTestConfig:
    name: str
    method: str
    arguments: tuple[int, ...] = ()
    # exported function actually invoked; defaults to ``method``
    program: str | None = None


@dataclass(frozen=True)
class TestCase:
    test_id: int
    name: str
    entry: tuple[int, int]
    arguments: tuple[int, ...]
    framework: Framework
    export: str = field(default="", compare=False)
    # (module id, export name) of the driver invoked instead of the entry
    driver: tuple[int, str] | None = None

    __test__ = False  # keep pytest from collecting this class

    @property
    def invoke(self) -> tuple[int, str]:
        return self.driver if self.driver is not None else (self.entry[0], self.export)


def find_tests_simple(modules: list[LoadedModule]) -> list[TestCase]:
    tests: list[TestCase] = []
    seen: dict[str, int] = {}
    for module in modules:
        exports = sorted(module.exported_functions().items(), key=lambda kv: (kv[1], kv[0]))
        for export, func_index in exports:
            if not export.startswith(SIMPLE_TEST_PREFIX):
                continue
            if module.function(func_index).is_imported:
                continue
            if export in seen:
                raise DuplicateTestName(export)
            seen[export] = func_index
            tests.append(TestCase(len(tests), export, (module.id, func_index), (),
                                  Framework.SIMPLE, export))
    return tests


def _find_export(modules, name):
    for module in modules:
        idx = module.exported_functions().get(name)
        if idx is not None and not module.function(idx).is_imported:
            return module, idx
    raise UnknownTestFunction(name)


def find_tests_custom(modules: list[LoadedModule], config: list[CustomTestConfig]) -> list[TestCase]:
    tests: list[TestCase] = []
    names: set[str] = set()
    for item in config:
        if item.name in names:
            raise DuplicateTestName(item.name)
        names.add(item.name)
        module, idx = _find_export(modules, item.method)
        driver = None
        invoked = (module, idx)
        if item.program is not None and item.program != item.method:
            invoked = _find_export(modules, item.program)
            driver = (invoked[0].id, item.program)
        fn = invoked[0].function(invoked[1])
        if fn.param_count != len(item.arguments):
            raise ValidationError(
                "custom_tests", f"{item.name}: {item.program or item.method} takes "
                f"{fn.param_count} arguments, {len(item.arguments)} given")
        tests.append(TestCase(len(tests), item.name, (module.id, idx), tuple(item.arguments),
                              Framework.CUSTOM, item.method, driver))
    return tests


def judge(framework: Framework, returned_value: int | None) -> Verdict:
    """Classify a normally completed test run by its return value."""
    is_int = isinstance(returned_value, int) and not isinstance(returned_value, bool)
    if framework is Framework.SIMPLE:
        return Verdict.PASSED if is_int and returned_value == 1 else Verdict.FAILED
    # a void entry that returns normally counts as exit code 0
    if returned_value is None or (is_int and returned_value == 0):
        return Verdict.PASSED
    return Verdict.FAILED
