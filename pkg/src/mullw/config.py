"""Session configuration file (YAML) parsing and validation."""

from __future__ import annotations

import difflib
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ParseError, ValidationError
from .execution import DEFAULT_TIMEOUT_MS
from .mutation.operators import ALL_OPERATORS, OperatorId
from .test_framework import CustomTestConfig, Framework

DEFAULT_MAX_DISTANCE = 128
CACHE_ENV_VAR = "MULLW_CACHE_DIR"

KNOWN_KEYS = (
    "bitcode_files", "mutation_operators", "test_framework", "custom_tests",
    "timeout_ms", "max_distance", "fail_fast", "cache_directory",
    "exclude_functions", "dry_run",
)
CUSTOM_TEST_KEYS = ("name", "method", "program", "arguments")


@dataclass(frozen=True)
class SessionConfig:
    bitcode_files: tuple[str, ...]
    test_framework: Framework
    mutation_operators: tuple[OperatorId, ...] = ALL_OPERATORS
    custom_tests: tuple[CustomTestConfig, ...] = ()
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    max_distance: int = DEFAULT_MAX_DISTANCE
    fail_fast: bool = False
    cache_directory: str | None = None
    exclude_functions: tuple[str, ...] = ()
    dry_run: bool = False
    # directory relative paths resolve against; the config file's directory
    base_dir: str = field(default=".", compare=False)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def effective_cache_dir(self) -> Path | None:
        override = os.environ.get(CACHE_ENV_VAR)
        if override:
            return Path(override)
        if self.cache_directory:
            return self.resolve(self.cache_directory)
        return None

    def with_overrides(self, **changes) -> "SessionConfig":
        return replace(self, **changes)

    def as_rows(self) -> list[tuple[str, str]]:
        """Flat key/value view, used for the results database."""
        return [
            ("bitcode_files", ",".join(self.bitcode_files)),
            ("mutation_operators", ",".join(o.value for o in self.mutation_operators)),
            ("test_framework", self.test_framework.value),
            ("custom_tests", ";".join(f"{c.name}={c.program or c.method}"
                                      f"({','.join(map(str, c.arguments))})"
                                      for c in self.custom_tests)),
            ("timeout_ms", str(self.timeout_ms)),
            ("max_distance", str(self.max_distance)),
            ("fail_fast", str(self.fail_fast).lower()),
            ("cache_directory", self.cache_directory or ""),
            ("exclude_functions", ",".join(self.exclude_functions)),
            ("dry_run", str(self.dry_run).lower()),
        ]


def _unknown_key(key, known, where):
    hint = difflib.get_close_matches(str(key), known, n=1)
    suggestion = f" (did you mean {hint[0]!r}?)" if hint else ""
    return ValidationError(f"{where}{key}", f"unknown key{suggestion}")


def _int(name, value, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(name, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(name, f"must be >= {minimum}, got {value}")
    return value


def _bool(name, value):
    if not isinstance(value, bool):
        raise ValidationError(name, f"expected true or false, got {value!r}")
    return value


def _str_list(name, value):
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ValidationError(name, "expected a list of strings")
    return tuple(value)


def _custom_tests(value):
    if not isinstance(value, list):
        raise ValidationError("custom_tests", "expected a list")
    out = []
    for k, item in enumerate(value):
        where = f"custom_tests[{k}]"
        if not isinstance(item, dict):
            raise ValidationError(where, "expected a mapping")
        for key in item:
            if key not in CUSTOM_TEST_KEYS:
                raise _unknown_key(key, CUSTOM_TEST_KEYS, f"{where}.")
        for required in ("name", "method"):
            if not isinstance(item.get(required), str) or not item[required]:
                raise ValidationError(f"{where}.{required}", "required string")
        program = item.get("program")
        if program is not None and not isinstance(program, str):
            raise ValidationError(f"{where}.program", "expected a string")
        args = item.get("arguments", [])
        if not isinstance(args, list):
            raise ValidationError(f"{where}.arguments", "expected a list of integers")
        for a in args:
            _int(f"{where}.arguments", a)
            if not -2**31 <= a < 2**31:
                raise ValidationError(f"{where}.arguments", f"{a} does not fit in 32 bits")
        out.append(CustomTestConfig(item["name"], item["method"], tuple(args), program))
    return tuple(out)


def config_from_mapping(data, base_dir: str | os.PathLike = ".") -> SessionConfig:
    if not isinstance(data, dict):
        raise ValidationError("<root>", "configuration must be a mapping")
    for key in data:
        if key not in KNOWN_KEYS:
            raise _unknown_key(key, KNOWN_KEYS, "")

    if "bitcode_files" not in data:
        raise ValidationError("bitcode_files", "required")
    files = _str_list("bitcode_files", data["bitcode_files"])
    if not files:
        raise ValidationError("bitcode_files", "must not be empty")

    if "test_framework" not in data:
        raise ValidationError("test_framework", "required")
    try:
        framework = Framework(data["test_framework"])
    except ValueError:
        raise ValidationError("test_framework", f"expected SimpleTest or CustomTest, "
                              f"got {data['test_framework']!r}") from None

    ops = ALL_OPERATORS
    if "mutation_operators" in data:
        names = _str_list("mutation_operators", data["mutation_operators"])
        parsed = []
        for name in names:
            try:
                parsed.append(OperatorId.parse(name))
            except ValueError:
                known = [o.value for o in ALL_OPERATORS]
                hint = difflib.get_close_matches(name, known, n=1)
                extra = f" (did you mean {hint[0]!r}?)" if hint else ""
                raise ValidationError("mutation_operators",
                                      f"unknown operator {name!r}{extra}") from None
        ops = tuple(dict.fromkeys(parsed))

    custom = ()
    if framework is Framework.CUSTOM:
        if "custom_tests" not in data:
            raise ValidationError("custom_tests", "required when test_framework is CustomTest")
        custom = _custom_tests(data["custom_tests"])
    elif "custom_tests" in data:
        raise ValidationError("custom_tests", "only allowed with test_framework CustomTest")

    cache_dir = data.get("cache_directory")
    if cache_dir is not None and not isinstance(cache_dir, str):
        raise ValidationError("cache_directory", "expected a path string")

    return SessionConfig(
        bitcode_files=files,
        test_framework=framework,
        mutation_operators=ops,
        custom_tests=custom,
        timeout_ms=_int("timeout_ms", data.get("timeout_ms", DEFAULT_TIMEOUT_MS), 1),
        max_distance=_int("max_distance", data.get("max_distance", DEFAULT_MAX_DISTANCE), 1),
        fail_fast=_bool("fail_fast", data.get("fail_fast", False)),
        cache_directory=cache_dir,
        exclude_functions=_str_list("exclude_functions", data.get("exclude_functions", [])),
        dry_run=_bool("dry_run", data.get("dry_run", False)),
        base_dir=str(base_dir),
    )


def parse_config_text(text: str, base_dir: str | os.PathLike = ".") -> SessionConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        reason = getattr(exc, "problem", None) or str(exc)
        raise ParseError(line, reason) from None
    return config_from_mapping(data, base_dir)


def parse_config(path: str | os.PathLike) -> SessionConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ParseError(None, f"config file not found: {path}") from None
    return parse_config_text(text, path.parent)
