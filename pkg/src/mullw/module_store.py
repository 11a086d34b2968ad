"""Loading, validation and fingerprinting of the tested program's modules."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import wasmtime

from .errors import InvalidModule, ModuleFileNotFound
from .wasm.binary import DecodeError, WasmModule, parse_module

_validator = wasmtime.Engine()


@dataclass(frozen=True)
class FunctionInfo:
    func_index: int
    name: str
    is_imported: bool
    param_count: int
    result_arity: int


@dataclass(frozen=True)
class LoadedModule:
    id: int
    path: str
    bytes: bytes = field(repr=False)
    checksum: str
    functions: tuple[FunctionInfo, ...] = field(repr=False)
    wasm: WasmModule = field(repr=False, compare=False)

    @property
    def stem(self) -> str:
        """Name under which the module's exports are importable by later modules."""
        return Path(self.path).stem

    def function(self, func_index: int) -> FunctionInfo:
        return self.functions[func_index]

    def function_named(self, name: str) -> FunctionInfo | None:
        for fn in self.functions:
            if fn.name == name:
                return fn
        return None

    def exported_functions(self) -> dict[str, int]:
        return {e.name: e.index for e in self.wasm.exports if e.kind == 0}

    def defined_functions(self) -> list[FunctionInfo]:
        return [f for f in self.functions if not f.is_imported]


def checksum(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def validate_bytes(data: bytes) -> None:
    """Run standard module validation; raises ``wasmtime.WasmtimeError``."""
    wasmtime.Module.validate(_validator, data)


def _function_infos(mod: WasmModule) -> tuple[FunctionInfo, ...]:
    n_imports = mod.n_func_imports
    seen: set[str] = set()
    out = []
    for idx, type_idx in enumerate(mod.func_types):
        ftype = mod.types[type_idx]
        name = mod.func_names.get(idx) or f"func_{idx}"
        if name in seen:
            name = f"{name}#{idx}"
        seen.add(name)
        out.append(FunctionInfo(idx, name, idx < n_imports,
                                len(ftype.params), len(ftype.results)))
    return tuple(out)


def build_module(module_id: int, path: str, data: bytes) -> LoadedModule:
    """Parse, validate and fingerprint in-memory module bytes."""
    data = bytes(data)
    try:
        validate_bytes(data)
    except wasmtime.WasmtimeError as exc:
        raise InvalidModule(path, str(exc).splitlines()[0]) from None
    try:
        mod = parse_module(data)
        for entry in mod.code:
            mod.body(entry.func_index)
    except DecodeError as exc:
        raise InvalidModule(path, str(exc)) from None
    functions = _function_infos(mod)
    for fn in functions:
        if fn.result_arity > 1:
            raise InvalidModule(path, f"function {fn.name} returns {fn.result_arity} values")
    return LoadedModule(module_id, path, data, checksum(data), functions, mod)


def load_modules(paths, base_dir: str | os.PathLike | None = None) -> list[LoadedModule]:
    """Load every module in order. Relative paths resolve against ``base_dir``."""
    modules = []
    for module_id, path in enumerate(paths):
        location = Path(path)
        if base_dir is not None and not location.is_absolute():
            location = Path(base_dir) / location
        try:
            data = location.read_bytes()
        except FileNotFoundError:
            raise ModuleFileNotFound(path) from None
        except IsADirectoryError:
            raise InvalidModule(path, "is a directory") from None
        modules.append(build_module(module_id, str(path), data))
    return modules
