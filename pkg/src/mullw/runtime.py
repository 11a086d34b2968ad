"""Embedded WebAssembly runtime: compilation, artifact (de)serialization, counters."""

from __future__ import annotations

import importlib.metadata
import re
from dataclasses import dataclass

import wasmtime

# bump when instrumentation or artifact layout changes; part of every cache key
ARTIFACT_VERSION = 1


@dataclass
class Counters:
    compilations: int = 0
    mutant_compilations: int = 0
    deserializations: int = 0
    baseline_runs: int = 0
    mutant_runs: int = 0


@dataclass(frozen=True)
class Artifact:
    """A compiled module ready for instantiation."""
    module_id: int
    name: str
    module: wasmtime.Module
    instrumented: bool = True


def _engine_tag() -> str:
    try:
        version = importlib.metadata.version("wasmtime")
    except importlib.metadata.PackageNotFoundError:
        version = "unknown"
    return re.sub(r"[^0-9A-Za-z]", "_", f"wasmtime{version}") + f"a{ARTIFACT_VERSION}"


class Runtime:
    def __init__(self):
        config = wasmtime.Config()
        config.epoch_interruption = True
        self.engine = wasmtime.Engine(config)
        self.counters = Counters()
        self.engine_tag = _engine_tag()

    def compile(self, data: bytes, *, mutant: bool = False) -> wasmtime.Module:
        self.counters.compilations += 1
        if mutant:
            self.counters.mutant_compilations += 1
        return wasmtime.Module(self.engine, data)

    def serialize(self, module: wasmtime.Module) -> bytes:
        return bytes(module.serialize())

    def deserialize(self, data: bytes) -> wasmtime.Module:
        module = wasmtime.Module.deserialize(self.engine, data)
        self.counters.deserializations += 1
        return module
