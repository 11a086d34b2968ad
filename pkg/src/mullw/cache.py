"""On-disk cache of compiled module artifacts.

Entries live in one flat directory as ``<engine_tag>-<checksum>-<variant>.obj``.
The checksum is always that of the *original* module bytes; mutants add the
mutation point id as the variant. Each file carries a SHA-256 of its payload
so damaged entries are detected before the runtime ever sees them.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import wasmtime

from .runtime import Runtime

log = logging.getLogger(__name__)

ORIGINAL = "original"
_HEADER = b"MULLWOBJ"
_DIGEST_LEN = 32


@dataclass(frozen=True)
class CacheKey:
    checksum: str
    variant: str = ORIGINAL


def sanitize_variant(variant: str) -> str:
    suffix = hashlib.sha256(variant.encode("utf-8")).hexdigest()[:8]
    return re.sub(r"[^0-9A-Za-z]", "_", variant) + "_" + suffix


def cache_filename(engine_tag: str, key: CacheKey) -> str:
    return f"{engine_tag}-{key.checksum}-{sanitize_variant(key.variant)}.obj"


class ArtifactCache:
    def __init__(self, directory: str | os.PathLike, runtime: Runtime):
        self.directory = Path(directory)
        self.runtime = runtime
        self.hits = 0
        self.misses = 0

    def path_for(self, key: CacheKey) -> Path:
        return self.directory / cache_filename(self.runtime.engine_tag, key)

    def _read(self, key: CacheKey) -> tuple[bytes, Path] | None:
        path = self.path_for(key)
        try:
            raw = path.read_bytes()
        except OSError:
            return None
        head = len(_HEADER) + _DIGEST_LEN
        payload = raw[head:]
        if (len(raw) <= head or raw[:len(_HEADER)] != _HEADER
                or hashlib.sha256(payload).digest() != raw[len(_HEADER):head]):
            self._discard(path)
            return None
        return payload, path

    def _discard(self, path: Path) -> None:
        log.warning("discarding corrupt cache entry %s", path.name)
        try:
            path.unlink()
        except OSError:
            pass

    def load(self, key: CacheKey) -> wasmtime.Module | None:
        """Deserialized module for ``key``, or None when absent or unusable."""
        found = self._read(key)
        if found is None:
            return None
        payload, path = found
        try:
            return self.runtime.deserialize(payload)
        except wasmtime.WasmtimeError:
            self._discard(path)
            return None

    def get(self, key: CacheKey) -> bytes | None:
        found = self._read(key)
        if found is None:
            return None
        payload, path = found
        try:
            self.runtime.deserialize(payload)
        except wasmtime.WasmtimeError:
            self._discard(path)
            return None
        return payload

    def put(self, key: CacheKey, artifact: bytes) -> None:
        path = self.path_for(key)
        tmp = None
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".obj")
            with os.fdopen(fd, "wb") as fh:
                fh.write(_HEADER + hashlib.sha256(artifact).digest() + artifact)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
            tmp = None
        except OSError as exc:
            log.warning("cache write for %s failed: %s", path.name, exc)
        finally:
            if tmp is not None:
                try:
                    os.unlink(tmp)
                except OSError:
                    pass


def compile_cached(runtime: Runtime, cache: ArtifactCache | None, key: CacheKey,
                   build: Callable[[], bytes]) -> wasmtime.Module:
    """Fetch the compiled artifact for ``key`` or build, compile and store it.

    ``build`` returns the module bytes to compile and only runs on a miss.
    """
    if cache is not None:
        module = cache.load(key)
        if module is not None:
            cache.hits += 1
            return module
        cache.misses += 1
    module = runtime.compile(build(), mutant=key.variant != ORIGINAL)
    if cache is not None:
        cache.put(key, runtime.serialize(module))
    return module
