from __future__ import annotations

from pathlib import Path

import pytest
import wasmtime

from mullw.module_store import build_module

FIXTURES = Path(__file__).resolve().parent / "fixtures"

# lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def wat_module(text: str, module_id: int = 0, path: str = "m.wasm"):
    return build_module(module_id, path, wasmtime.wat2wasm(text))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(autouse=True)
def _no_cache_env(monkeypatch):
    monkeypatch.delenv("MULLW_CACHE_DIR", raising=False)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
