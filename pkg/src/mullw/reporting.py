"""Results database and the static HTML report generated from it."""

from __future__ import annotations

import html
import json
import os
import sqlite3
import tempfile
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptySession, PersistError

SCHEMA = """
CREATE TABLE config (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE test (
    test_id              INTEGER PRIMARY KEY,
    name                 TEXT NOT NULL UNIQUE,
    entry                TEXT NOT NULL,
    arguments            TEXT NOT NULL,
    baseline_status      TEXT NOT NULL,
    baseline_duration_ms REAL NOT NULL
);
CREATE TABLE mutation_point (
    mp_id         TEXT PRIMARY KEY,
    operator      TEXT NOT NULL,
    module_path   TEXT NOT NULL,
    function_name TEXT NOT NULL,
    instr_index   INTEGER NOT NULL,
    status        TEXT CHECK (status IN ('killed', 'survived')),
    min_distance  INTEGER
);
CREATE TABLE execution (
    exec_id     INTEGER PRIMARY KEY,
    test_id     INTEGER NOT NULL REFERENCES test(test_id),
    mp_id       TEXT REFERENCES mutation_point(mp_id),
    status      TEXT NOT NULL,
    duration_ms REAL NOT NULL
);
"""

# columns that legitimately differ between two otherwise identical sessions
VOLATILE_COLUMNS = {"test": {"baseline_duration_ms"}, "execution": {"duration_ms"}}


def persist(record, path: str | os.PathLike) -> Path:
    """Write the session into a fresh database file, atomically replacing ``path``."""
    path = Path(path)
    tmp = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        os.close(fd)
        conn = sqlite3.connect(tmp)
        try:
            with conn:
                conn.executescript(SCHEMA)
                _write(conn, record)
        finally:
            conn.close()
        os.replace(tmp, path)
        tmp = None
    except (OSError, sqlite3.Error) as exc:
        raise PersistError(f"cannot write results database {path}: {exc}") from exc
    finally:
        if tmp is not None:
            try:
                os.unlink(tmp)
            except OSError:
                pass
    return path


def _write(conn: sqlite3.Connection, record) -> None:
    rows = list(record.config.as_rows())
    est = record.estimate
    rows += [
        ("mode", "dryrun" if record.dry_run else "run"),
        ("n_tests", str(est.n_tests)),
        ("n_mutants", str(est.n_mutants)),
        ("planned_runs", str(est.planned_runs)),
        ("worst_case_ms", str(est.worst_case_ms)),
    ]
    conn.executemany("INSERT INTO config (key, value) VALUES (?, ?)", rows)

    modules = {m.id: m for m in record.modules}
    for base in record.baseline:
        t = base.test
        mod = modules[t.entry[0]]
        entry = f"{mod.path}:{mod.function(t.entry[1]).name}"
        conn.execute(
            "INSERT INTO test VALUES (?, ?, ?, ?, ?, ?)",
            (t.test_id, t.name, entry, json.dumps(list(t.arguments)),
             str(base.status), base.duration_ms))

    results = {r.mp_id: r for r in record.results}
    for point in record.points:
        result = results.get(point.mp_id)
        status = result.outcome.value if result is not None else None
        conn.execute(
            "INSERT INTO mutation_point VALUES (?, ?, ?, ?, ?, ?, ?)",
            (point.mp_id, point.operator.value, point.module_path, point.function_name,
             point.instr_index, status, record.min_distance.get(point.mp_id)))

    if record.dry_run:
        return
    for base in record.baseline:
        conn.execute("INSERT INTO execution (test_id, mp_id, status, duration_ms) "
                     "VALUES (?, NULL, ?, ?)",
                     (base.test.test_id, str(base.status), base.duration_ms))
    for point in record.points:
        result = results.get(point.mp_id)
        if result is None:
            continue
        conn.executemany(
            "INSERT INTO execution (test_id, mp_id, status, duration_ms) VALUES (?, ?, ?, ?)",
            [(tid, point.mp_id, str(status), dur) for tid, status, dur in result.per_test])


def read_tables(path: str | os.PathLike) -> dict[str, list[dict]]:
    """Every table as a list of row dicts, in primary-key order."""
    conn = sqlite3.connect(f"file:{Path(path)}?mode=ro", uri=True)
    conn.row_factory = sqlite3.Row
    try:
        out = {}
        for table, order in (("config", "key"), ("test", "test_id"),
                             ("mutation_point", "rowid"), ("execution", "exec_id")):
            out[table] = [dict(r) for r in conn.execute(f"SELECT * FROM {table} ORDER BY {order}")]
        return out
    finally:
        conn.close()


def stable_tables(path) -> dict[str, list[dict]]:
    """``read_tables`` minus the timing columns."""
    tables = read_tables(path)
    for table, cols in VOLATILE_COLUMNS.items():
        tables[table] = [{k: v for k, v in row.items() if k not in cols} for row in tables[table]]
    return tables


@dataclass(frozen=True)
class ScoreSummary:
    killed: int
    survived: int
    per_operator: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def n_mutants(self) -> int:
        return self.killed + self.survived

    @property
    def score(self) -> float | None:
        total = self.killed + self.survived
        return self.killed / total if total else None

    @property
    def score_text(self) -> str:
        return format_score(self.killed, self.survived)


def format_score(killed: int, survived: int) -> str:
    total = killed + survived
    return f"{killed / total:.2f}" if total else "n/a"


def _summarize(statuses: list[tuple[str, str | None]]) -> ScoreSummary:
    per_op: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    killed = survived = 0
    for operator, status in statuses:
        if status == "killed":
            killed += 1
            per_op[operator][0] += 1
        elif status == "survived":
            survived += 1
            per_op[operator][1] += 1
    return ScoreSummary(killed, survived, {k: tuple(v) for k, v in sorted(per_op.items())})


def mutation_score(path: str | os.PathLike) -> ScoreSummary:
    tables = read_tables(path)
    points = tables["mutation_point"]
    if not points:
        raise EmptySession()
    return _summarize([(p["operator"], p["status"]) for p in points])


def score_from_executions(path: str | os.PathLike) -> ScoreSummary:
    """Recompute the score from raw execution rows rather than stored statuses."""
    tables = read_tables(path)
    points = tables["mutation_point"]
    if not points:
        raise EmptySession()
    runs: dict[str, list[str]] = defaultdict(list)
    for row in tables["execution"]:
        if row["mp_id"] is not None:
            runs[row["mp_id"]].append(row["status"])
    statuses = []
    for p in points:
        seen = runs.get(p["mp_id"])
        if seen is None and p["status"] is None:
            statuses.append((p["operator"], None))
            continue
        killed = any(s != "Passed" for s in seen or [])
        statuses.append((p["operator"], "killed" if killed else "survived"))
    return _summarize(statuses)


# -- HTML ---------------------------------------------------------------------

_STYLE = """
body { font-family: sans-serif; margin: 2rem; color: #222; }
table { border-collapse: collapse; margin-bottom: 1.5rem; }
th, td { border: 1px solid #ccc; padding: 0.25rem 0.6rem; text-align: left; }
th { background: #f0f0f0; }
tr.survived td { background: #fde2e2; }
tr.killed td { background: #e3f6e3; }
.score { font-size: 2rem; font-weight: bold; }
code { font-size: 0.9em; }
"""


def _e(value) -> str:
    return html.escape("" if value is None else str(value))


def render_html(tables: dict[str, list[dict]]) -> str:
    config = {r["key"]: r["value"] for r in tables["config"]}
    tests = {t["test_id"]: t for t in tables["test"]}
    points = tables["mutation_point"]
    dry = config.get("mode") == "dryrun"

    killers: dict[str, str] = {}
    for row in tables["execution"]:
        mp = row["mp_id"]
        if mp is not None and row["status"] != "Passed" and mp not in killers:
            killers[mp] = f"{tests[row['test_id']]['name']} ({row['status']})"

    summary = _summarize([(p["operator"], p["status"]) for p in points])
    parts = [f"<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
             f"<title>Mutation testing report</title>\n<style>{_STYLE}</style>\n</head>\n<body>\n"
             "<h1>Mutation testing report</h1>\n"]

    if dry:
        parts.append(
            "<section id=\"plan\">\n<h2>Dry run plan</h2>\n"
            f"<p>{_e(config.get('n_tests'))} tests, {_e(config.get('n_mutants'))} mutants, "
            f"{_e(config.get('planned_runs'))} planned test runs.</p>\n"
            f"<p>Worst-case run time: <strong>{_e(config.get('worst_case_ms'))} ms</strong> "
            f"(every run timing out at {_e(config.get('timeout_ms'))} ms).</p>\n</section>\n")
    else:
        parts.append(
            "<section id=\"summary\">\n<h2>Mutation score</h2>\n"
            f"<p class=\"score\">{summary.score_text}</p>\n"
            f"<p>{summary.killed} killed, {summary.survived} survived, "
            f"{len(points)} mutants, {len(tests)} tests.</p>\n</section>\n")

        rows = "".join(
            f"<tr><td>{_e(op)}</td><td>{k}</td><td>{s}</td><td>{format_score(k, s)}</td></tr>\n"
            for op, (k, s) in summary.per_operator.items())
        parts.append("<section id=\"operators\">\n<h2>By operator</h2>\n<table>\n"
                     "<tr><th>Operator</th><th>Killed</th><th>Survived</th><th>Score</th></tr>\n"
                     f"{rows}</table>\n</section>\n")

        survivors = [p for p in points if p["status"] == "survived"]
        items = "".join(f"<li class=\"survivor\"><code>{_e(p['mp_id'])}</code></li>\n"
                        for p in survivors)
        parts.append("<section id=\"survivors\">\n<h2>Survived mutants</h2>\n"
                     + (f"<ul>\n{items}</ul>\n" if survivors else "<p>None.</p>\n")
                     + "</section>\n")

    mutant_rows = []
    for p in points:
        status = p["status"] or "planned"
        mutant_rows.append(
            f"<tr class=\"mutant {_e(status)}\"><td><code>{_e(p['mp_id'])}</code></td>"
            f"<td>{_e(p['function_name'])}</td><td>{_e(p['operator'])}</td>"
            f"<td>{_e(status)}</td><td>{_e(killers.get(p['mp_id'], ''))}</td></tr>\n")
    parts.append("<section id=\"mutants\">\n<h2>Mutants</h2>\n<table>\n"
                 "<tr><th>Mutation point</th><th>Function</th><th>Operator</th>"
                 "<th>Status</th><th>Killed by</th></tr>\n"
                 + "".join(mutant_rows) + "</table>\n</section>\n")

    test_rows = "".join(
        f"<tr><td>{t['test_id']}</td><td>{_e(t['name'])}</td><td>{_e(t['entry'])}</td>"
        f"<td>{_e(t['baseline_status'])}</td></tr>\n" for t in tests.values())
    parts.append("<section id=\"tests\">\n<h2>Tests</h2>\n<table>\n"
                 "<tr><th>Id</th><th>Name</th><th>Entry</th><th>Baseline</th></tr>\n"
                 f"{test_rows}</table>\n</section>\n</body>\n</html>\n")
    return "".join(parts)


def generate_html(db_path: str | os.PathLike, output_path: str | os.PathLike) -> Path:
    try:
        tables = read_tables(db_path)
    except sqlite3.Error as exc:
        raise PersistError(f"cannot read results database {db_path}: {exc}") from exc
    output_path = Path(output_path)
    try:
        output_path.write_text(render_html(tables), encoding="utf-8")
    except OSError as exc:
        raise PersistError(f"cannot write report {output_path}: {exc}") from exc
    return output_path
