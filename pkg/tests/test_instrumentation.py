import pytest
import wasmtime

from conftest import FIXTURES, wat_module
from mullw.errors import InstrumentationFailure, MalformedEventStream
from mullw.execution import CRASHED, FAILED, PASSED, sandbox_run
from mullw.instrumentation import (
    ENTER, EXIT, PROBE_MODULE, ProbeEvent, ProbeKind, ProbeRecorder, build_call_tree, coverage,
    instrument, reachable_functions,
)
from mullw.module_store import build_module, load_modules
from mullw.runtime import Artifact, Runtime
from mullw.test_framework import find_tests_simple

THREE_RETURNS = """
(module
  (func $pick (export "pick") (param $x i32) (result i32)
    local.get $x
    i32.const 1
    i32.eq
    if
      i32.const 10
      return
    end
    local.get $x
    i32.const 2
    i32.eq
    if
      i32.const 20
      return
    end
    local.get $x
    i32.const 3
    i32.eq
    if
      i32.const 30
      return
    end
    i32.const 0)
  (func $tail (export "tail") (param $x i32) (result i32)
    local.get $x
    return)
  (func $test_pick (export "test_pick") (result i32)
    i32.const 2
    call $pick
    i32.const 20
    i32.eq))
"""


def _ev(kind, f, seq):
    return ProbeEvent(ProbeKind.ENTER if kind == "E" else ProbeKind.EXIT, (0, f), seq)


def _events(pairs):
    return [_ev(k, f, i) for i, (k, f) in enumerate(pairs)]


def _exit_probe_sites(code: bytes, func_index: int, exit_index: int) -> int:
    """Raw byte count of `i32.const func_index; call exit_index` pairs."""
    needle = bytes([0x41, func_index, 0x10, exit_index])
    return code.count(needle)


def _function_code(data: bytes, func_index: int) -> bytes:
    # walk to the code section with a minimal independent reader
    def leb(buf, pos):
        result = shift = 0
        while True:
            b = buf[pos]
            pos += 1
            result |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                return result, pos
    pos = 8
    while pos < len(data):
        sid = data[pos]
        size, pos = leb(data, pos + 1)
        if sid == 10:
            count, p = leb(data, pos)
            for k in range(count):
                body_size, p = leb(data, p)
                if k == func_index:
                    return data[p:p + body_size]
                p += body_size
        pos += size
    raise AssertionError("no code section")


def test_probe_counts_three_returns():
    text_returns = [ln.strip().rstrip(")") for ln in THREE_RETURNS.splitlines()].count("return")
    assert text_returns == 4      # three in pick, one in tail
    mod = wat_module(THREE_RETURNS)
    inst = instrument(mod)
    assert inst.probes[0] == (1, 4)   # 3 returns + reachable final end
    assert inst.probes[1] == (1, 1)   # final end unreachable after `return`
    assert inst.probes[2] == (1, 1)
    # no imports, so probes are functions 0 and 1 and defined ones shift by 2
    assert (inst.enter_index, inst.exit_index) == (0, 1)
    assert _exit_probe_sites(_function_code(inst.bytes, 0), 0, 1) == 4
    assert _exit_probe_sites(_function_code(inst.bytes, 1), 1, 1) == 1
    enter = bytes([0x41, 0, 0x10, 0])
    assert _function_code(inst.bytes, 0).count(enter) == 1


def test_minimal_function_gets_one_of_each():
    inst = instrument(wat_module("(module (func (export \"f\")))"))
    assert inst.probes == {0: (1, 1)}


def test_instrumented_module_layout():
    (calc, tests) = load_modules(["calc.wasm", "calc_tests.wasm"], FIXTURES)
    inst = instrument(tests)
    compiled = wasmtime.Module(wasmtime.Engine(), inst.bytes)
    imports = [(i.module, i.name) for i in compiled.imports]
    assert imports[-2:] == [(PROBE_MODULE, ENTER), (PROBE_MODULE, EXIT)]
    assert imports[:-2] == [("calc", n) for n in
                            ("add", "sub", "mul", "div", "clamp", "abs", "log", "last_logged")]
    # imported functions get no probes, defined ones all do
    assert sorted(inst.probes) == [f.func_index for f in tests.defined_functions()]
    exports = {e.name for e in compiled.exports}
    assert exports == {"test_add", "test_sub", "test_mul", "test_div", "test_clamp", "test_abs"}
    # name section survives with shifted indices
    reparsed = build_module(0, "x.wasm", inst.bytes)
    assert reparsed.function(inst.enter_index + 2).name == "test_add"


def test_double_instrumentation_refused():
    (calc,) = load_modules(["calc.wasm"], FIXTURES)
    inst = instrument(calc)
    with pytest.raises(InstrumentationFailure):
        instrument(build_module(0, "calc.wasm", inst.bytes))


def test_indirect_calls_element_and_start_are_relocated():
    text = """
    (module
      (type $t (func (result i32)))
      (table 2 funcref)
      (elem (i32.const 0) $one $two)
      (global $g (mut i32) (i32.const 0))
      (func $one (result i32) i32.const 1)
      (func $two (result i32) i32.const 2)
      (func $init global.get $g i32.const 5 i32.add global.set $g)
      (func $test_ind (export "test_ind") (result i32)
        i32.const 1
        call_indirect (type $t)
        global.get $g
        i32.add
        i32.const 7
        i32.eq)
      (start $init))
    """
    mod = wat_module(text)
    rt = Runtime()
    art = Artifact(0, "m", rt.compile(instrument(mod).bytes))
    (test,) = find_tests_simple([mod])
    rec = ProbeRecorder()
    out = sandbox_run(rt, [art], test, 1000, rec)
    assert out.status == PASSED
    # probes inside callees cover the indirect call target
    tree = build_call_tree(rec.events, test.entry)
    assert tree.shape() == ((0, 3), [((0, 1), [])])


def test_reference_tree_example():
    # Enter(test) Enter(A) Exit(A) Enter(B) Exit(B) Exit(test)
    ev = _events([("E", 0), ("E", 1), ("X", 1), ("E", 2), ("X", 2), ("X", 0)])
    tree = build_call_tree(ev, (0, 0))
    assert tree.shape() == ((0, 0), [((0, 1), []), ((0, 2), [])])


def test_leaf_tree_and_driver_skipped():
    assert build_call_tree(_events([("E", 0), ("X", 0)]), (0, 0)).shape() == ((0, 0), [])
    ev = _events([("E", 9), ("E", 0), ("E", 1), ("X", 1), ("X", 0), ("X", 9)])
    assert build_call_tree(ev, (0, 0)).shape() == ((0, 0), [((0, 1), [])])


def test_unmatched_exit_is_malformed():
    with pytest.raises(MalformedEventStream):
        build_call_tree(_events([("X", 0)]), (0, 0))
    with pytest.raises(MalformedEventStream):
        build_call_tree(_events([("E", 0), ("E", 1), ("X", 2)]), (0, 0))


def test_trap_keeps_partial_tree():
    text = """
    (module
      (func $C (result i32) unreachable)
      (func $A (result i32) call $C)
      (func $test_trap (export "test_trap") (result i32) call $A))
    """
    mod = wat_module(text)
    rt = Runtime()
    art = Artifact(0, "m", rt.compile(instrument(mod).bytes))
    (test,) = find_tests_simple([mod])
    rec = ProbeRecorder()
    assert sandbox_run(rt, [art], test, 1000, rec).status == CRASHED
    assert [e.kind for e in rec.events] == [ProbeKind.ENTER] * 3
    tree = build_call_tree(rec.events, test.entry)
    assert tree.shape() == ((0, 2), [((0, 1), [((0, 0), [])])])


def _oracle_depths(shape):
    """Level-by-level traversal of nested shape tuples."""
    seen = {}
    level = [shape]
    depth = 0
    while level:
        nxt = []
        for ref, children in level:
            seen.setdefault(ref, depth)
            nxt.extend(children)
        level = nxt
        depth += 1
    return seen


def test_coverage_two_paths_keeps_minimum():
    text = """
    (module
      (func $C)
      (func $B call $C)
      (func $F call $C)
      (func $E call $F)
      (func $D call $E)
      (func $test_paths (export "test_paths") (result i32)
        call $D
        call $B
        i32.const 1))
    """
    mod = wat_module(text)
    rt = Runtime()
    art = Artifact(0, "m", rt.compile(instrument(mod).bytes))
    (test,) = find_tests_simple([mod])
    rec = ProbeRecorder()
    assert sandbox_run(rt, [art], test, 1000, rec).status == PASSED
    tree = build_call_tree(rec.events, test.entry)
    cov = coverage(tree)
    c = (0, 0)
    depths = [d for node, d in tree.root.walk() if node.func_ref == c]
    assert sorted(depths) == [2, 4]
    assert cov[c] == 2
    assert cov == _oracle_depths(tree.shape())


def test_three_level_distance_chain():
    ev = _events([("E", 0), ("E", 1), ("E", 2), ("X", 2), ("X", 1), ("X", 0)])
    cov = coverage(build_call_tree(ev, (0, 0)))
    assert cov == {(0, 0): 0, (0, 1): 1, (0, 2): 2}
    assert reachable_functions(cov, 1) == {(0, 1)}
    assert reachable_functions(cov, 2) == {(0, 1), (0, 2)}
    assert reachable_functions({(0, 0): 0}, 5) == set()
    assert coverage(build_call_tree([], (0, 0))) == {(0, 0): 0}
    with pytest.raises(ValueError):
        reachable_functions(cov, 0)


def test_recursion_repeats_nodes():
    text = """
    (module
      (func $down (param $n i32)
        local.get $n
        if
          local.get $n
          i32.const 1
          i32.sub
          call $down
        end)
      (func $test_rec (export "test_rec") (result i32)
        i32.const 3
        call $down
        i32.const 1))
    """
    mod = wat_module(text)
    rt = Runtime()
    art = Artifact(0, "m", rt.compile(instrument(mod).bytes))
    (test,) = find_tests_simple([mod])
    rec = ProbeRecorder()
    sandbox_run(rt, [art], test, 1000, rec)
    tree = build_call_tree(rec.events, test.entry)
    assert [d for node, d in tree.root.walk() if node.func_ref == (0, 0)] == [1, 2, 3, 4]
    assert coverage(tree)[(0, 0)] == 1


def _run_plain(names, export, args=()):
    """Run a fixture test on uninstrumented modules, linked by hand."""
    engine = wasmtime.Engine()
    store = wasmtime.Store(engine)
    instances = {}
    result = {}
    for name in names:
        module = wasmtime.Module.from_file(engine, str(FIXTURES / f"{name}.wasm"))
        externs = []
        for imp in module.imports:
            if imp.module == "mull":
                def host_exit(code):
                    raise RuntimeError(f"exit {code}")
                externs.append(wasmtime.Func(
                    store, wasmtime.FuncType([wasmtime.ValType.i32()], []), host_exit))
            else:
                externs.append(instances[imp.module].exports(store)[imp.name])
        instances[name] = wasmtime.Instance(store, module, externs)
    for name in names:
        fn = instances[name].exports(store).get(export)
        if fn is not None:
            result["value"] = fn(store, *args)
    return result["value"]


@pytest.mark.parametrize("names", [["calc", "calc_tests"], ["calc", "calc_weak_tests"],
                                   ["taxonomy"], ["fail_fast"]])
def test_semantic_transparency(names):
    modules = load_modules([f"{n}.wasm" for n in names], FIXTURES)
    rt = Runtime()
    arts = [Artifact(m.id, m.stem, rt.compile(instrument(m).bytes)) for m in modules]
    for test in find_tests_simple(modules):
        plain = _run_plain(names, test.name)
        got = sandbox_run(rt, arts, test, 2000)
        assert got.value == plain
        assert got.status == (PASSED if plain == 1 else FAILED)
