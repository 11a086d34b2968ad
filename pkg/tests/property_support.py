"""Bulk evaluation harness for the operator property checks.

A generated module holds one small function ``$pred`` (the mutation target)
and an exported ``bulk(n)`` loop that applies it to ``n`` operand pairs laid
out in linear memory. Samples come from numpy, and numpy also provides the
reference result for the unmutated predicate.
"""

from __future__ import annotations

import struct

import numpy as np
import wasmtime

from mullw.module_store import build_module
from mullw.mutation import OperatorId, apply_mutation, enumerate_points
from mullw.wasm.binary import parse_module

N_MAX = 32768
N_SAMPLES = 20000
SEED = 20260718

SIZES = {"i32": 4, "i64": 8, "f32": 4, "f64": 8}
DTYPES = {"i32": np.int32, "i64": np.int64, "f32": np.float32, "f64": np.float64}
UNSIGNED = {"i32": np.uint32, "i64": np.uint64}

INT_PREDICATES = ["eq", "ne", "lt_s", "lt_u", "gt_s", "gt_u", "le_s", "le_u", "ge_s", "ge_u"]
FLOAT_PREDICATES = ["eq", "ne", "lt", "gt", "le", "ge"]

_NUMPY_CMP = {
    "eq": np.equal, "ne": np.not_equal, "lt": np.less, "gt": np.greater,
    "le": np.less_equal, "ge": np.greater_equal,
}


def module_text(t: str, body: str, result: str = "i32") -> str:
    s, rs = SIZES[t], SIZES[result]
    b_off, out_off = N_MAX * s, 2 * N_MAX * 8
    return f"""(module
  (memory (export "mem") 16)
  (func $pred (param $a {t}) (param $b {t}) (result {result})
    local.get $a
    local.get $b
    {body})
  (func (export "bulk") (param $n i32)
    (local $i i32)
    block $done
      loop $next
        local.get $i
        local.get $n
        i32.ge_u
        br_if $done
        local.get $i
        i32.const {rs}
        i32.mul
        local.get $i
        i32.const {s}
        i32.mul
        {t}.load
        local.get $i
        i32.const {s}
        i32.mul
        {t}.load offset={b_off}
        call $pred
        {result}.store offset={out_off}
        local.get $i
        i32.const 1
        i32.add
        local.set $i
        br $next
      end
    end))
"""


def run_bulk(wasm: bytes, t: str, a: np.ndarray, b: np.ndarray, result: str = "i32") -> np.ndarray:
    engine = wasmtime.Engine()
    store = wasmtime.Store(engine)
    inst = wasmtime.Instance(store, wasmtime.Module(engine, wasm), [])
    mem = inst.exports(store)["mem"]
    s = SIZES[t]
    n = len(a)
    assert n <= N_MAX
    mem.write(store, a.astype(DTYPES[t]).tobytes(), 0)
    mem.write(store, b.astype(DTYPES[t]).tobytes(), N_MAX * s)
    inst.exports(store)["bulk"](store, n)
    rs = SIZES[result]
    raw = mem.read(store, 2 * N_MAX * 8, 2 * N_MAX * 8 + n * rs)
    return np.frombuffer(bytes(raw), dtype=DTYPES[result])


def int_samples(t: str, rng: np.random.Generator, n: int = N_SAMPLES):
    """16-bit values embedded in the wider type, plus boundaries and equal pairs."""
    dt = DTYPES[t]
    info = np.iinfo(dt)
    edges = np.array([0, 1, -1, info.min, info.max, 0x7FFF, 0x8000, 0xFFFF, -0x8000], dtype=dt)

    def draw():
        kind = rng.integers(0, 4, n)
        signed16 = rng.integers(-2**15, 2**15, n).astype(dt)
        unsigned16 = rng.integers(0, 2**16, n).astype(dt)
        wide = rng.integers(info.min, info.max, n, dtype=dt, endpoint=True)
        edge = edges[rng.integers(0, len(edges), n)]
        return np.choose(kind, [signed16, unsigned16, wide, edge]).astype(dt)

    a, b = draw(), draw()
    same = rng.random(n) < 0.2
    b[same] = a[same]
    return a, b


def float_samples(t: str, rng: np.random.Generator, n: int = N_SAMPLES):
    """Mix of signed zeros, infinities, NaNs, small integers, normals and raw bit patterns."""
    dt = DTYPES[t]
    bits = np.uint32 if t == "f32" else np.uint64
    finfo = np.finfo(dt)
    specials = np.array([0.0, -0.0, np.inf, -np.inf, np.nan, -np.nan, 1.0, -1.0,
                         finfo.tiny, -finfo.tiny, finfo.max, -finfo.max,
                         finfo.smallest_subnormal], dtype=dt)

    def draw():
        kind = rng.integers(0, 4, n)
        special = specials[rng.integers(0, len(specials), n)]
        small = rng.integers(-4, 5, n).astype(dt)
        normal = (rng.standard_normal(n) * 1e3).astype(dt)
        raw = rng.integers(0, np.iinfo(bits).max, n, dtype=bits, endpoint=True).view(dt)
        return np.choose(kind, [special, small, normal, raw]).astype(dt)

    a, b = draw(), draw()
    same = rng.random(n) < 0.15
    b[same] = a[same]
    return a, b


def reference(t: str, pred: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """numpy's answer for the unmutated predicate, as 0/1 int32."""
    base, _, sign = pred.partition("_")
    if sign == "u":
        a, b = a.astype(DTYPES[t]).view(UNSIGNED[t]), b.astype(DTYPES[t]).view(UNSIGNED[t])
    with np.errstate(invalid="ignore"):
        return _NUMPY_CMP[base](a, b).astype(np.int32)


def single_point(wasm: bytes, operator: OperatorId):
    """The only point of ``operator`` inside ``$pred`` (function 0)."""
    mod = build_module(0, "prop.wasm", wasm)
    points = enumerate_points([mod], [operator], {(0, 0)})
    assert len(points) == 1, [p.mp_id for p in points]
    return mod, points[0]


def mutate(wasm: bytes, operator: OperatorId) -> bytes:
    _, point = single_point(wasm, operator)
    out = apply_mutation(point, wasm)
    wasmtime.Module.validate(wasmtime.Engine(), out)
    return out


# -- ScalarValueReplacement ----------------------------------------------------

SVR_WAT = """
(module
  (func $g (param i32 i64 f32 f64) (result i32)
    i32.const 0)
  (func $f (export "f") (param $x i32) (result i32)
    local.get $x
    i32.const 0
    i32.add
    local.get $x
    i32.const -7
    i32.mul
    i32.add
    i64.const 0
    i64.const -9223372036854775808
    i64.lt_s
    i32.add
    f32.const -0
    f32.const nan
    f32.lt
    i32.add
    f64.const inf
    f64.const 0
    f64.eq
    i32.add
    f64.const -nan
    f64.const 1e-320
    f64.ne
    i32.add
    i32.const 2147483647
    i64.const 1
    f32.const 0.5
    f64.const -0
    call $g
    i32.add
    i32.const 65536
    i32.add))
"""


def _leb(data, pos, signed, bits):
    result = shift = 0
    while True:
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        shift += 7
        if not byte & 0x80:
            break
    if signed and byte & 0x40:
        result -= 1 << shift
    if signed:
        result = (result + (1 << (bits - 1))) % (1 << bits) - (1 << (bits - 1))
    return result


def decode_const(data: bytes, pos: int):
    """Independent decoder for a single *.const instruction at ``pos``."""
    opcode = data[pos]
    if opcode == 0x41:
        return "i32", _leb(data, pos + 1, True, 32)
    if opcode == 0x42:
        return "i64", _leb(data, pos + 1, True, 64)
    if opcode == 0x43:
        return "f32", struct.unpack_from("<f", data, pos + 1)[0]
    if opcode == 0x44:
        return "f64", struct.unpack_from("<d", data, pos + 1)[0]
    raise AssertionError(f"not a const opcode: {opcode:#x}")


def svr_rule_holds(kind: str, original, replaced) -> bool:
    """Non-zero becomes +0 and zero (either sign) becomes 1, in the same type."""
    if original != 0:           # NaN compares unequal to 0 as well
        return replaced == 0 and not (kind.startswith("f") and np.signbit(replaced))
    return replaced == 1


def svr_cases(label: str, wasm: bytes) -> list[tuple]:
    """(mp_id, kind, original, replaced, rule held) for every constant point of one module."""
    mod = build_module(0, f"{label}.wasm", wasm)
    covered = {(0, f.func_index) for f in mod.defined_functions()}
    out = []
    for p in enumerate_points([mod], [OperatorId.SCALAR_VALUE_REPLACEMENT], covered):
        before = mod.wasm.body(p.func_ref[1])[p.instr_index]
        kind, original = decode_const(wasm, before.start)
        mutant = apply_mutation(p, wasm)
        after = parse_module(mutant).body(p.func_ref[1])[p.instr_index]
        kind2, replaced = decode_const(mutant, after.start)
        ok = kind2 == kind and svr_rule_holds(kind, original, replaced)
        out.append((p.mp_id, kind, original, replaced, ok))
    return out
