"""Opcode table for the WebAssembly instruction subset the engine understands.

Covers the 1.0 core instruction set plus sign-extension, non-trapping
float-to-int conversions, bulk memory and reference types. SIMD, tail calls,
exceptions and GC opcodes are rejected by the decoder.
"""

from __future__ import annotations

from dataclasses import dataclass

I32, I64, F32, F64 = 0x7F, 0x7E, 0x7D, 0x7C
V128, FUNCREF, EXTERNREF = 0x7B, 0x70, 0x6F

VALTYPE_NAMES = {I32: "i32", I64: "i64", F32: "f32", F64: "f64",
                 V128: "v128", FUNCREF: "funcref", EXTERNREF: "externref"}
NUMERIC_TYPES = frozenset({I32, I64, F32, F64})

# immediate kinds
NONE = "none"
BLOCKTYPE = "blocktype"
LABEL = "label"
LABELS = "labels"
FUNC = "func"
CALL_INDIRECT = "call_indirect"
LOCAL = "local"
GLOBAL = "global"
TABLE = "table"
MEMARG = "memarg"
MEMIDX = "memidx"
MEMIDX2 = "memidx2"
CONST_I32 = "i32"
CONST_I64 = "i64"
CONST_F32 = "f32"
CONST_F64 = "f64"
REFTYPE = "reftype"
SELECT_T = "select_t"
DATA_MEM = "data_mem"
DATA = "data"
ELEM_TABLE = "elem_table"
ELEM = "elem"
TABLE2 = "table2"


@dataclass(frozen=True)
class OpInfo:
    name: str
    imm: str
    # fixed stack effect; None for instructions whose effect depends on types
    pops: int | None = 0
    pushes: int | None = 0
    kind: str = "other"


OPS: dict[int | tuple[int, int], OpInfo] = {}


def _op(code, name, imm=NONE, pops=0, pushes=0, kind="other"):
    OPS[code] = OpInfo(name, imm, pops, pushes, kind)


_op(0x00, "unreachable", kind="control")
_op(0x01, "nop")
_op(0x02, "block", BLOCKTYPE, None, None, "control")
_op(0x03, "loop", BLOCKTYPE, None, None, "control")
_op(0x04, "if", BLOCKTYPE, None, None, "control")
_op(0x05, "else", NONE, None, None, "control")
_op(0x0B, "end", NONE, None, None, "control")
_op(0x0C, "br", LABEL, None, None, "control")
_op(0x0D, "br_if", LABEL, None, None, "control")
_op(0x0E, "br_table", LABELS, None, None, "control")
_op(0x0F, "return", NONE, None, None, "control")
_op(0x10, "call", FUNC, None, None, "call")
_op(0x11, "call_indirect", CALL_INDIRECT, None, None, "call")
_op(0xD0, "ref.null", REFTYPE, 0, 1)
_op(0xD1, "ref.is_null", NONE, 1, 1)
_op(0xD2, "ref.func", FUNC, 0, 1)
_op(0x1A, "drop", NONE, 1, 0)
_op(0x1B, "select", NONE, 3, 1)
_op(0x1C, "select", SELECT_T, 3, 1)
_op(0x20, "local.get", LOCAL, 0, 1)
_op(0x21, "local.set", LOCAL, 1, 0)
_op(0x22, "local.tee", LOCAL, 1, 1)
_op(0x23, "global.get", GLOBAL, 0, 1)
_op(0x24, "global.set", GLOBAL, 1, 0)
_op(0x25, "table.get", TABLE, 1, 1)
_op(0x26, "table.set", TABLE, 2, 0)

for _code, _name in enumerate(
        ["i32.load", "i64.load", "f32.load", "f64.load",
         "i32.load8_s", "i32.load8_u", "i32.load16_s", "i32.load16_u",
         "i64.load8_s", "i64.load8_u", "i64.load16_s", "i64.load16_u",
         "i64.load32_s", "i64.load32_u"], start=0x28):
    _op(_code, _name, MEMARG, 1, 1, "load")
for _code, _name in enumerate(
        ["i32.store", "i64.store", "f32.store", "f64.store",
         "i32.store8", "i32.store16", "i64.store8", "i64.store16",
         "i64.store32"], start=0x36):
    _op(_code, _name, MEMARG, 2, 0, "store")
_op(0x3F, "memory.size", MEMIDX, 0, 1)
_op(0x40, "memory.grow", MEMIDX, 1, 1)

_op(0x41, "i32.const", CONST_I32, 0, 1, "const")
_op(0x42, "i64.const", CONST_I64, 0, 1, "const")
_op(0x43, "f32.const", CONST_F32, 0, 1, "const")
_op(0x44, "f64.const", CONST_F64, 0, 1, "const")

_op(0x45, "i32.eqz", NONE, 1, 1, "test")
for _code, _pred in enumerate(
        ["eq", "ne", "lt_s", "lt_u", "gt_s", "gt_u", "le_s", "le_u", "ge_s", "ge_u"],
        start=0x46):
    _op(_code, f"i32.{_pred}", NONE, 2, 1, "compare")
_op(0x50, "i64.eqz", NONE, 1, 1, "test")
for _code, _pred in enumerate(
        ["eq", "ne", "lt_s", "lt_u", "gt_s", "gt_u", "le_s", "le_u", "ge_s", "ge_u"],
        start=0x51):
    _op(_code, f"i64.{_pred}", NONE, 2, 1, "compare")
for _base, _t in ((0x5B, "f32"), (0x61, "f64")):
    for _off, _pred in enumerate(["eq", "ne", "lt", "gt", "le", "ge"]):
        _op(_base + _off, f"{_t}.{_pred}", NONE, 2, 1, "compare")

_INT_UN = ["clz", "ctz", "popcnt"]
_INT_BIN = ["add", "sub", "mul", "div_s", "div_u", "rem_s", "rem_u", "and", "or",
            "xor", "shl", "shr_s", "shr_u", "rotl", "rotr"]
for _base, _t in ((0x67, "i32"), (0x79, "i64")):
    for _off, _name in enumerate(_INT_UN + _INT_BIN):
        if _name in _INT_UN:
            _op(_base + _off, f"{_t}.{_name}", NONE, 1, 1, "unary")
        else:
            _op(_base + _off, f"{_t}.{_name}", NONE, 2, 1, "binary")

_FLT_UN = ["abs", "neg", "ceil", "floor", "trunc", "nearest", "sqrt"]
_FLT_BIN = ["add", "sub", "mul", "div", "min", "max", "copysign"]
for _base, _t in ((0x8B, "f32"), (0x99, "f64")):
    for _off, _name in enumerate(_FLT_UN + _FLT_BIN):
        if _name in _FLT_UN:
            _op(_base + _off, f"{_t}.{_name}", NONE, 1, 1, "unary")
        else:
            _op(_base + _off, f"{_t}.{_name}", NONE, 2, 1, "binary")

for _code, _name in enumerate(
        ["i32.wrap_i64", "i32.trunc_f32_s", "i32.trunc_f32_u", "i32.trunc_f64_s",
         "i32.trunc_f64_u", "i64.extend_i32_s", "i64.extend_i32_u",
         "i64.trunc_f32_s", "i64.trunc_f32_u", "i64.trunc_f64_s", "i64.trunc_f64_u",
         "f32.convert_i32_s", "f32.convert_i32_u", "f32.convert_i64_s",
         "f32.convert_i64_u", "f32.demote_f64", "f64.convert_i32_s",
         "f64.convert_i32_u", "f64.convert_i64_s", "f64.convert_i64_u",
         "f64.promote_f32", "i32.reinterpret_f32", "i64.reinterpret_f64",
         "f32.reinterpret_i32", "f64.reinterpret_i64", "i32.extend8_s",
         "i32.extend16_s", "i64.extend8_s", "i64.extend16_s", "i64.extend32_s"],
        start=0xA7):
    _op(_code, _name, NONE, 1, 1, "convert")

for _sub, _name in enumerate(
        ["i32.trunc_sat_f32_s", "i32.trunc_sat_f32_u", "i32.trunc_sat_f64_s",
         "i32.trunc_sat_f64_u", "i64.trunc_sat_f32_s", "i64.trunc_sat_f32_u",
         "i64.trunc_sat_f64_s", "i64.trunc_sat_f64_u"]):
    _op((0xFC, _sub), _name, NONE, 1, 1, "convert")
_op((0xFC, 8), "memory.init", DATA_MEM, 3, 0)
_op((0xFC, 9), "data.drop", DATA, 0, 0)
_op((0xFC, 10), "memory.copy", MEMIDX2, 3, 0)
_op((0xFC, 11), "memory.fill", MEMIDX, 3, 0)
_op((0xFC, 12), "table.init", ELEM_TABLE, 3, 0)
_op((0xFC, 13), "elem.drop", ELEM, 0, 0)
_op((0xFC, 14), "table.copy", TABLE2, 3, 0)
_op((0xFC, 15), "table.grow", TABLE, 2, 1)
_op((0xFC, 16), "table.size", TABLE, 0, 1)
_op((0xFC, 17), "table.fill", TABLE, 3, 0)

BY_NAME: dict[str, int | tuple[int, int]] = {}
for _code, _info in OPS.items():
    BY_NAME.setdefault(_info.name, _code)


def result_type(name: str) -> int | None:
    """Value type pushed by a numeric instruction, derived from its mnemonic prefix."""
    head = name.split(".", 1)[0]
    for code, tname in VALTYPE_NAMES.items():
        if tname == head:
            return code
    return None
