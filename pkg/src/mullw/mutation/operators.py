"""Mutation operator tables and per-instruction matchers."""

from __future__ import annotations

import enum
import math

from ..wasm import opcodes as op
from ..wasm.binary import Instr, WasmModule, encode_const, encode_opcode

PROBE_IMPORTS = frozenset({("mull", "enter")})
REPLACE_CALL_VALUE = 42


class OperatorId(enum.Enum):
    MATH_ADD = "MathAdd"
    MATH_SUB = "MathSub"
    MATH_MUL = "MathMul"
    MATH_DIV = "MathDiv"
    NEGATE_CONDITION = "NegateCondition"
    REMOVE_VOID_FUNCTION = "RemoveVoidFunction"
    REPLACE_CALL = "ReplaceCall"
    SCALAR_VALUE_REPLACEMENT = "ScalarValueReplacement"

    @classmethod
    def parse(cls, name: str) -> "OperatorId":
        for member in cls:
            if member.value == name:
                return member
        raise ValueError(name)


ALL_OPERATORS = tuple(OperatorId)
_ORDER = {o: k for k, o in enumerate(ALL_OPERATORS)}


def operator_order(o: OperatorId) -> int:
    return _ORDER[o]


MATH_ADD = {f"{t}.add": f"{t}.sub" for t in ("i32", "i64", "f32", "f64")}
MATH_SUB = {v: k for k, v in MATH_ADD.items()}
MATH_MUL = {"i32.mul": "i32.div_s", "i64.mul": "i64.div_s",
            "f32.mul": "f32.div", "f64.mul": "f64.div"}
MATH_DIV = {"i32.div_s": "i32.mul", "i32.div_u": "i32.mul",
            "i64.div_s": "i64.mul", "i64.div_u": "i64.mul",
            "f32.div": "f32.mul", "f64.div": "f64.mul"}

_INT_NEGATIONS = [("eq", "ne"), ("lt_s", "ge_s"), ("gt_s", "le_s"),
                  ("lt_u", "ge_u"), ("gt_u", "le_u")]
NEGATE_INT: dict[str, str] = {}
for _t in ("i32", "i64"):
    for _a, _b in _INT_NEGATIONS:
        NEGATE_INT[f"{_t}.{_a}"] = f"{_t}.{_b}"
        NEGATE_INT[f"{_t}.{_b}"] = f"{_t}.{_a}"
NEGATE_FLOAT = frozenset(f"{t}.{p}" for t in ("f32", "f64")
                         for p in ("eq", "ne", "lt", "gt", "le", "ge"))

_SWAP_TABLES = {
    OperatorId.MATH_ADD: MATH_ADD,
    OperatorId.MATH_SUB: MATH_SUB,
    OperatorId.MATH_MUL: MATH_MUL,
    OperatorId.MATH_DIV: MATH_DIV,
}

_CONST_TYPES = {"i32.const": op.I32, "i64.const": op.I64,
                "f32.const": op.F32, "f64.const": op.F64}


def scalar_consumer_allowed(body: list[Instr], consumer: int) -> bool:
    """Arithmetic, comparison, return position or direct call argument."""
    ins = body[consumer]
    if ins.name in ("return", "call"):
        return True
    if consumer == len(body) - 1:
        return True      # final end: the function's return value
    kind = op.OPS[ins.opcode].kind
    return kind in ("binary", "compare", "test")


def _callee(mod: WasmModule, ins: Instr):
    idx = ins.imm[0]
    if idx < mod.n_func_imports:
        imp = mod.func_imports[idx]
        if (imp.module, imp.name) in PROBE_IMPORTS:
            return None
    return mod.func_type(idx)


def match(operator: OperatorId, mod: WasmModule, body: list[Instr], ins: Instr,
          consumers: dict[int, int]) -> str | None:
    """Return a human-readable detail if ``operator`` applies to ``ins``."""
    name = ins.name
    table = _SWAP_TABLES.get(operator)
    if table is not None:
        return f"{name} -> {table[name]}" if name in table else None
    if operator is OperatorId.NEGATE_CONDITION:
        if name in NEGATE_INT:
            return f"{name} -> {NEGATE_INT[name]}"
        if name in NEGATE_FLOAT:
            return f"{name} -> {name}; i32.eqz"
        return None
    if operator is OperatorId.REMOVE_VOID_FUNCTION:
        if name != "call":
            return None
        ftype = _callee(mod, ins)
        if ftype is None or ftype.results:
            return None
        return f"remove call {ins.imm[0]} ({len(ftype.params)} args)"
    if operator is OperatorId.REPLACE_CALL:
        if name != "call":
            return None
        ftype = _callee(mod, ins)
        if ftype is None or len(ftype.results) != 1 or ftype.results[0] not in op.NUMERIC_TYPES:
            return None
        tname = op.VALTYPE_NAMES[ftype.results[0]]
        return f"call {ins.imm[0]} -> {tname}.const 42"
    if operator is OperatorId.SCALAR_VALUE_REPLACEMENT:
        if name not in _CONST_TYPES:
            return None
        consumer = consumers.get(ins.index)
        if consumer is None or not scalar_consumer_allowed(body, consumer):
            return None
        value = ins.imm[0]
        return f"{name} {_fmt_value(value)} -> {_fmt_value(scalar_replacement(value))}"
    raise AssertionError(operator)


def _fmt_value(value) -> str:
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return repr(value)


def scalar_replacement(value):
    """Non-zero becomes zero, zero becomes one, in the value's own type."""
    if isinstance(value, float):
        return 1.0 if value == 0.0 else 0.0
    return 1 if value == 0 else 0


def rewrite(operator: OperatorId, mod: WasmModule, ins: Instr) -> bytes:
    """Replacement bytes for the matched instruction."""
    raw = mod.data[ins.start:ins.end]
    table = _SWAP_TABLES.get(operator)
    if table is not None:
        return encode_opcode(table[ins.name])
    if operator is OperatorId.NEGATE_CONDITION:
        if ins.name in NEGATE_INT:
            return encode_opcode(NEGATE_INT[ins.name])
        return raw + encode_opcode("i32.eqz")
    if operator is OperatorId.REMOVE_VOID_FUNCTION:
        return encode_opcode("drop") * len(mod.func_type(ins.imm[0]).params)
    if operator is OperatorId.REPLACE_CALL:
        ftype = mod.func_type(ins.imm[0])
        return (encode_opcode("drop") * len(ftype.params)
                + encode_const(ftype.results[0], REPLACE_CALL_VALUE))
    if operator is OperatorId.SCALAR_VALUE_REPLACEMENT:
        return encode_const(_CONST_TYPES[ins.name], scalar_replacement(ins.imm[0]))
    raise AssertionError(operator)

