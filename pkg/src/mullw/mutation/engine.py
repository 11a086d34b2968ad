"""Mutation point enumeration and mutant construction."""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass

import wasmtime

from ..errors import RewriteFailure
from ..module_store import LoadedModule, validate_bytes
from ..wasm.binary import DecodeError, parse_module, raw_body, replace_bodies
from .consumers import stack_consumers
from .operators import ALL_OPERATORS, OperatorId, match, operator_order, rewrite


@dataclass(frozen=True)
class MutationPoint:
    mp_id: str
    operator: OperatorId
    func_ref: tuple[int, int]
    instr_index: int
    detail: str
    module_path: str
    function_name: str


def make_mp_id(operator: OperatorId, module_path: str, function_name: str, instr_index: int) -> str:
    return f"{operator.value}:{module_path}:{function_name}:{instr_index}"


def is_excluded(module_path: str, function_name: str, patterns) -> bool:
    location = f"{module_path}:{function_name}"
    return any(fnmatch.fnmatchcase(location, p) for p in patterns)


def function_points(module: LoadedModule, func_index: int, enabled_ops=ALL_OPERATORS) -> list[MutationPoint]:
    """Every point in one defined function, ordered by (instr_index, operator)."""
    mod = module.wasm
    body = mod.body(func_index)
    consumers = stack_consumers(mod, func_index)
    ops = sorted(set(enabled_ops), key=operator_order)
    fname = module.function(func_index).name
    points = []
    for ins in body:
        for operator in ops:
            detail = match(operator, mod, body, ins, consumers)
            if detail is None:
                continue
            points.append(MutationPoint(
                make_mp_id(operator, module.path, fname, ins.index), operator,
                (module.id, func_index), ins.index, detail, module.path, fname))
    return points


def enumerate_points(modules: list[LoadedModule], enabled_ops, covered, excludes=()) -> list[MutationPoint]:
    points: list[MutationPoint] = []
    for module in modules:
        for fn in module.defined_functions():
            if (module.id, fn.func_index) not in covered:
                continue
            if is_excluded(module.path, fn.name, excludes):
                continue
            points.extend(function_points(module, fn.func_index, enabled_ops))
    return points


def apply_mutation(point: MutationPoint, data: bytes) -> bytes:
    """Rewrite the single instruction addressed by ``point`` in ``data``."""
    try:
        mod = parse_module(data)
        func_index = point.func_ref[1]
        body = mod.body(func_index)
    except (DecodeError, IndexError) as exc:
        raise RewriteFailure(f"{point.mp_id}: cannot decode target: {exc}") from None
    if point.instr_index >= len(body):
        raise RewriteFailure(f"{point.mp_id}: instruction index out of range")
    ins = body[point.instr_index]
    consumers = stack_consumers(mod, func_index)
    if match(point.operator, mod, body, ins, consumers) is None:
        raise RewriteFailure(f"{point.mp_id}: operator does not match {ins.name}")

    entry = mod.code_entry(func_index)
    old = raw_body(mod, func_index)
    lo, hi = ins.start - entry.offset, ins.end - entry.offset
    new_body = old[:lo] + rewrite(point.operator, mod, ins) + old[hi:]
    mutant = replace_bodies(mod, {func_index: new_body})
    try:
        validate_bytes(mutant)
    except wasmtime.WasmtimeError as exc:
        raise RewriteFailure(f"{point.mp_id}: mutant does not validate: {exc}") from None
    return mutant


def match_and_rewrite(operator: OperatorId, point: MutationPoint, data: bytes) -> bytes:
    if operator is not point.operator:
        raise RewriteFailure(f"{point.mp_id} was enumerated for {point.operator.value}")
    return apply_mutation(point, data)
