"""Operand-consumer analysis over a function body.

A single linear pass over the flat instruction sequence with an abstract
operand stack. Each stack slot holds the set of instruction indices whose
value may occupy it; structured control merges those sets at block ends, so a
value flowing out of ``block``/``if`` is attributed to whichever instruction
eventually pops the block result.

Conventions:

* Values carried by a branch to a block or ``if`` label merge into that
  label's result slot. Values carried to a ``loop`` label are consumed by the
  branch. Values carried to the function label, and values left at the final
  ``end``, are consumed by the final ``end`` (return position).
* Values unwound by ``br``/``br_table``/``return``/``unreachable`` inside the
  current frame are consumed by that instruction.
* When a value has two static consumers (only possible for ``br_if`` carrying
  values) the first one reached in walk order is kept.
* Code after an unconditional transfer is skipped until the enclosing
  ``else``/``end``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import AnalysisFailure
from ..wasm import opcodes as op
from ..wasm.binary import Instr, WasmModule, block_signature


@dataclass
class _Frame:
    kind: str
    params: list[tuple[int, ...]]
    n_results: int
    height: int
    unreachable: bool = False
    dead: bool = False
    has_else: bool = False
    branched: bool = False
    incoming: list[set[int]] = field(default_factory=list)

    @property
    def label_arity(self) -> int:
        return len(self.params) if self.kind == "loop" else self.n_results


@dataclass
class FunctionFlow:
    consumers: dict[int, int]
    final_end_reachable: bool
    function_label_branches: list[int]


def analyze(mod: WasmModule, func_index: int, body: list[Instr] | None = None) -> FunctionFlow:
    body = mod.body(func_index) if body is None else body
    ftype = mod.func_type(func_index)
    consumers: dict[int, int] = {}
    stack: list[tuple[int, ...]] = []
    frames = [_Frame("function", [], len(ftype.results), 0)]
    frames[0].incoming = [set() for _ in ftype.results]
    label_branches: list[int] = []

    def consume(entry, at):
        for producer in entry:
            consumers.setdefault(producer, at)

    def pop(at, n=1, record=True):
        frame = frames[-1]
        if len(stack) - n < frame.height:
            raise AnalysisFailure(f"operand stack underflow at instruction {at}")
        taken = stack[len(stack) - n:]
        del stack[len(stack) - n:]
        if record:
            for entry in taken:
                consume(entry, at)
        return taken

    def unwind(at):
        frame = frames[-1]
        for entry in stack[frame.height:]:
            consume(entry, at)
        del stack[frame.height:]
        frame.unreachable = True

    def send(depth, at, entries):
        """Deliver branch-carried values to the label ``depth`` levels out."""
        if depth >= len(frames):
            raise AnalysisFailure(f"branch depth {depth} out of range at {at}")
        target = frames[-1 - depth]
        if len(entries) != target.label_arity:
            raise AnalysisFailure(f"branch arity mismatch at instruction {at}")
        if target.kind == "loop":
            return
        target.branched = True
        if target.kind == "function":
            label_branches.append(at)
        for slot, entry in zip(target.incoming, entries):
            slot.update(entry)

    def top(n):
        return stack[len(stack) - n:] if n else []

    final_reachable = False
    for ins in body:
        name = ins.name
        frame = frames[-1]
        if frame.unreachable and name not in ("block", "loop", "if", "else", "end"):
            continue
        i = ins.index

        if name in ("block", "loop", "if"):
            sig = block_signature(mod, ins.imm[0])
            if frame.unreachable:
                frames.append(_Frame(name, [], len(sig.results), len(stack),
                                     unreachable=True, dead=True))
                continue
            if name == "if":
                pop(i)
            params = pop(i, len(sig.params), record=False)
            new = _Frame(name, params, len(sig.results), len(stack))
            new.incoming = [set() for _ in sig.results]
            frames.append(new)
            stack.extend(params)
        elif name == "else":
            if frame.kind != "if":
                raise AnalysisFailure(f"else outside if at instruction {i}")
            frame.has_else = True
            if frame.dead:
                continue
            if not frame.unreachable:
                for slot, entry in zip(frame.incoming, pop(i, frame.n_results, record=False)):
                    slot.update(entry)
            del stack[frame.height:]
            stack.extend(frame.params)
            frame.unreachable = False
        elif name == "end":
            frames.pop()
            if frame.dead:
                continue
            results = [set(s) for s in frame.incoming] if frame.kind != "loop" else \
                [set() for _ in range(frame.n_results)]
            if not frame.unreachable:
                if len(stack) - frame.n_results != frame.height:
                    raise AnalysisFailure(f"stack height mismatch at end {i}")
                for slot, entry in zip(results, top(frame.n_results)):
                    slot.update(entry)
            if frame.kind == "if" and not frame.has_else:
                for slot, entry in zip(results, frame.params):
                    slot.update(entry)
            del stack[frame.height:]
            if frame.kind == "function":
                for slot in results:
                    consume(sorted(slot), i)
                final_reachable = not frame.unreachable or frame.branched
                break
            stack.extend(tuple(sorted(s)) for s in results)
        elif name == "br":
            depth = ins.imm[0]
            target = _target(frames, depth, i)
            carried = pop(i, target.label_arity, record=target.kind == "loop")
            send(depth, i, carried)
            unwind(i)
        elif name == "br_if":
            pop(i)
            depth = ins.imm[0]
            target = _target(frames, depth, i)
            carried = top(target.label_arity)
            if target.kind == "loop":
                for entry in carried:
                    consume(entry, i)
            send(depth, i, carried)
        elif name == "br_table":
            pop(i)
            targets, default = ins.imm
            arity = _target(frames, default, i).label_arity
            carried = top(arity)
            for depth in sorted(set(targets) | {default}):
                send(depth, i, carried)
            if any(_target(frames, d, i).kind == "loop" for d in set(targets) | {default}):
                for entry in carried:
                    consume(entry, i)
            pop(i, arity, record=False)
            unwind(i)
        elif name == "return":
            pop(i, len(ftype.results))
            unwind(i)
        elif name == "unreachable":
            unwind(i)
        elif name == "call":
            callee = mod.func_type(ins.imm[0])
            pop(i, len(callee.params))
            stack.extend([(i,)] * len(callee.results))
        elif name == "call_indirect":
            callee = mod.types[ins.imm[0]]
            pop(i, len(callee.params) + 1)
            stack.extend([(i,)] * len(callee.results))
        else:
            info = op.OPS[ins.opcode]
            pop(i, info.pops)
            stack.extend([(i,)] * info.pushes)
    else:
        raise AnalysisFailure("function body ended without final end")

    return FunctionFlow(consumers, final_reachable, label_branches)


def _target(frames, depth, at):
    if depth >= len(frames):
        raise AnalysisFailure(f"branch depth {depth} out of range at {at}")
    return frames[-1 - depth]


def stack_consumers(mod: WasmModule, func_index: int) -> dict[int, int]:
    """Map each value-producing instruction index to the index that pops its value."""
    return analyze(mod, func_index).consumers
