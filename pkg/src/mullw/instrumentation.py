"""Entry/exit probes, dynamic call trees and mutation distance.

Every defined function gets ``mull.enter(idx)`` as its first instruction and
``mull.exit(idx)`` before each ``return`` and before its final ``end``.
``idx`` is the function's index in the original (uninstrumented) index space.
Functions whose body branches straight to the function label are wrapped in
one extra block so those branches land in front of the exit probe too.
"""

from __future__ import annotations

import enum
import itertools
from collections import deque
from dataclasses import dataclass, field

import wasmtime

from .errors import InstrumentationFailure, MalformedEventStream
from .module_store import LoadedModule, validate_bytes
from .mutation.consumers import analyze
from .wasm import opcodes as op
from .wasm.binary import (
    KIND_FUNC, SEC_CODE, SEC_CUSTOM, SEC_ELEMENT, SEC_EXPORT, SEC_GLOBAL,
    SEC_IMPORT, SEC_START, SEC_TYPE, FuncType, Reader, assemble,
    decode_const_expr, encode_call, encode_code_section, encode_const,
    encode_name, encode_u32, encode_vec, parse_module,
)

PROBE_MODULE = "mull"
ENTER = "enter"
EXIT = "exit"

FuncRef = tuple[int, int]


@dataclass(frozen=True)
class InstrumentedModule:
    source: LoadedModule
    bytes: bytes
    enter_index: int
    exit_index: int
    # func_index -> (enter probes, exit probes)
    probes: dict[int, tuple[int, int]] = field(repr=False)


def instrument(module: LoadedModule) -> InstrumentedModule:
    return instrument_bytes(module, module.bytes)


def instrument_bytes(module: LoadedModule, data: bytes) -> InstrumentedModule:
    """Instrument ``data``, which must share ``module``'s function index space.

    Used for mutants: they are rewritten from the original bytes and keep every
    function index, so the original's layout applies.
    """
    mod = module.wasm if data is module.bytes else parse_module(data)
    for imp in mod.func_imports:
        if imp.module == PROBE_MODULE and imp.name == ENTER:
            raise InstrumentationFailure(f"{module.path} is already instrumented")
    n_imp = mod.n_func_imports

    def remap(idx: int) -> int:
        return idx if idx < n_imp else idx + 2

    probe_type = FuncType((op.I32,), ())
    types = list(mod.types)
    if probe_type in types:
        probe_type_idx = types.index(probe_type)
    else:
        probe_type_idx = len(types)
        types.append(probe_type)
    type_payload = encode_vec([t.encode() for t in types])

    import_items = []
    imp_sec = mod.section(SEC_IMPORT)
    if imp_sec is not None:
        for imp in mod.imports:
            import_items.append(encode_name(imp.module) + encode_name(imp.name)
                                + bytes([imp.kind]) + imp.desc)
    for name in (ENTER, EXIT):
        import_items.append(encode_name(PROBE_MODULE) + encode_name(name)
                            + bytes([KIND_FUNC]) + encode_u32(probe_type_idx))
    import_payload = encode_vec(import_items)

    enter_idx, exit_idx = n_imp, n_imp + 1
    bodies = []
    probes = {}
    for entry in mod.code:
        body, counts = _instrument_body(mod, entry, remap, enter_idx, exit_idx)
        bodies.append(body)
        probes[entry.func_index] = counts

    out: list[tuple[int, bytes]] = []
    wrote_imports = False
    for sec in mod.sections:
        if sec.id == SEC_TYPE:
            out.append((SEC_TYPE, type_payload))
            out.append((SEC_IMPORT, import_payload))
            wrote_imports = True
        elif sec.id == SEC_IMPORT:
            continue
        elif sec.id == SEC_EXPORT:
            out.append((SEC_EXPORT, _rewrite_exports(mod, remap)))
        elif sec.id == SEC_START:
            out.append((SEC_START, encode_u32(remap(mod.start))))
        elif sec.id == SEC_ELEMENT:
            out.append((SEC_ELEMENT, _rewrite_elements(sec, remap)))
        elif sec.id == SEC_GLOBAL:
            out.append((SEC_GLOBAL, _rewrite_globals(sec, remap)))
        elif sec.id == SEC_CODE:
            out.append((SEC_CODE, encode_code_section(bodies)))
        elif sec.id == SEC_CUSTOM and sec.name == "name":
            out.append((SEC_CUSTOM, _rewrite_names(sec, remap)))
        else:
            out.append((sec.id, sec.payload))
    if not wrote_imports:
        # no type section at all: it must come first, imports right after
        out[:0] = [(SEC_TYPE, type_payload), (SEC_IMPORT, import_payload)]

    new = assemble(out)
    try:
        validate_bytes(new)
    except wasmtime.WasmtimeError as exc:
        raise InstrumentationFailure(
            f"{module.path}: instrumented module does not validate: {exc}") from None
    return InstrumentedModule(module, new, enter_idx, exit_idx, probes)


def _probe(target: int, func_index: int) -> bytes:
    return encode_const(op.I32, func_index) + encode_call(target)


def _instrument_body(mod, entry, remap, enter_idx, exit_idx):
    f = entry.func_index
    body = mod.body(f)
    flow = analyze(mod, f, body)
    data = mod.data
    out = bytearray(data[entry.offset:entry.locals_end])
    out += _probe(enter_idx, f)
    exits = 0
    wrap = bool(flow.function_label_branches)
    if wrap:
        results = mod.func_type(f).results
        out += b"\x02" + (bytes(results) if results else b"\x40")
    for ins in body[:-1]:
        if ins.name == "return":
            out += _probe(exit_idx, f)
            exits += 1
            out += data[ins.start:ins.end]
        elif ins.name == "call":
            out += encode_call(remap(ins.imm[0]))
        elif ins.name == "ref.func":
            out += b"\xd2" + encode_u32(remap(ins.imm[0]))
        else:
            out += data[ins.start:ins.end]
    if wrap:
        out += b"\x0b"
    if wrap or flow.final_end_reachable:
        out += _probe(exit_idx, f)
        exits += 1
    out += b"\x0b"
    return bytes(out), (1, exits)


def _rewrite_exports(mod, remap) -> bytes:
    items = []
    for e in mod.exports:
        idx = remap(e.index) if e.kind == KIND_FUNC else e.index
        items.append(encode_name(e.name) + bytes([e.kind]) + encode_u32(idx))
    return encode_vec(items)


def _rewrite_expr(data: bytes, r: Reader, remap) -> bytes:
    instrs, end = decode_const_expr(data, r.pos, r.end)
    out = bytearray()
    for ins in instrs:
        if ins.name == "ref.func":
            out += b"\xd2" + encode_u32(remap(ins.imm[0]))
        else:
            out += data[ins.start:ins.end]
    r.pos = end
    return bytes(out)


def _rewrite_globals(sec, remap) -> bytes:
    data = sec.payload
    r = Reader(data)
    items = []
    for _ in range(r.u32()):
        head = r.bytes(2)
        items.append(head + _rewrite_expr(data, r, remap))
    return encode_vec(items)


def _rewrite_elements(sec, remap) -> bytes:
    data = sec.payload
    r = Reader(data)
    items = []
    for _ in range(r.u32()):
        flags = r.u32()
        out = bytearray(encode_u32(flags))
        if flags in (2, 6):
            out += encode_u32(r.u32())
        if flags in (0, 2, 4, 6):
            out += _rewrite_expr(data, r, remap)
        if flags in (1, 2, 3):
            out.append(r.byte())        # elemkind
        elif flags in (5, 6, 7):
            out.append(r.byte())        # reftype
        count = r.u32()
        out += encode_u32(count)
        for _ in range(count):
            if flags < 4:
                out += encode_u32(remap(r.u32()))
            else:
                out += _rewrite_expr(data, r, remap)
        items.append(bytes(out))
    return encode_vec(items)


def _rewrite_names(sec, remap) -> bytes:
    data = sec.payload
    r = Reader(data)
    out = bytearray(encode_name(r.name()))
    while not r.eof():
        sub_id = r.byte()
        size = r.u32()
        end = r.pos + size
        sub = Reader(data, r.pos, end)
        if sub_id == 1:
            entries = [encode_u32(remap(sub.u32())) + encode_name(sub.name())
                       for _ in range(sub.u32())]
            payload = encode_vec(entries)
        elif sub_id in (2, 3):
            groups = []
            for _ in range(sub.u32()):
                idx = sub.u32()
                inner = [encode_u32(sub.u32()) + encode_name(sub.name())
                         for _ in range(sub.u32())]
                groups.append(encode_u32(remap(idx)) + encode_vec(inner))
            payload = encode_vec(groups)
        else:
            payload = data[r.pos:end]
        out.append(sub_id)
        out += encode_u32(len(payload)) + payload
        r.pos = end
    return bytes(out)


# -- events and trees -------------------------------------------------------

class ProbeKind(enum.Enum):
    ENTER = "Enter"
    EXIT = "Exit"


@dataclass(frozen=True)
class ProbeEvent:
    kind: ProbeKind
    func_ref: FuncRef
    sequence: int


class ProbeRecorder:
    """Collects probe events for one sandbox run at a time."""

    def __init__(self):
        self.events: list[ProbeEvent] = []
        self._seq = itertools.count()

    def record(self, kind: ProbeKind, func_ref: FuncRef) -> None:
        self.events.append(ProbeEvent(kind, func_ref, next(self._seq)))

    def hooks(self, module_id: int):
        def enter(idx):
            self.record(ProbeKind.ENTER, (module_id, idx))

        def exit_(idx):
            self.record(ProbeKind.EXIT, (module_id, idx))
        return enter, exit_


@dataclass
class CallNode:
    func_ref: FuncRef
    children: list["CallNode"] = field(default_factory=list)

    def walk(self, depth=0):
        yield self, depth
        for child in self.children:
            yield from child.walk(depth + 1)


@dataclass
class DynamicCallTree:
    root: CallNode

    def shape(self):
        """Nested (func_ref, [children...]) tuples; handy for comparisons."""
        def conv(node):
            return (node.func_ref, [conv(c) for c in node.children])
        return conv(self.root)


def build_call_tree(events, test_entry: FuncRef) -> DynamicCallTree:
    root = CallNode(test_entry)
    stack: list[CallNode] = []
    outside: list[FuncRef] = []
    for ev in events:
        if ev.kind is ProbeKind.ENTER:
            if stack:
                node = CallNode(ev.func_ref)
                stack[-1].children.append(node)
                stack.append(node)
            elif ev.func_ref == test_entry:
                stack.append(root)
            else:
                outside.append(ev.func_ref)
        else:
            frames = stack if stack else outside
            if not frames:
                raise MalformedEventStream(f"exit from {ev.func_ref} without matching enter "
                                           f"(event {ev.sequence})")
            top = frames[-1] if frames is outside else frames[-1].func_ref
            if top != ev.func_ref:
                raise MalformedEventStream(f"exit from {ev.func_ref} while {top} is active "
                                           f"(event {ev.sequence})")
            frames.pop()
    # unmatched enters (trap or timeout) simply stay in the tree
    return DynamicCallTree(root)


def coverage(tree: DynamicCallTree) -> dict[FuncRef, int]:
    """Minimal depth of every function in the tree, by breadth-first search."""
    dist: dict[FuncRef, int] = {}
    queue = deque([(tree.root, 0)])
    while queue:
        node, depth = queue.popleft()
        if node.func_ref not in dist:
            dist[node.func_ref] = depth
        queue.extend((child, depth + 1) for child in node.children)
    return dist


def reachable_functions(cov: dict[FuncRef, int], max_distance: int) -> set[FuncRef]:
    if max_distance < 1:
        raise ValueError("max_distance must be at least 1")
    return {f for f, d in cov.items() if 1 <= d <= max_distance}
