"""Decoding and re-assembly of WebAssembly binary modules.

Only as much structure is decoded as the engine needs to rewrite code: the
type, import, function, export, start, element, global, code and name
sections. Everything else is carried through as raw section payloads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from . import opcodes as op

MAGIC = b"\x00asm"
VERSION = b"\x01\x00\x00\x00"

SEC_CUSTOM = 0
SEC_TYPE = 1
SEC_IMPORT = 2
SEC_FUNCTION = 3
SEC_TABLE = 4
SEC_MEMORY = 5
SEC_GLOBAL = 6
SEC_EXPORT = 7
SEC_START = 8
SEC_ELEMENT = 9
SEC_CODE = 10
SEC_DATA = 11
SEC_DATACOUNT = 12

KIND_FUNC, KIND_TABLE, KIND_MEMORY, KIND_GLOBAL = 0, 1, 2, 3


class DecodeError(ValueError):
    """Raised for malformed or unsupported module bytes."""


# -- LEB128 -----------------------------------------------------------------

def encode_u32(value: int) -> bytes:
    if value < 0:
        raise ValueError("unsigned LEB128 of negative value")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def encode_sleb(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        done = (value == 0 and not byte & 0x40) or (value == -1 and byte & 0x40)
        out.append(byte if done else byte | 0x80)
        if done:
            return bytes(out)


def encode_name(text: str) -> bytes:
    raw = text.encode("utf-8")
    return encode_u32(len(raw)) + raw


def encode_vec(items: list[bytes]) -> bytes:
    return encode_u32(len(items)) + b"".join(items)


class Reader:
    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def eof(self) -> bool:
        return self.pos >= self.end

    def byte(self) -> int:
        if self.pos >= self.end:
            raise DecodeError(f"unexpected end of data at offset {self.pos:#x}")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def bytes(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise DecodeError(f"unexpected end of data at offset {self.pos:#x}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return bytes(out)

    def u32(self) -> int:
        result = shift = 0
        for _ in range(5):
            b = self.byte()
            result |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                return result
        raise DecodeError(f"u32 LEB128 too long at offset {self.pos:#x}")

    def sleb(self, bits: int) -> int:
        result = shift = 0
        for _ in range((bits + 6) // 7):
            b = self.byte()
            result |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                if b & 0x40:
                    result -= 1 << shift
                return result
        raise DecodeError(f"s{bits} LEB128 too long at offset {self.pos:#x}")

    def name(self) -> str:
        n = self.u32()
        try:
            return self.bytes(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"malformed UTF-8 name: {exc}") from None


# -- module structure -------------------------------------------------------

@dataclass(frozen=True)
class FuncType:
    params: tuple[int, ...]
    results: tuple[int, ...]

    def encode(self) -> bytes:
        return (b"\x60" + encode_u32(len(self.params)) + bytes(self.params)
                + encode_u32(len(self.results)) + bytes(self.results))


@dataclass(frozen=True)
class Import:
    module: str
    name: str
    kind: int
    desc: bytes          # raw descriptor bytes after the kind byte
    type_index: int | None = None


@dataclass(frozen=True)
class Export:
    name: str
    kind: int
    index: int


@dataclass(frozen=True)
class Section:
    id: int
    payload: bytes
    offset: int          # absolute offset of the payload
    name: str | None = None   # custom sections only


@dataclass(frozen=True)
class CodeEntry:
    func_index: int
    offset: int          # absolute offset of the entry body (after the size prefix)
    end: int
    locals_end: int      # absolute offset of the first instruction
    local_types: tuple[int, ...]


@dataclass(frozen=True)
class Instr:
    index: int
    opcode: int | tuple[int, int]
    name: str
    imm: tuple
    start: int           # absolute offsets in the module bytes
    end: int


@dataclass
class WasmModule:
    data: bytes
    sections: list[Section]
    types: list[FuncType] = field(default_factory=list)
    imports: list[Import] = field(default_factory=list)
    func_types: list[int] = field(default_factory=list)  # whole function index space
    exports: list[Export] = field(default_factory=list)
    code: list[CodeEntry] = field(default_factory=list)
    func_names: dict[int, str] = field(default_factory=dict)
    start: int | None = None

    @property
    def n_func_imports(self) -> int:
        return sum(1 for imp in self.imports if imp.kind == KIND_FUNC)

    @property
    def func_imports(self) -> list[Import]:
        return [imp for imp in self.imports if imp.kind == KIND_FUNC]

    def func_type(self, func_index: int) -> FuncType:
        return self.types[self.func_types[func_index]]

    def code_entry(self, func_index: int) -> CodeEntry:
        return self.code[func_index - self.n_func_imports]

    def section(self, sec_id: int) -> Section | None:
        for sec in self.sections:
            if sec.id == sec_id:
                return sec
        return None

    def body(self, func_index: int) -> list[Instr]:
        cache = self.__dict__.setdefault("_bodies", {})
        if func_index not in cache:
            entry = self.code_entry(func_index)
            cache[func_index] = decode_instructions(self.data, entry.locals_end, entry.end)
        return cache[func_index]


def _read_limits(r: Reader) -> None:
    flag = r.byte()
    r.u32()
    if flag & 1:
        r.u32()


def _skip_import_desc(r: Reader, kind: int) -> None:
    if kind == KIND_TABLE:
        r.byte()
        _read_limits(r)
    elif kind == KIND_MEMORY:
        _read_limits(r)
    elif kind == KIND_GLOBAL:
        r.byte()
        r.byte()
    else:
        raise DecodeError(f"unsupported import kind {kind}")


def parse_module(data: bytes) -> WasmModule:
    data = bytes(data)
    if len(data) < 8 or data[:4] != MAGIC:
        raise DecodeError("bad magic number")
    if data[4:8] != VERSION:
        raise DecodeError("unsupported binary version")
    r = Reader(data, 8)
    sections: list[Section] = []
    while not r.eof():
        sec_id = r.byte()
        size = r.u32()
        start = r.pos
        payload = r.bytes(size)
        name = None
        if sec_id == SEC_CUSTOM:
            name = Reader(data, start, start + size).name()
        elif sec_id > SEC_DATACOUNT:
            raise DecodeError(f"unknown section id {sec_id}")
        sections.append(Section(sec_id, payload, start, name))

    mod = WasmModule(data, sections)
    defined_types: list[int] = []
    for sec in sections:
        sr = Reader(data, sec.offset, sec.offset + len(sec.payload))
        if sec.id == SEC_TYPE:
            for _ in range(sr.u32()):
                form = sr.byte()
                if form != 0x60:
                    raise DecodeError(f"unsupported type form {form:#x}")
                params = tuple(sr.bytes(sr.u32()))
                results = tuple(sr.bytes(sr.u32()))
                mod.types.append(FuncType(params, results))
        elif sec.id == SEC_IMPORT:
            for _ in range(sr.u32()):
                module, name = sr.name(), sr.name()
                kind = sr.byte()
                desc_start = sr.pos
                type_index = None
                if kind == KIND_FUNC:
                    type_index = sr.u32()
                else:
                    _skip_import_desc(sr, kind)
                mod.imports.append(Import(module, name, kind,
                                          data[desc_start:sr.pos], type_index))
        elif sec.id == SEC_FUNCTION:
            defined_types = [sr.u32() for _ in range(sr.u32())]
        elif sec.id == SEC_EXPORT:
            for _ in range(sr.u32()):
                name = sr.name()
                kind = sr.byte()
                mod.exports.append(Export(name, kind, sr.u32()))
        elif sec.id == SEC_START:
            mod.start = sr.u32()
        elif sec.id == SEC_CODE:
            n_imports = sum(1 for i in mod.imports if i.kind == KIND_FUNC)
            count = sr.u32()
            if count != len(defined_types):
                raise DecodeError("function and code section counts differ")
            for k in range(count):
                size = sr.u32()
                body_start = sr.pos
                local_types: list[int] = []
                for _ in range(sr.u32()):
                    n = sr.u32()
                    local_types.extend([sr.byte()] * n)
                mod.code.append(CodeEntry(n_imports + k, body_start,
                                          body_start + size, sr.pos,
                                          tuple(local_types)))
                sr.pos = body_start + size
        elif sec.id == SEC_CUSTOM and sec.name == "name":
            try:
                mod.func_names = _parse_function_names(sec)
            except DecodeError:
                mod.func_names = {}  # a broken name section is not fatal
    mod.func_types = [i.type_index for i in mod.imports if i.kind == KIND_FUNC] + defined_types
    for t in mod.func_types:
        if t >= len(mod.types):
            raise DecodeError(f"type index {t} out of range")
    return mod


def _parse_function_names(sec: Section) -> dict[int, str]:
    r = Reader(sec.payload)
    r.name()
    names: dict[int, str] = {}
    while not r.eof():
        sub_id = r.byte()
        size = r.u32()
        end = r.pos + size
        if sub_id == 1:
            sub = Reader(r.data, r.pos, end)
            for _ in range(sub.u32()):
                idx = sub.u32()
                names[idx] = sub.name()
        r.pos = end
    return names


# -- instructions -----------------------------------------------------------

def read_blocktype(r: Reader):
    b = r.data[r.pos] if r.pos < r.end else None
    if b == 0x40:
        r.pos += 1
        return ()
    if b in op.VALTYPE_NAMES:
        r.pos += 1
        return (b,)
    idx = r.sleb(33)
    if idx < 0:
        raise DecodeError("negative block type index")
    return idx


def _read_imm(r: Reader, kind: str) -> tuple:
    if kind == op.NONE:
        return ()
    if kind == op.BLOCKTYPE:
        return (read_blocktype(r),)
    if kind in (op.LABEL, op.FUNC, op.LOCAL, op.GLOBAL, op.TABLE, op.DATA, op.ELEM):
        return (r.u32(),)
    if kind == op.LABELS:
        targets = tuple(r.u32() for _ in range(r.u32()))
        return (targets, r.u32())
    if kind in (op.CALL_INDIRECT, op.ELEM_TABLE, op.TABLE2):
        return (r.u32(), r.u32())
    if kind == op.MEMARG:
        return (r.u32(), r.u32())
    if kind == op.MEMIDX:
        return (r.u32(),)
    if kind == op.MEMIDX2:
        return (r.u32(), r.u32())
    if kind == op.DATA_MEM:
        return (r.u32(), r.u32())
    if kind == op.CONST_I32:
        return (r.sleb(32),)
    if kind == op.CONST_I64:
        return (r.sleb(64),)
    if kind == op.CONST_F32:
        raw = r.bytes(4)
        return (struct.unpack("<f", raw)[0], raw)
    if kind == op.CONST_F64:
        raw = r.bytes(8)
        return (struct.unpack("<d", raw)[0], raw)
    if kind == op.REFTYPE:
        return (r.byte(),)
    if kind == op.SELECT_T:
        return (tuple(r.bytes(r.u32())),)
    raise AssertionError(kind)


def decode_instructions(data: bytes, start: int, end: int) -> list[Instr]:
    """Decode the flat instruction sequence of a function body or const expr.

    The sequence includes every structured-control marker (block, else, end),
    and the final ``end`` that terminates the body.
    """
    r = Reader(data, start, end)
    out: list[Instr] = []
    depth = 0
    while not r.eof():
        at = r.pos
        code = r.byte()
        if code == 0xFC:
            code = (0xFC, r.u32())
        info = op.OPS.get(code)
        if info is None:
            raise DecodeError(f"unsupported opcode {_fmt(code)} at offset {at:#x}")
        imm = _read_imm(r, info.imm)
        out.append(Instr(len(out), code, info.name, imm, at, r.pos))
        if info.name in ("block", "loop", "if"):
            depth += 1
        elif info.name == "end":
            if depth == 0:
                if not r.eof():
                    raise DecodeError(f"trailing bytes after final end at {r.pos:#x}")
                return out
            depth -= 1
    raise DecodeError("function body is not terminated by end")


def _fmt(code) -> str:
    if isinstance(code, tuple):
        return f"0x{code[0]:02x} {code[1]}"
    return f"0x{code:02x}"


def decode_const_expr(data: bytes, start: int, end: int) -> tuple[list[Instr], int]:
    """Decode an init expression starting at ``start``; returns (instrs, end offset)."""
    r = Reader(data, start, end)
    out: list[Instr] = []
    while True:
        at = r.pos
        code = r.byte()
        if code == 0xFC:
            code = (0xFC, r.u32())
        info = op.OPS.get(code)
        if info is None:
            raise DecodeError(f"unsupported opcode {_fmt(code)} in constant expression")
        imm = _read_imm(r, info.imm)
        out.append(Instr(len(out), code, info.name, imm, at, r.pos))
        if info.name == "end":
            return out, r.pos


def block_signature(mod: WasmModule, blocktype) -> FuncType:
    if isinstance(blocktype, tuple):
        return FuncType((), blocktype)
    if blocktype >= len(mod.types):
        raise DecodeError(f"block type index {blocktype} out of range")
    return mod.types[blocktype]


# -- encoding helpers -------------------------------------------------------

def encode_opcode(name: str) -> bytes:
    code = op.BY_NAME[name]
    if isinstance(code, tuple):
        return bytes([code[0]]) + encode_u32(code[1])
    return bytes([code])


def encode_call(func_index: int) -> bytes:
    return b"\x10" + encode_u32(func_index)


def encode_ref_func(func_index: int) -> bytes:
    return b"\xd2" + encode_u32(func_index)


def encode_const(valtype: int, value) -> bytes:
    if valtype == op.I32:
        value = _wrap_signed(int(value), 32)
        return b"\x41" + encode_sleb(value)
    if valtype == op.I64:
        value = _wrap_signed(int(value), 64)
        return b"\x42" + encode_sleb(value)
    if valtype == op.F32:
        return b"\x43" + struct.pack("<f", float(value))
    if valtype == op.F64:
        return b"\x44" + struct.pack("<d", float(value))
    raise ValueError(f"no constant encoding for value type {valtype:#x}")


def _wrap_signed(value: int, bits: int) -> int:
    value &= (1 << bits) - 1
    return value - (1 << bits) if value >> (bits - 1) else value


def assemble(sections: list[tuple[int, bytes]]) -> bytes:
    out = bytearray(MAGIC + VERSION)
    for sec_id, payload in sections:
        out.append(sec_id)
        out += encode_u32(len(payload))
        out += payload
    return bytes(out)


def encode_code_section(bodies: list[bytes]) -> bytes:
    return encode_vec([encode_u32(len(b)) + b for b in bodies])


def raw_body(mod: WasmModule, func_index: int) -> bytes:
    entry = mod.code_entry(func_index)
    return mod.data[entry.offset:entry.end]


def replace_bodies(mod: WasmModule, new_bodies: dict[int, bytes]) -> bytes:
    """Rebuild the module with the given function bodies swapped in.

    Bodies are full code entries (locals declaration + instructions) without the
    size prefix. Every other section is copied verbatim.
    """
    bodies = [new_bodies.get(e.func_index, mod.data[e.offset:e.end]) for e in mod.code]
    code_payload = encode_code_section(bodies)
    return assemble([(s.id, code_payload if s.id == SEC_CODE else s.payload)
                     for s in mod.sections])
