"""Intermediate representation for match-action stage programs.

A stage program is an ordered list of match-action stages. Each stage owns
its register arrays (stateful memory is stage-local on this class of
hardware), declares lookup tables (exact-match or longest-prefix-match), and
runs a short list of optionally predicated instructions over packet metadata
fields. Instructions are classified by the ALU capability they require so a
profile can accept or reject a program before execution.

Metadata fields are fixed-width unsigned bit patterns; instructions that care
about sign interpret their operands as two's complement at the declared
width. Shift distances saturate at the destination width minus one, matching
the accumulator core's register semantics.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, fields as dc_fields
from typing import ClassVar

__all__ = [
    "Capability",
    "AluProfile",
    "BASELINE",
    "EXTENDED",
    "Predicate",
    "Instruction",
    "Assign",
    "Arith",
    "Bit",
    "ExtractBits",
    "ShiftImm",
    "ShiftVar",
    "Compare",
    "Lookup",
    "RegRead",
    "RegWrite",
    "RegAdd",
    "RegCondWrite",
    "RegShiftAdd",
    "EmitResult",
    "MarkDrop",
    "RegisterArray",
    "TableEntry",
    "Table",
    "Stage",
    "StageProgram",
    "program_to_json",
    "program_from_json",
]


class Capability(enum.Enum):
    """ALU features a stage instruction may require."""

    FIXED_SHIFT = "FixedShift"
    VARIABLE_SHIFT = "VariableShift"
    STATEFUL_READ_ADD_WRITE = "StatefulReadAddWrite"
    STATEFUL_READ_SHIFT_ADD_WRITE = "StatefulReadShiftAddWrite"
    COMPARE_SELECT = "CompareSelect"
    TABLE_LOOKUP = "TableLookup"
    BITWISE_OPS = "BitwiseOps"
    ADD_SUB = "AddSub"


@dataclass(frozen=True)
class AluProfile:
    name: str
    capabilities: frozenset[Capability]

    def supports(self, cap: Capability) -> bool:
        return cap in self.capabilities


# The baseline profile models stock switch ALUs: fixed-distance shifts and
# plain read-add-write stateful units only. The extended profile adds the two
# features the exact accumulator needs: variable-distance shifts and a
# stateful unit that can shift its register before adding.
BASELINE = AluProfile(
    "baseline",
    frozenset(
        {
            Capability.FIXED_SHIFT,
            Capability.STATEFUL_READ_ADD_WRITE,
            Capability.COMPARE_SELECT,
            Capability.TABLE_LOOKUP,
            Capability.BITWISE_OPS,
            Capability.ADD_SUB,
        }
    ),
)
EXTENDED = AluProfile(
    "extended",
    BASELINE.capabilities
    | {Capability.VARIABLE_SHIFT, Capability.STATEFUL_READ_SHIFT_ADD_WRITE},
)

PROFILES_BY_NAME: dict[str, AluProfile] = {p.name: p for p in (BASELINE, EXTENDED)}

CMP_OPS = ("eq", "ne", "lt", "le", "gt", "ge")


@dataclass(frozen=True)
class Predicate:
    """Gate an instruction on a metadata field compared to a constant."""

    field: str
    op: str
    value: int
    signed: bool = False

    def __post_init__(self) -> None:
        if self.op not in CMP_OPS:
            raise ValueError(f"bad predicate op {self.op!r}")


@dataclass(frozen=True)
class Instruction:
    """Base class; concrete instructions define reads/writes/capability."""

    preds: tuple[Predicate, ...] = field(default=(), kw_only=True)

    capability: ClassVar[Capability]  # set by each concrete instruction

    def reads(self) -> tuple[str, ...]:
        raise NotImplementedError

    def writes(self) -> tuple[str, ...]:
        raise NotImplementedError

    def register_array(self) -> str | None:
        return None


def _flds(*xs) -> tuple[str, ...]:
    return tuple(x for x in xs if isinstance(x, str))


@dataclass(frozen=True)
class Assign(Instruction):
    dst: str
    src: str | int
    capability = Capability.BITWISE_OPS

    def reads(self):
        return _flds(self.src)

    def writes(self):
        return (self.dst,)


@dataclass(frozen=True)
class Arith(Instruction):
    dst: str
    op: str  # "add" | "sub", wrapping at the destination width
    a: str | int
    b: str | int
    capability = Capability.ADD_SUB

    def __post_init__(self) -> None:
        if self.op not in ("add", "sub"):
            raise ValueError(f"bad arith op {self.op!r}")

    def reads(self):
        return _flds(self.a, self.b)

    def writes(self):
        return (self.dst,)


@dataclass(frozen=True)
class Bit(Instruction):
    dst: str
    op: str  # "and" | "or" | "xor"
    a: str | int
    b: str | int
    capability = Capability.BITWISE_OPS

    def __post_init__(self) -> None:
        if self.op not in ("and", "or", "xor"):
            raise ValueError(f"bad bit op {self.op!r}")

    def reads(self):
        return _flds(self.a, self.b)

    def writes(self):
        return (self.dst,)


@dataclass(frozen=True)
class ExtractBits(Instruction):
    dst: str
    src: str
    lsb: int
    width: int
    capability = Capability.BITWISE_OPS

    def reads(self):
        return (self.src,)

    def writes(self):
        return (self.dst,)


@dataclass(frozen=True)
class ShiftImm(Instruction):
    dst: str
    src: str | int
    dist: int
    direction: str  # "l" | "r"
    signed: bool = False  # arithmetic right shift when set
    capability = Capability.FIXED_SHIFT

    def __post_init__(self) -> None:
        if self.direction not in ("l", "r"):
            raise ValueError("shift direction must be 'l' or 'r'")
        if self.dist < 0:
            raise ValueError("shift distance must be non-negative")

    def reads(self):
        return _flds(self.src)

    def writes(self):
        return (self.dst,)


@dataclass(frozen=True)
class ShiftVar(Instruction):
    dst: str
    src: str | int
    dist: str  # field holding the distance
    direction: str
    signed: bool = False
    capability = Capability.VARIABLE_SHIFT

    def __post_init__(self) -> None:
        if self.direction not in ("l", "r"):
            raise ValueError("shift direction must be 'l' or 'r'")

    def reads(self):
        return _flds(self.src, self.dist)

    def writes(self):
        return (self.dst,)


@dataclass(frozen=True)
class Compare(Instruction):
    dst: str
    op: str
    a: str | int
    b: str | int
    signed: bool = False
    capability = Capability.COMPARE_SELECT

    def __post_init__(self) -> None:
        if self.op not in CMP_OPS:
            raise ValueError(f"bad compare op {self.op!r}")

    def reads(self):
        return _flds(self.a, self.b)

    def writes(self):
        return (self.dst,)


@dataclass(frozen=True)
class Lookup(Instruction):
    table: str
    key: str
    dst: str
    capability = Capability.TABLE_LOOKUP

    def reads(self):
        return (self.key,)

    def writes(self):
        return (self.dst,)


@dataclass(frozen=True)
class RegRead(Instruction):
    array: str
    index: str
    dst: str
    capability = Capability.STATEFUL_READ_ADD_WRITE

    def reads(self):
        return (self.index,)

    def writes(self):
        return (self.dst,)

    def register_array(self):
        return self.array


@dataclass(frozen=True)
class RegWrite(Instruction):
    array: str
    index: str
    src: str | int
    dst_old: str | None = None
    capability = Capability.STATEFUL_READ_ADD_WRITE

    def reads(self):
        return _flds(self.index, self.src)

    def writes(self):
        return _flds(self.dst_old)

    def register_array(self):
        return self.array


@dataclass(frozen=True)
class RegAdd(Instruction):
    """reg[i] += src with signed overflow rejection at the array width.

    On overflow the register keeps its old value and dst_overflow is set.
    dst_old/dst_new expose the read and written values to later stages.
    """

    array: str
    index: str
    src: str | int
    dst_old: str | None = None
    dst_new: str | None = None
    dst_overflow: str | None = None
    capability = Capability.STATEFUL_READ_ADD_WRITE

    def reads(self):
        return _flds(self.index, self.src)

    def writes(self):
        return _flds(self.dst_old, self.dst_new, self.dst_overflow)

    def register_array(self):
        return self.array


@dataclass(frozen=True)
class RegCondWrite(Instruction):
    """Predicated stateful write; the predicate compares against the register.

    cond "greater": write src iff src > reg[i] (unsigned).
    cond "zero_or_gap_gt": write src iff reg[i] == 0 or src > reg[i] + gap.
    dst_flag receives 1 iff the write happened; dst_old the prior value.
    """

    array: str
    index: str
    src: str | int
    cond: str
    gap: int = 0
    dst_old: str | None = None
    dst_flag: str | None = None
    capability = Capability.STATEFUL_READ_ADD_WRITE

    def __post_init__(self) -> None:
        if self.cond not in ("greater", "zero_or_gap_gt"):
            raise ValueError(f"bad stateful condition {self.cond!r}")

    def reads(self):
        return _flds(self.index, self.src)

    def writes(self):
        return _flds(self.dst_old, self.dst_flag)

    def register_array(self):
        return self.array


@dataclass(frozen=True)
class RegShiftAdd(Instruction):
    """reg[i] = (reg[i] >>a dist) + src in one stateful pass.

    The arithmetic shift saturates at width-1. Signed overflow of the add
    rejects the whole update (the register keeps its pre-shift value) and
    sets dst_overflow. dst_old exposes the pre-op register value.
    """

    array: str
    index: str
    dist: str
    src: str | int
    dst_old: str | None = None
    dst_new: str | None = None
    dst_overflow: str | None = None
    capability = Capability.STATEFUL_READ_SHIFT_ADD_WRITE

    def reads(self):
        return _flds(self.index, self.dist, self.src)

    def writes(self):
        return _flds(self.dst_old, self.dst_new, self.dst_overflow)

    def register_array(self):
        return self.array


@dataclass(frozen=True)
class EmitResult(Instruction):
    """Deparse a metadata field as the packet's result word (egress)."""

    src: str
    capability = Capability.BITWISE_OPS

    def reads(self):
        return (self.src,)

    def writes(self):
        return ()


@dataclass(frozen=True)
class MarkDrop(Instruction):
    """Set the packet verdict to Drop."""

    capability = Capability.BITWISE_OPS

    def reads(self):
        return ()

    def writes(self):
        return ()


@dataclass(frozen=True)
class RegisterArray:
    name: str
    width: int
    length: int
    signed: bool = False


@dataclass(frozen=True)
class TableEntry:
    value: int
    data: int
    prefix_len: int | None = None  # None for exact-match entries


@dataclass(frozen=True)
class Table:
    name: str
    kind: str  # "exact" | "lpm"
    key: str
    entries: tuple[TableEntry, ...]
    default: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("exact", "lpm"):
            raise ValueError(f"bad table kind {self.kind!r}")


@dataclass(frozen=True)
class Stage:
    id: int
    name: str
    egress: bool = False
    registers: tuple[RegisterArray, ...] = ()
    tables: tuple[Table, ...] = ()
    instructions: tuple[Instruction, ...] = ()


@dataclass(frozen=True)
class StageProgram:
    name: str
    fields: tuple[tuple[str, int], ...]  # (name, width) declarations
    input_fields: tuple[str, ...]        # populated by the parser/driver
    stages: tuple[Stage, ...]

    def field_widths(self) -> dict[str, int]:
        return dict(self.fields)


# ---------------------------------------------------------------------------
# JSON round-trip (structured text form for inspection and the validate CLI)
# ---------------------------------------------------------------------------

_INSTR_TYPES = {
    cls.__name__: cls
    for cls in (
        Assign,
        Arith,
        Bit,
        ExtractBits,
        ShiftImm,
        ShiftVar,
        Compare,
        Lookup,
        RegRead,
        RegWrite,
        RegAdd,
        RegCondWrite,
        RegShiftAdd,
        EmitResult,
        MarkDrop,
    )
}


def _instr_to_dict(ins: Instruction) -> dict:
    d: dict = {"kind": type(ins).__name__}
    for f in dc_fields(ins):
        if f.name == "preds":
            continue
        d[f.name] = getattr(ins, f.name)
    if ins.preds:
        d["preds"] = [
            {"field": p.field, "op": p.op, "value": p.value, "signed": p.signed}
            for p in ins.preds
        ]
    return d


def _instr_from_dict(d: dict) -> Instruction:
    d = dict(d)
    kind = d.pop("kind")
    preds = tuple(Predicate(**p) for p in d.pop("preds", []))
    cls = _INSTR_TYPES[kind]
    return cls(**d, preds=preds)


def program_to_json(program: StageProgram, indent: int | None = 2) -> str:
    doc = {
        "name": program.name,
        "fields": [{"name": n, "width": w} for n, w in program.fields],
        "input_fields": list(program.input_fields),
        "stages": [
            {
                "id": s.id,
                "name": s.name,
                "egress": s.egress,
                "registers": [
                    {"name": r.name, "width": r.width, "length": r.length, "signed": r.signed}
                    for r in s.registers
                ],
                "tables": [
                    {
                        "name": t.name,
                        "kind": t.kind,
                        "key": t.key,
                        "default": t.default,
                        "entries": [
                            {"value": e.value, "data": e.data}
                            | ({"prefix_len": e.prefix_len} if e.prefix_len is not None else {})
                            for e in t.entries
                        ],
                    }
                    for t in s.tables
                ],
                "instructions": [_instr_to_dict(i) for i in s.instructions],
            }
            for s in program.stages
        ],
    }
    return json.dumps(doc, indent=indent, sort_keys=False)


def program_from_json(text: str) -> StageProgram:
    doc = json.loads(text)
    stages = tuple(
        Stage(
            id=s["id"],
            name=s["name"],
            egress=s.get("egress", False),
            registers=tuple(
                RegisterArray(r["name"], r["width"], r["length"], r.get("signed", False))
                for r in s.get("registers", [])
            ),
            tables=tuple(
                Table(
                    t["name"],
                    t["kind"],
                    t["key"],
                    tuple(
                        TableEntry(e["value"], e["data"], e.get("prefix_len"))
                        for e in t.get("entries", [])
                    ),
                    t.get("default", 0),
                )
                for t in s.get("tables", [])
            ),
            instructions=tuple(_instr_from_dict(i) for i in s.get("instructions", [])),
        )
        for s in doc["stages"]
    )
    return StageProgram(
        name=doc["name"],
        fields=tuple((f["name"], f["width"]) for f in doc["fields"]),
        input_fields=tuple(doc.get("input_fields", [])),
        stages=stages,
    )
