"""Stage-program IR, static validation, execution model, and builtins."""

from .builtins import (
    EXP_ARRAY,
    MANT_ARRAY,
    OP_ADD,
    OP_READ,
    ProfileMismatch,
    add_packet,
    builtin_program,
    event_from_metadata,
    read_packet,
    result_word,
)
from .machine import (
    Machine,
    PacketContext,
    ProgramInvalid,
    RegisterAccessConflict,
    RegisterIndexOutOfBounds,
    StageSnapshot,
    UndeclaredField,
    Verdict,
    execute,
)
from .program import (
    BASELINE,
    EXTENDED,
    PROFILES_BY_NAME,
    AluProfile,
    Arith,
    Assign,
    Bit,
    Capability,
    Compare,
    EmitResult,
    ExtractBits,
    Instruction,
    Lookup,
    MarkDrop,
    Predicate,
    RegAdd,
    RegCondWrite,
    RegisterArray,
    RegRead,
    RegShiftAdd,
    RegWrite,
    ShiftImm,
    ShiftVar,
    Stage,
    StageProgram,
    Table,
    TableEntry,
    program_from_json,
    program_to_json,
)
from .validator import (
    ResourceLimits,
    ResourcePressure,
    Violation,
    check_resources,
    validate,
)

__all__ = [
    "AluProfile",
    "Capability",
    "BASELINE",
    "EXTENDED",
    "PROFILES_BY_NAME",
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
    "Violation",
    "validate",
    "ResourceLimits",
    "ResourcePressure",
    "check_resources",
    "Machine",
    "execute",
    "Verdict",
    "PacketContext",
    "StageSnapshot",
    "ProgramInvalid",
    "UndeclaredField",
    "RegisterIndexOutOfBounds",
    "RegisterAccessConflict",
    "OP_ADD",
    "OP_READ",
    "EXP_ARRAY",
    "MANT_ARRAY",
    "ProfileMismatch",
    "builtin_program",
    "add_packet",
    "read_packet",
    "result_word",
    "event_from_metadata",
]
