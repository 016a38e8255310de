"""Software execution model for stage programs.

The machine compiles a program once into per-stage closure lists and then
runs packets through all stages in order. Metadata fields live in a plain
dict as unsigned patterns at their declared widths; instructions that are
signed decode operands as two's complement at the operand's width and mask
results back. Register arrays hold Python ints (signed values for signed
arrays) and persist across packets.

Runtime rules enforced here rather than by the static validator:

  * every referenced field, table, and register array must be declared
    (UndeclaredField at compile time);
  * a register index must be in range (RegisterIndexOutOfBounds);
  * each packet may access a given register array at most once, matching
    single-ported stateful memory (RegisterAccessConflict). Instructions
    whose predicates do not fire do not count.

Shift distances saturate at the destination width minus one; stateful adds
reject on signed overflow at the array width, keeping the old value.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .program import (
    AluProfile,
    Arith,
    Assign,
    Bit,
    Compare,
    EmitResult,
    ExtractBits,
    EXTENDED,
    Instruction,
    Lookup,
    MarkDrop,
    RegAdd,
    RegCondWrite,
    RegRead,
    RegShiftAdd,
    RegWrite,
    ShiftImm,
    ShiftVar,
    Stage,
    StageProgram,
    Table,
)
from .validator import validate

__all__ = [
    "Verdict",
    "PacketContext",
    "StageSnapshot",
    "Machine",
    "execute",
    "ProgramInvalid",
    "UndeclaredField",
    "RegisterIndexOutOfBounds",
    "RegisterAccessConflict",
]


class ProgramInvalid(ValueError):
    """Raised when constructing a Machine for a program that fails validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:4])
        more = "" if len(self.violations) <= 4 else f" (+{len(self.violations) - 4} more)"
        super().__init__(f"program failed validation: {lines}{more}")


class UndeclaredField(LookupError):
    """A field, table, or register array is referenced but never declared."""


class RegisterIndexOutOfBounds(IndexError):
    pass


class RegisterAccessConflict(RuntimeError):
    """A packet touched the same register array twice."""


class Verdict(enum.Enum):
    FORWARD = "forward"
    DROP = "drop"
    RESULT = "result"


@dataclass
class PacketContext:
    metadata: dict[str, int]
    verdict: Verdict = Verdict.FORWARD
    result: bytes | None = None


@dataclass(frozen=True)
class StageSnapshot:
    stage_id: int
    stage_name: str
    metadata: dict[str, int]


class _Ctl:
    __slots__ = ("verdict", "result", "accessed")

    def __init__(self):
        self.verdict = Verdict.FORWARD
        self.result = None
        self.accessed = set()


def _decode(value: int, width: int) -> int:
    return value - (1 << width) if value >= 1 << (width - 1) else value


_CMP = {
    "eq": lambda a, b: a == b,
    "ne": lambda a, b: a != b,
    "lt": lambda a, b: a < b,
    "le": lambda a, b: a <= b,
    "gt": lambda a, b: a > b,
    "ge": lambda a, b: a >= b,
}


class Machine:
    """Compiled program plus live register state.

    Registers are zeroed at construction. `registers` exposes the live
    arrays; read_register/write_register are the control-plane accessors a
    driver uses between packets (writes are masked/decoded to the array
    type). Reuse one Machine for packet loops; `execute` below recompiles
    per call.
    """

    def __init__(self, program: StageProgram, profile: AluProfile = EXTENDED,
                 check: bool = True):
        if check:
            violations = validate(program, profile)
            if violations:
                raise ProgramInvalid(violations)
        self.program = program
        self.profile = profile
        self._widths = program.field_widths()
        self.registers: dict[str, list[int]] = {}
        self._reg_meta: dict[str, tuple[int, bool]] = {}  # width, signed
        tables: dict[str, Table] = {}
        for stage in program.stages:
            for reg in stage.registers:
                self.registers[reg.name] = [0] * reg.length
                self._reg_meta[reg.name] = (reg.width, reg.signed)
            for tab in stage.tables:
                tables[tab.name] = tab
        self._zero_meta = {name: 0 for name in self._widths}
        self._compiled: list[tuple[Stage, list]] = [
            (stage, [self._compile(ins, tables) for ins in stage.instructions])
            for stage in program.stages
        ]

    # -- control plane -----------------------------------------------------

    def reset(self) -> None:
        for arr in self.registers.values():
            for i in range(len(arr)):
                arr[i] = 0

    def read_register(self, array: str, index: int) -> int:
        return self.registers[array][index]

    def write_register(self, array: str, index: int, value: int) -> None:
        width, signed = self._reg_meta[array]
        value &= (1 << width) - 1
        self.registers[array][index] = _decode(value, width) if signed else value

    # -- data plane --------------------------------------------------------

    def process(self, metadata: dict[str, int],
                trace: list[StageSnapshot] | None = None) -> PacketContext:
        widths = self._widths
        meta = dict(self._zero_meta)
        for key, value in metadata.items():
            w = widths.get(key)
            if w is None:
                raise UndeclaredField(f"input field {key!r} is not declared")
            meta[key] = value & ((1 << w) - 1)
        ctl = _Ctl()
        regs = self.registers
        for stage, thunks in self._compiled:
            for thunk in thunks:
                thunk(meta, regs, ctl)
            if trace is not None:
                trace.append(StageSnapshot(stage.id, stage.name, dict(meta)))
        return PacketContext(meta, ctl.verdict, ctl.result)

    # -- compilation -------------------------------------------------------

    def _width_of(self, name: str) -> int:
        try:
            return self._widths[name]
        except KeyError:
            raise UndeclaredField(f"field {name!r} is not declared") from None

    def _operand(self, x):
        """Return (is_field, payload): payload is (name, width) or an int."""
        if isinstance(x, str):
            return True, (x, self._width_of(x))
        return False, int(x)

    def _compile(self, ins: Instruction, tables: dict[str, Table]):
        run = self._compile_body(ins, tables)
        if not ins.preds:
            return run
        checks = []
        for p in ins.preds:
            pw = self._width_of(p.field)
            cmp = _CMP[p.op]
            if p.signed:
                half, full = 1 << (pw - 1), 1 << pw
                fld, val = p.field, p.value

                def chk(meta, _f=fld, _v=val, _h=half, _fu=full, _c=cmp):
                    raw = meta[_f]
                    return _c(raw - _fu if raw >= _h else raw, _v)

            else:
                fld, val = p.field, p.value & ((1 << pw) - 1)

                def chk(meta, _f=fld, _v=val, _c=cmp):
                    return _c(meta[_f], _v)

            checks.append(chk)
        checks = tuple(checks)

        def guarded(meta, regs, ctl, _checks=checks, _run=run):
            for c in _checks:
                if not c(meta):
                    return
            _run(meta, regs, ctl)

        return guarded

    def _compile_body(self, ins: Instruction, tables: dict[str, Table]):
        if isinstance(ins, Assign):
            dst = ins.dst
            dmask = (1 << self._width_of(dst)) - 1
            is_f, pay = self._operand(ins.src)
            if is_f:
                src = pay[0]
                return lambda meta, regs, ctl: meta.__setitem__(dst, meta[src] & dmask)
            val = pay & dmask
            return lambda meta, regs, ctl: meta.__setitem__(dst, val)

        if isinstance(ins, Arith):
            dst = ins.dst
            dmask = (1 << self._width_of(dst)) - 1
            fa, pa = self._operand(ins.a)
            fb, pb = self._operand(ins.b)
            sub = ins.op == "sub"
            if fa and fb:
                a, b = pa[0], pb[0]
                if sub:
                    return lambda meta, regs, ctl: meta.__setitem__(
                        dst, (meta[a] - meta[b]) & dmask)
                return lambda meta, regs, ctl: meta.__setitem__(
                    dst, (meta[a] + meta[b]) & dmask)
            if fa:
                a, b = pa[0], pb
                if sub:
                    return lambda meta, regs, ctl: meta.__setitem__(
                        dst, (meta[a] - b) & dmask)
                return lambda meta, regs, ctl: meta.__setitem__(
                    dst, (meta[a] + b) & dmask)
            a, b = pa, pb[0] if fb else pb
            if fb:
                if sub:
                    return lambda meta, regs, ctl: meta.__setitem__(
                        dst, (a - meta[b]) & dmask)
                return lambda meta, regs, ctl: meta.__setitem__(
                    dst, (a + meta[b]) & dmask)
            const = (a - b if sub else a + b) & dmask
            return lambda meta, regs, ctl: meta.__setitem__(dst, const)

        if isinstance(ins, Bit):
            dst = ins.dst
            dmask = (1 << self._width_of(dst)) - 1
            fa, pa = self._operand(ins.a)
            fb, pb = self._operand(ins.b)
            fn = {"and": lambda x, y: x & y,
                  "or": lambda x, y: x | y,
                  "xor": lambda x, y: x ^ y}[ins.op]
            if fa and fb:
                a, b = pa[0], pb[0]
                return lambda meta, regs, ctl: meta.__setitem__(
                    dst, fn(meta[a], meta[b]) & dmask)
            if fa:
                a, b = pa[0], pb
                return lambda meta, regs, ctl: meta.__setitem__(
                    dst, fn(meta[a], b) & dmask)
            if fb:
                a, b = pa, pb[0]
                return lambda meta, regs, ctl: meta.__setitem__(
                    dst, fn(a, meta[b]) & dmask)
            const = fn(pa, pb) & dmask
            return lambda meta, regs, ctl: meta.__setitem__(dst, const)

        if isinstance(ins, ExtractBits):
            dst, src, lsb = ins.dst, ins.src, ins.lsb
            self._width_of(src)
            emask = (1 << ins.width) - 1
            dmask = (1 << self._width_of(dst)) - 1
            return lambda meta, regs, ctl: meta.__setitem__(
                dst, (meta[src] >> lsb) & emask & dmask)

        if isinstance(ins, (ShiftImm, ShiftVar)):
            dst = ins.dst
            dw = self._width_of(dst)
            dmask = (1 << dw) - 1
            fa, pa = self._operand(ins.src)
            left = ins.direction == "l"
            signed = ins.signed and not left
            if isinstance(ins, ShiftImm):
                dist_const: int | None = min(ins.dist, dw - 1)
                dist_field = None
            else:
                dist_const = None
                dist_field = ins.dist
                self._width_of(dist_field)
            sat = dw - 1
            if fa:
                src, sw = pa
                shalf, sfull = 1 << (sw - 1), 1 << sw

                def run(meta, regs, ctl):
                    eff = dist_const if dist_const is not None else min(
                        meta[dist_field], sat)
                    raw = meta[src]
                    if left:
                        meta[dst] = (raw << eff) & dmask
                    elif signed:
                        if raw >= shalf:
                            raw -= sfull
                        meta[dst] = (raw >> eff) & dmask
                    else:
                        meta[dst] = raw >> eff

                return run
            val = pa

            def run_imm(meta, regs, ctl):
                eff = dist_const if dist_const is not None else min(
                    meta[dist_field], sat)
                if left:
                    meta[dst] = (val << eff) & dmask
                else:
                    meta[dst] = (val >> eff) & dmask

            return run_imm

        if isinstance(ins, Compare):
            dst = ins.dst
            self._width_of(dst)
            cmp = _CMP[ins.op]
            fa, pa = self._operand(ins.a)
            fb, pb = self._operand(ins.b)
            signed = ins.signed

            def dec_args():
                if fa:
                    aw = pa[1]
                    ahalf, afull = 1 << (aw - 1), 1 << aw
                else:
                    ahalf = afull = 0
                if fb:
                    bw = pb[1]
                    bhalf, bfull = 1 << (bw - 1), 1 << bw
                else:
                    bhalf = bfull = 0
                return ahalf, afull, bhalf, bfull

            ahalf, afull, bhalf, bfull = dec_args()
            aname = pa[0] if fa else None
            bname = pb[0] if fb else None
            aval = None if fa else pa
            bval = None if fb else pb

            def run_cmp(meta, regs, ctl):
                if aname is not None:
                    a = meta[aname]
                    if signed and a >= ahalf:
                        a -= afull
                else:
                    a = aval
                if bname is not None:
                    b = meta[bname]
                    if signed and b >= bhalf:
                        b -= bfull
                else:
                    b = bval
                meta[dst] = 1 if cmp(a, b) else 0

            return run_cmp

        if isinstance(ins, Lookup):
            tab = tables.get(ins.table)
            if tab is None:
                raise UndeclaredField(f"table {ins.table!r} is not declared")
            key = ins.key
            kw = self._width_of(key)
            dst = ins.dst
            dmask = (1 << self._width_of(dst)) - 1
            default = tab.default & dmask
            if tab.kind == "exact":
                exact = {e.value: e.data & dmask for e in tab.entries}
                return lambda meta, regs, ctl: meta.__setitem__(
                    dst, exact.get(meta[key], default))
            # longest-prefix match: try longer prefixes first
            lpm = tuple(
                (kw - e.prefix_len, e.value >> (kw - e.prefix_len), e.data & dmask)
                for e in sorted(tab.entries, key=lambda e: -(e.prefix_len or 0))
            )

            def run_lpm(meta, regs, ctl):
                k = meta[key]
                for shift, prefix, data in lpm:
                    if k >> shift == prefix:
                        meta[dst] = data
                        return
                meta[dst] = default

            return run_lpm

        if isinstance(ins, (RegRead, RegWrite, RegAdd, RegCondWrite, RegShiftAdd)):
            return self._compile_stateful(ins)

        if isinstance(ins, EmitResult):
            src = ins.src
            nbytes = (self._width_of(src) + 7) // 8

            def run_emit(meta, regs, ctl):
                ctl.verdict = Verdict.RESULT
                ctl.result = meta[src].to_bytes(nbytes, "big")

            return run_emit

        if isinstance(ins, MarkDrop):
            def run_drop(meta, regs, ctl):
                ctl.verdict = Verdict.DROP

            return run_drop

        raise TypeError(f"unknown instruction {type(ins).__name__}")

    def _compile_stateful(self, ins):
        arr = ins.register_array()
        if arr not in self.registers:
            raise UndeclaredField(f"register array {arr!r} is not declared")
        width, signed = self._reg_meta[arr]
        wmask = (1 << width) - 1
        half = 1 << (width - 1)
        idx_f = ins.index
        self._width_of(idx_f)

        def fetch_src(src):
            is_f, pay = self._operand(src)
            if is_f:
                name, sw = pay
                if signed:
                    sh, sf = 1 << (sw - 1), 1 << sw
                    return lambda meta: (meta[name] - sf
                                         if meta[name] >= sh else meta[name])
                return lambda meta: meta[name]
            val = _decode(pay & wmask, width) if signed else pay & wmask
            return lambda meta: val

        def guard(meta, regs, ctl):
            idx = meta[idx_f]
            store = regs[arr]
            if idx >= len(store):
                raise RegisterIndexOutOfBounds(
                    f"{arr}[{idx}] out of range (length {len(store)})")
            if arr in ctl.accessed:
                raise RegisterAccessConflict(
                    f"register array {arr!r} accessed twice by one packet")
            ctl.accessed.add(arr)
            return idx, store

        def put(meta, name, value):
            meta[name] = value & wmask

        if isinstance(ins, RegRead):
            dst = ins.dst
            dmask = (1 << self._width_of(dst)) - 1

            def run(meta, regs, ctl):
                idx, store = guard(meta, regs, ctl)
                meta[dst] = store[idx] & dmask

            return run

        if isinstance(ins, RegWrite):
            get = fetch_src(ins.src)
            dst_old = ins.dst_old
            if dst_old is not None:
                self._width_of(dst_old)

            def run(meta, regs, ctl):
                idx, store = guard(meta, regs, ctl)
                if dst_old is not None:
                    put(meta, dst_old, store[idx])
                store[idx] = get(meta)

            return run

        if isinstance(ins, RegAdd):
            get = fetch_src(ins.src)
            dst_old, dst_new, dst_ovf = ins.dst_old, ins.dst_new, ins.dst_overflow
            for f in (dst_old, dst_new, dst_ovf):
                if f is not None:
                    self._width_of(f)

            def run(meta, regs, ctl):
                idx, store = guard(meta, regs, ctl)
                old = store[idx]
                total = old + get(meta)
                ok = -half < total < half
                if ok:
                    store[idx] = total
                if dst_old is not None:
                    put(meta, dst_old, old)
                if dst_new is not None:
                    put(meta, dst_new, store[idx])
                if dst_ovf is not None:
                    meta[dst_ovf] = 0 if ok else 1

            return run

        if isinstance(ins, RegCondWrite):
            get = fetch_src(ins.src)
            cond, gap = ins.cond, ins.gap
            dst_old, dst_flag = ins.dst_old, ins.dst_flag
            for f in (dst_old, dst_flag):
                if f is not None:
                    self._width_of(f)

            def run(meta, regs, ctl):
                idx, store = guard(meta, regs, ctl)
                old = store[idx]
                src = get(meta)
                if cond == "greater":
                    wrote = src > old
                else:  # zero_or_gap_gt
                    wrote = old == 0 or src > old + gap
                if wrote:
                    store[idx] = src
                if dst_old is not None:
                    put(meta, dst_old, old)
                if dst_flag is not None:
                    meta[dst_flag] = 1 if wrote else 0

            return run

        if isinstance(ins, RegShiftAdd):
            get = fetch_src(ins.src)
            dist_f = ins.dist
            self._width_of(dist_f)
            sat = width - 1
            dst_old, dst_new, dst_ovf = ins.dst_old, ins.dst_new, ins.dst_overflow
            for f in (dst_old, dst_new, dst_ovf):
                if f is not None:
                    self._width_of(f)

            def run(meta, regs, ctl):
                idx, store = guard(meta, regs, ctl)
                old = store[idx]
                eff = min(meta[dist_f], sat)
                total = (old >> eff) + get(meta)
                ok = -half < total < half
                if ok:
                    store[idx] = total
                if dst_old is not None:
                    put(meta, dst_old, old)
                if dst_new is not None:
                    put(meta, dst_new, store[idx])
                if dst_ovf is not None:
                    meta[dst_ovf] = 0 if ok else 1

            return run

        raise TypeError(type(ins).__name__)


def execute(
    program: StageProgram,
    metadata: dict[str, int],
    registers: dict[str, list[int]] | None = None,
    profile: AluProfile = EXTENDED,
    trace: list[StageSnapshot] | None = None,
) -> tuple[PacketContext, dict[str, list[int]]]:
    """Pure single-packet run: compile, seed registers, process, return state.

    Convenient for tests and one-shot traces. Compiles the program on every
    call; drive a Machine directly when looping over many packets.
    """
    machine = Machine(program, profile)
    if registers is not None:
        for name, values in registers.items():
            arr = machine.registers.get(name)
            if arr is None:
                raise UndeclaredField(f"register array {name!r} is not declared")
            if len(values) != len(arr):
                raise ValueError(
                    f"register array {name!r} expects {len(arr)} values")
            width, signed = machine._reg_meta[name]
            for i, v in enumerate(values):
                v &= (1 << width) - 1
                arr[i] = _decode(v, width) if signed else v
    pkt = machine.process(metadata, trace=trace)
    return pkt, machine.registers
