"""Reference stage programs implementing the two accumulator variants.

builtin_program() lays the accumulator out on nine stages:

    0 extract      split the packed word into sign / exponent / fraction
    1 significand  implied one, guard shift, two's-complement mantissa
    2 exponent     stateful exponent register (max / overwrite policy)
    3 align        exponent gap to shift distances, incoming alignment
    4 accumulate   stateful mantissa register (add / shift-add / overwrite)
    5 sign-split   result sign and magnitude            (egress)
    6 normalize    leading-zero lookup, shift to m+1 bits (egress)
    7 adjust       output exponent and range flags       (egress)
    8 assemble     pack the word, emit on read           (egress)

Packets carry an opcode: OP_ADD folds `value` into slot state, OP_READ
renormalizes the slot and emits the packed word as the packet result. Every
packet flows through the egress stages, so a trace of an add shows the
would-be readout evolving.

The exact variant needs the extended ALU profile (variable-distance shifts
and the stateful read-shift-add-write); requesting it on baseline raises
ProfileMismatch. The approximate variant builds on baseline by expanding
every variable shift into per-distance cases predicated on the computed
distance, which inflates stage instruction counts past typical slot budgets;
validator.check_resources reports that pressure.

Event flags (overflow, overwrite, discarded bit patterns) are left in packet
metadata; event_from_metadata() folds them back into the same AddEvent the
functional core reports, which is what the differential tests compare.
"""

from __future__ import annotations

from ..core import (
    AddEvent,
    CoreConfig,
    EventKind,
    SwitchValue,
    Variant,
    build_lpm_table,
    value_of,
)
from ..formats import RoundingMode
from .machine import PacketContext
from .program import (
    AluProfile,
    Arith,
    Assign,
    Bit,
    Capability,
    Compare,
    EmitResult,
    ExtractBits,
    EXTENDED,
    Instruction,
    Lookup,
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
)

__all__ = [
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

OP_ADD = 1
OP_READ = 2

EXP_ARRAY = "exp_state"
MANT_ARRAY = "mant_state"


class ProfileMismatch(ValueError):
    """The requested variant cannot be expressed under the profile."""


def _eq(field: str, value: int) -> Predicate:
    return Predicate(field, "eq", value)


_ON_ADD = _eq("op", OP_ADD)
_ON_READ = _eq("op", OP_READ)


def _clz_table(width: int) -> Table:
    src = build_lpm_table(width)
    return Table(
        name="clz",
        kind="lpm",
        key="mag",
        entries=tuple(
            TableEntry(e.prefix, e.leading_zeros, e.prefix_len) for e in src.entries
        ),
        default=src.default,
    )


def builtin_program(
    variant: Variant,
    cfg: CoreConfig,
    n_slots: int = 1,
    profile: AluProfile = EXTENDED,
    rounding: RoundingMode = RoundingMode.TOWARD_NEG_INF,
) -> StageProgram:
    """Build the accumulator program for `variant` under `profile`.

    The returned program validates cleanly against `profile`. Register
    arrays hold `n_slots` independent accumulator slots indexed by the
    `slot` input field.
    """
    if rounding is RoundingMode.NEAREST_EVEN and cfg.guard_bits == 0:
        raise ValueError("nearest-even readout requires at least one guard bit")
    var_shift = profile.supports(Capability.VARIABLE_SHIFT)
    if variant is Variant.EXACT and not profile.supports(
        Capability.STATEFUL_READ_SHIFT_ADD_WRITE
    ):
        raise ProfileMismatch(
            "exact accumulation shifts the stored mantissa in place and needs "
            f"{Capability.STATEFUL_READ_SHIFT_ADD_WRITE.value}; profile "
            f"{profile.name!r} lacks it"
        )
    if variant is Variant.EXACT and not var_shift:
        raise ProfileMismatch(
            f"exact accumulation needs {Capability.VARIABLE_SHIFT.value}; "
            f"profile {profile.name!r} lacks it"
        )
    if n_slots < 1:
        raise ValueError("n_slots must be positive")

    fmt = cfg.fmt
    n, m, w = fmt.exponent_bits, fmt.mantissa_bits, fmt.total_bits
    r = cfg.register_width
    g = cfg.guard_bits
    h = cfg.headroom
    nearest = rounding is RoundingMode.NEAREST_EVEN
    exact = variant is Variant.EXACT

    fields: list[tuple[str, int]] = [
        ("op", 2), ("slot", 32), ("value", w),
        ("sign", 1), ("exp_in", n), ("frac_in", m), ("is_zero_in", 1),
        ("mant_mag", r), ("mant_in", r),
        ("exp_old", n), ("exp_cur", n), ("d", 16), ("d_neg", 1), ("d_pos", 1),
        ("dist_r", 8), ("align_mask", r), ("align_disc", r),
        ("mant_old", r), ("ovf", 1), ("mant_cur", r),
        ("res_zero", 1), ("res_sign", 1), ("mag", r), ("lz", 8),
        ("t", 16), ("t_pos", 1), ("t_r", 8), ("neg_t", 8),
        ("q", r), ("fix_p", 1), ("fix_n", 1), ("fix", 1), ("qm", r),
        ("out_e", 16), ("e_over", 1), ("e_under", 1),
        ("frac_out", r), ("e_lo", n), ("e_shift", w), ("word", w),
    ]
    if exact:
        fields += [("rsaw_dist", 8), ("state_mask", r), ("state_disc", r)]
    else:
        fields += [("dist_l", 8), ("ovw", 1)]
    if nearest:
        fields += [
            ("rnd_mask", r), ("rem", r), ("t_m1", 8), ("half", r),
            ("gt_half", 1), ("eq_half", 1), ("q_odd", 1), ("tie", 1), ("rnd", 1),
        ]

    s0 = Stage(0, "extract", instructions=(
        ExtractBits("sign", "value", w - 1, 1),
        ExtractBits("exp_in", "value", m, n),
        ExtractBits("frac_in", "value", 0, m),
        Compare("is_zero_in", "eq", "exp_in", 0),
    ))

    s1_ins: list[Instruction] = [Bit("mant_mag", "or", "frac_in", 1 << m)]
    if g:
        s1_ins.append(ShiftImm("mant_mag", "mant_mag", g, "l"))
    s1_ins += [
        Assign("mant_mag", 0, preds=(_eq("is_zero_in", 1),)),
        Assign("mant_in", "mant_mag", preds=(_eq("sign", 0),)),
        Arith("mant_in", "sub", 0, "mant_mag", preds=(_eq("sign", 1),)),
    ]
    s1 = Stage(1, "significand", instructions=tuple(s1_ins))

    if exact:
        exp_write: Instruction = RegCondWrite(
            EXP_ARRAY, "slot", "exp_in", "greater",
            dst_old="exp_old", preds=(_ON_ADD,),
        )
    else:
        exp_write = RegCondWrite(
            EXP_ARRAY, "slot", "exp_in", "zero_or_gap_gt", gap=h,
            dst_old="exp_old", dst_flag="ovw", preds=(_ON_ADD,),
        )
    s2 = Stage(
        2, "exponent",
        registers=(RegisterArray(EXP_ARRAY, n, n_slots),),
        instructions=(
            exp_write,
            RegRead(EXP_ARRAY, "slot", "exp_old", preds=(_ON_READ,)),
            Arith("d", "sub", "exp_in", "exp_old", preds=(_ON_ADD,)),
        ),
    )

    # stage 3: turn the signed exponent gap into shift distances and align
    # the incoming mantissa; the bits it loses are captured first.
    a = _ON_ADD
    s3_ins: list[Instruction] = [
        Compare("d_neg", "lt", "d", 0, signed=True, preds=(a,)),
        Compare("d_pos", "gt", "d", 0, signed=True, preds=(a,)),
        Arith("dist_r", "sub", 0, "d", preds=(a, _eq("d_neg", 1))),
        Assign("dist_r", 0, preds=(a, _eq("d_neg", 0))),
    ]
    if exact:
        s3_ins += [
            Assign("rsaw_dist", "d", preds=(a, _eq("d_pos", 1))),
            Assign("rsaw_dist", 0, preds=(a, _eq("d_pos", 0))),
        ]
    else:
        s3_ins += [
            Assign("dist_l", "d", preds=(a, _eq("d_pos", 1))),
            Assign("dist_l", 0, preds=(a, _eq("d_pos", 0))),
            # an overwrite ignores alignment entirely
            Assign("dist_l", 0, preds=(a, _eq("ovw", 1))),
        ]
    if var_shift:
        s3_ins += [
            ShiftVar("align_mask", 1, "dist_r", "l", preds=(a,)),
            Arith("align_mask", "sub", "align_mask", 1, preds=(a,)),
            Bit("align_disc", "and", "mant_in", "align_mask", preds=(a,)),
            ShiftVar("mant_in", "mant_in", "dist_r", "r", signed=True, preds=(a,)),
        ]
        if not exact:
            s3_ins.append(
                ShiftVar("mant_in", "mant_in", "dist_l", "l", preds=(a,)))
    else:
        # per-distance cases; distances >= r-1 all behave like r-1
        for k in range(1, r - 1):
            case = (a, _eq("dist_r", k))
            s3_ins += [
                Bit("align_disc", "and", "mant_in", (1 << k) - 1, preds=case),
                ShiftImm("mant_in", "mant_in", k, "r", signed=True, preds=case),
            ]
        tail = (a, Predicate("dist_r", "ge", r - 1))
        s3_ins += [
            Bit("align_disc", "and", "mant_in", (1 << (r - 1)) - 1, preds=tail),
            ShiftImm("mant_in", "mant_in", r - 1, "r", signed=True, preds=tail),
        ]
        for k in range(1, h + 1):
            s3_ins.append(ShiftImm("mant_in", "mant_in", k, "l",
                                   preds=(a, _eq("dist_l", k))))
    # the exponent the slot holds after this packet, so the egress stages
    # renormalize against post-op state (truthful in-flight traces)
    s3_ins.append(Assign("exp_cur", "exp_old"))
    if exact:
        s3_ins.append(Assign("exp_cur", "exp_in", preds=(a, _eq("d_pos", 1))))
    else:
        s3_ins.append(Assign("exp_cur", "exp_in", preds=(a, _eq("ovw", 1))))
    s3 = Stage(3, "align", instructions=tuple(s3_ins))

    if exact:
        s4_ins: tuple[Instruction, ...] = (
            RegShiftAdd(
                MANT_ARRAY, "slot", "rsaw_dist", "mant_in",
                dst_old="mant_old", dst_new="mant_cur", dst_overflow="ovf",
                preds=(a,),
            ),
            ShiftVar("state_mask", 1, "rsaw_dist", "l", preds=(a,)),
            Arith("state_mask", "sub", "state_mask", 1, preds=(a,)),
            Bit("state_disc", "and", "mant_old", "state_mask", preds=(a,)),
            RegRead(MANT_ARRAY, "slot", "mant_cur", preds=(_ON_READ,)),
        )
    else:
        s4_ins = (
            RegAdd(
                MANT_ARRAY, "slot", "mant_in",
                dst_old="mant_old", dst_new="mant_cur", dst_overflow="ovf",
                preds=(a, _eq("ovw", 0)),
            ),
            RegWrite(MANT_ARRAY, "slot", "mant_in", dst_old="mant_old",
                     preds=(a, _eq("ovw", 1))),
            Assign("mant_cur", "mant_in", preds=(a, _eq("ovw", 1))),
            RegRead(MANT_ARRAY, "slot", "mant_cur", preds=(_ON_READ,)),
        )
    s4 = Stage(
        4, "accumulate",
        registers=(RegisterArray(MANT_ARRAY, r, n_slots, signed=True),),
        instructions=s4_ins,
    )

    s5 = Stage(5, "sign-split", egress=True, instructions=(
        Compare("res_zero", "eq", "mant_cur", 0),
        Compare("res_sign", "lt", "mant_cur", 0, signed=True),
        Assign("mag", "mant_cur", preds=(_eq("res_sign", 0),)),
        Arith("mag", "sub", 0, "mant_cur", preds=(_eq("res_sign", 1),)),
    ))

    # stage 6: renormalize. t = (r-1-m) - lz is the remaining right shift;
    # negative t means the magnitude sits low and shifts left losslessly.
    t_max = r - 1 - m
    s6_ins: list[Instruction] = [
        Lookup("clz", "mag", "lz"),
        Arith("t", "sub", t_max, "lz"),
        Compare("t_pos", "gt", "t", 0, signed=True),
        Assign("t_r", "t", preds=(_eq("t_pos", 1),)),
        Assign("t_r", 0, preds=(_eq("t_pos", 0),)),
        Arith("neg_t", "sub", 0, "t", preds=(_eq("t_pos", 0),)),
        Assign("neg_t", 0, preds=(_eq("t_pos", 1),)),
    ]
    tp = _eq("t_pos", 1)
    tz = _eq("t_pos", 0)
    if var_shift:
        s6_ins += [
            ShiftVar("q", "mant_cur", "t_r", "r", signed=True, preds=(tp,)),
            ShiftVar("q", "mant_cur", "neg_t", "l", preds=(tz,)),
        ]
        if nearest:
            s6_ins += [
                ShiftVar("rnd_mask", 1, "t_r", "l", preds=(tp,)),
                Arith("rnd_mask", "sub", "rnd_mask", 1, preds=(tp,)),
                Bit("rem", "and", "mant_cur", "rnd_mask", preds=(tp,)),
                Arith("t_m1", "sub", "t_r", 1, preds=(tp,)),
                ShiftVar("half", 1, "t_m1", "l", preds=(tp,)),
            ]
    else:
        for k in range(1, t_max + 1):
            case = (tp, _eq("t_r", k))
            s6_ins.append(
                ShiftImm("q", "mant_cur", k, "r", signed=True, preds=case))
            if nearest:
                s6_ins += [
                    Bit("rem", "and", "mant_cur", (1 << k) - 1, preds=case),
                    Assign("half", 1 << (k - 1), preds=case),
                ]
        s6_ins.append(Assign("q", "mant_cur", preds=(tz, _eq("neg_t", 0))))
        for k in range(1, m + 2):
            s6_ins.append(ShiftImm("q", "mant_cur", k, "l",
                                   preds=(tz, _eq("neg_t", k))))
    if nearest:
        s6_ins += [
            Compare("gt_half", "gt", "rem", "half", preds=(tp,)),
            Compare("eq_half", "eq", "rem", "half", preds=(tp,)),
            Bit("q_odd", "and", "q", 1, preds=(tp,)),
            Bit("tie", "and", "eq_half", "q_odd", preds=(tp,)),
            Bit("rnd", "or", "gt_half", "tie", preds=(tp,)),
            Arith("q", "add", "q", 1, preds=(tp, _eq("rnd", 1))),
        ]
    s6_ins += [
        # a full (m+1)-bit carry folds back with one exact shift
        Compare("fix_p", "eq", "q", 1 << (m + 1)),
        Compare("fix_n", "eq", "q", (1 << r) - (1 << (m + 1))),
        Bit("fix", "or", "fix_p", "fix_n"),
        ShiftImm("q", "q", 1, "r", signed=True, preds=(_eq("fix", 1),)),
        Arith("out_e", "sub", "t", g),
        Arith("out_e", "add", "out_e", "exp_cur"),
        Arith("out_e", "add", "out_e", "fix"),
    ]
    s6 = Stage(6, "normalize", egress=True,
               tables=(_clz_table(r),), instructions=tuple(s6_ins))

    s7 = Stage(7, "adjust", egress=True, instructions=(
        Assign("qm", "q", preds=(_eq("res_sign", 0),)),
        Arith("qm", "sub", 0, "q", preds=(_eq("res_sign", 1),)),
        Compare("e_over", "ge", "out_e", fmt.exponent_mask, signed=True),
        Compare("e_under", "le", "out_e", 0, signed=True),
        Bit("frac_out", "and", "qm", fmt.mantissa_mask),
        Bit("e_lo", "and", "out_e", fmt.exponent_mask),
    ))

    in_range = (_eq("e_over", 0), _eq("e_under", 0))
    s8 = Stage(8, "assemble", egress=True, instructions=(
        ShiftImm("word", "res_sign", w - 1, "l"),
        ShiftImm("e_shift", "e_lo", m, "l"),
        Bit("word", "or", "word", "e_shift", preds=in_range),
        Bit("word", "or", "word", "frac_out", preds=in_range),
        Bit("word", "or", "word", fmt.exponent_mask << m,
            preds=(_eq("e_over", 1),)),
        Assign("word", 0, preds=(_eq("res_zero", 1),)),
        EmitResult("word", preds=(_ON_READ,)),
    ))

    return StageProgram(
        name=f"builtin-{variant.value}-{fmt.name}-r{r}-g{g}-{rounding.name.lower()}",
        fields=tuple(fields),
        input_fields=("op", "slot", "value"),
        stages=(s0, s1, s2, s3, s4, s5, s6, s7, s8),
    )


# ---------------------------------------------------------------------------
# packet helpers
# ---------------------------------------------------------------------------

def add_packet(word: int, slot: int = 0) -> dict[str, int]:
    """Metadata for a packet folding one packed finite word into `slot`."""
    return {"op": OP_ADD, "slot": slot, "value": word}


def read_packet(slot: int = 0) -> dict[str, int]:
    """Metadata for a packet reading `slot` back as a packed word."""
    return {"op": OP_READ, "slot": slot}


def result_word(pkt: PacketContext) -> int:
    """The emitted result of a read packet as an unsigned word."""
    if pkt.result is None:
        raise ValueError("packet carries no result")
    return int.from_bytes(pkt.result, "big")


def event_from_metadata(meta: dict[str, int], cfg: CoreConfig) -> AddEvent | None:
    """Fold egress metadata flags back into the functional core's event.

    Priority mirrors the core: a rejected add is a HEADROOM_OVERFLOW no
    matter what the shifters discarded; an overwrite of a nonzero slot
    reports the exact replaced value; otherwise any discarded one-bits are
    rounding loss.
    """
    if meta.get("ovf"):
        return AddEvent(EventKind.HEADROOM_OVERFLOW)
    if meta.get("ovw"):
        width = cfg.register_width
        old = meta.get("mant_old", 0)
        if old >= 1 << (width - 1):
            old -= 1 << width
        if old != 0:
            prior = value_of(SwitchValue(meta.get("exp_old", 0), old), cfg)
            return AddEvent(EventKind.OVERWRITE, discarded=prior)
        return None
    lost = bin(meta.get("align_disc", 0)).count("1")
    lost += bin(meta.get("state_disc", 0)).count("1")
    if lost:
        return AddEvent(EventKind.ROUNDING_LOSS, bits_lost=lost)
    return None
