"""Switch-resident floating-point accumulator: representation and operations.

A value lives in two decoupled registers: an unsigned biased exponent (n bits)
and a signed two's-complement mantissa held in an R-bit register, R wider than
the format's significand. The arithmetic meaning of a state is

    mantissa * 2**(exponent - bias - m - G)

where m is the format mantissa width and G the number of guard bits kept below
the significand. The extra high-order room

    H = R - (m + 1) - 1 - G

is headroom: sums may grow into it without renormalizing (renormalization is
delayed until readout and never written back). Two add variants exist:

* exact: the stored mantissa is shifted right when the incoming exponent is
  larger (a stateful read-shift-add-write), so no information about large
  incoming values is lost; signed overflow of the R-bit add rejects the
  operation and reports HeadroomOverflow.
* approximate: only the incoming metadata mantissa is ever shifted. An
  incoming exponent at most H above the stored one is absorbed by a lossless
  left shift; a larger gap (ratio above 2**H) overwrites the stored value
  entirely, reporting the discarded amount. A slot whose stored exponent is 0
  is empty and always overwritten.

All right shifts are arithmetic (two's-complement floor), which is what gives
the truncating variant its round-toward-negative-infinity character. Shift
distances saturate at R-1: a fully shifted-out operand leaves 0 (positive) or
-1 (negative; the residue is reported as rounding loss).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

from .formats import (
    EncodeStatus,
    FP32,
    FpClass,
    FpFormat,
    NonFiniteInput,
    RoundingMode,
    decode,
    encode,
)

__all__ = [
    "Variant",
    "CoreConfig",
    "SwitchValue",
    "ZERO_STATE",
    "EventKind",
    "AddEvent",
    "AddOutcome",
    "to_switch_value",
    "value_of",
    "add_exact",
    "add_approx",
    "add",
    "LpmEntry",
    "LpmTable",
    "build_lpm_table",
    "clz_lpm",
    "Renormalized",
    "renormalize",
    "readout",
    "check_overflow_capacity",
]


class Variant(enum.Enum):
    EXACT = "exact"
    APPROX = "approx"


@dataclass(frozen=True)
class CoreConfig:
    """Accumulator parameters.

    register_width (R) is restricted to 16 or 32, the widths for which the
    leading-zero LPM table is defined. Invariants: R >= m + 2 + G and the
    derived headroom H = R - (m+1) - 1 - G must be at least 1.
    """

    fmt: FpFormat = FP32
    register_width: int = 32
    guard_bits: int = 0
    variant: Variant = Variant.EXACT

    def __post_init__(self) -> None:
        if self.register_width not in (16, 32):
            raise ValueError("register_width must be 16 or 32")
        if not 0 <= self.guard_bits <= 3:
            raise ValueError("guard_bits must be in 0..3")
        if self.register_width < self.fmt.mantissa_bits + 2 + self.guard_bits:
            raise ValueError("register too narrow for significand plus sign")
        if self.headroom < 1:
            raise ValueError("configuration leaves no headroom")

    @property
    def headroom(self) -> int:
        return (
            self.register_width
            - (self.fmt.mantissa_bits + 1)
            - 1
            - self.guard_bits
        )

    @property
    def canonical_clz(self) -> int:
        """Leading-zero count of a freshly loaded (canonical) magnitude."""
        return self.register_width - 1 - (self.fmt.mantissa_bits + self.guard_bits)


@dataclass(frozen=True)
class SwitchValue:
    """One accumulator state: biased exponent register + signed mantissa."""

    exponent: int
    mantissa: int

    def is_zero(self) -> bool:
        return self.mantissa == 0


ZERO_STATE = SwitchValue(0, 0)


class EventKind(enum.Enum):
    ROUNDING_LOSS = "rounding_loss"
    OVERWRITE = "overwrite"
    HEADROOM_OVERFLOW = "headroom_overflow"
    # readout-only kinds, used in event logs (never produced by add()):
    EXPONENT_OVERFLOW = "exponent_overflow"
    EXPONENT_UNDERFLOW = "exponent_underflow"


@dataclass(frozen=True)
class AddEvent:
    """Numeric event raised by one add.

    bits_lost is set for ROUNDING_LOSS (count of discarded one-bits);
    discarded is set for OVERWRITE (exact prior value as a rational).
    """

    kind: EventKind
    bits_lost: int = 0
    discarded: Fraction = Fraction(0)


@dataclass(frozen=True)
class AddOutcome:
    state: SwitchValue
    event: AddEvent | None


def _check_state(state: SwitchValue, cfg: CoreConfig) -> None:
    limit = 1 << (cfg.register_width - 1)
    if not -limit < state.mantissa < limit:
        raise ValueError("mantissa out of register range")
    if not 0 <= state.exponent <= cfg.fmt.exponent_mask:
        raise ValueError("exponent out of register range")


def to_switch_value(bits: int, cfg: CoreConfig) -> SwitchValue:
    """Load a packed word into register form.

    Zero loads as (0, 0). Subnormals are flushed to zero (callers that need
    to warn can classify via formats.decode first). NaN/Inf are rejected:
    they have no register representation.
    """
    d = decode(bits, cfg.fmt)
    if not d.is_finite:
        raise NonFiniteInput(f"cannot load {d.fp_class.value} word 0x{bits:x}")
    if d.fp_class is not FpClass.NORMAL:
        return ZERO_STATE
    mant = d.significand << cfg.guard_bits
    return SwitchValue(d.biased_exponent, -mant if d.sign else mant)


def value_of(state: SwitchValue, cfg: CoreConfig) -> Fraction:
    """Exact arithmetic value of a state."""
    scale = state.exponent - cfg.fmt.bias - cfg.fmt.mantissa_bits - cfg.guard_bits
    m = Fraction(state.mantissa)
    return m * (1 << scale) if scale >= 0 else m / (1 << -scale)


def _floor_shift(x: int, dist: int, width: int) -> tuple[int, int]:
    """Arithmetic right shift with saturation at width-1.

    Returns (shifted value, discarded two's-complement bit pattern). The
    pattern is the low ``dist`` bits of x as stored in the register, so its
    popcount is the number of discarded one-bits.
    """
    eff = min(dist, width - 1)
    return x >> eff, x & ((1 << eff) - 1)


def _fits(x: int, width: int) -> bool:
    return -(1 << (width - 1)) < x < (1 << (width - 1))


def add_exact(state: SwitchValue, incoming: SwitchValue, cfg: CoreConfig) -> AddOutcome:
    """Exact-variant add: align by shifting whichever side is smaller.

    d <= 0: the incoming mantissa is shifted right by -d and added at the
    stored exponent. d > 0: the stored mantissa is shifted right by d (the
    stateful read-shift-add-write) and the result keeps the incoming
    exponent. A signed R-bit overflow rejects the add: the state is returned
    unchanged with a HEADROOM_OVERFLOW event.
    """
    _check_state(state, cfg)
    _check_state(incoming, cfg)
    r = cfg.register_width
    d = incoming.exponent - state.exponent
    if d <= 0:
        shifted, dropped = _floor_shift(incoming.mantissa, -d, r)
        total = state.mantissa + shifted
        new_exp = state.exponent
    else:
        shifted, dropped = _floor_shift(state.mantissa, d, r)
        total = shifted + incoming.mantissa
        new_exp = incoming.exponent
    if not _fits(total, r):
        return AddOutcome(state, AddEvent(EventKind.HEADROOM_OVERFLOW))
    event = None
    lost = bin(dropped).count("1")
    if lost:
        event = AddEvent(EventKind.ROUNDING_LOSS, bits_lost=lost)
    return AddOutcome(SwitchValue(new_exp, total), event)


def add_approx(state: SwitchValue, incoming: SwitchValue, cfg: CoreConfig) -> AddOutcome:
    """Approximate-variant add: only the incoming metadata value shifts.

    Empty slot (stored exponent 0) or exponent gap d > H: the state is
    replaced by the incoming value; a nonzero prior value is reported as
    OVERWRITE with its exact discarded amount. 0 < d <= H: the incoming
    mantissa is shifted left d (lossless) and added at the stored exponent.
    d <= 0: same right-shift path as the exact variant.
    """
    _check_state(state, cfg)
    _check_state(incoming, cfg)
    r = cfg.register_width
    d = incoming.exponent - state.exponent
    if state.exponent == 0 or d > cfg.headroom:
        prior = value_of(state, cfg)
        event = None
        if prior != 0:
            event = AddEvent(EventKind.OVERWRITE, discarded=prior)
        return AddOutcome(SwitchValue(incoming.exponent, incoming.mantissa), event)
    if d > 0:
        shifted = incoming.mantissa << d
        dropped = 0
        if not _fits(shifted, r):
            return AddOutcome(state, AddEvent(EventKind.HEADROOM_OVERFLOW))
    else:
        shifted, dropped = _floor_shift(incoming.mantissa, -d, r)
    total = state.mantissa + shifted
    if not _fits(total, r):
        return AddOutcome(state, AddEvent(EventKind.HEADROOM_OVERFLOW))
    event = None
    lost = bin(dropped).count("1")
    if lost:
        event = AddEvent(EventKind.ROUNDING_LOSS, bits_lost=lost)
    return AddOutcome(SwitchValue(state.exponent, total), event)


def add(state: SwitchValue, incoming: SwitchValue, cfg: CoreConfig) -> AddOutcome:
    """Dispatch on cfg.variant."""
    if cfg.variant is Variant.EXACT:
        return add_exact(state, incoming, cfg)
    return add_approx(state, incoming, cfg)


# ---------------------------------------------------------------------------
# leading-zero count as a longest-prefix-match table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LpmEntry:
    """One ternary entry: match the top prefix_len bits of the key."""

    prefix: int          # R-bit pattern; only bit (R - prefix_len) may be set
    prefix_len: int
    leading_zeros: int   # action data


@dataclass(frozen=True)
class LpmTable:
    width: int
    entries: tuple[LpmEntry, ...]
    default: int         # miss result: key 0 has all bits zero


def build_lpm_table(width: int) -> LpmTable:
    """Entry i (1-based) has only bit (width - i) set with prefix length i.

    A key with exactly L leading zeros matches entry L+1 and nothing longer,
    so the longest-prefix rule reads off L directly.
    """
    if width not in (16, 32):
        raise ValueError("LPM leading-zero table defined for width 16 or 32")
    entries = tuple(
        LpmEntry(prefix=1 << (width - i), prefix_len=i, leading_zeros=i - 1)
        for i in range(1, width + 1)
    )
    return LpmTable(width=width, entries=entries, default=width)


def clz_lpm(magnitude: int, table: LpmTable) -> int:
    """Longest-prefix lookup of an unsigned magnitude; 0 maps to width.

    This walks the table with real prefix matching rather than computing
    bit_length(), so tests can hold it against an independent software count.
    """
    if not 0 <= magnitude < (1 << table.width):
        raise ValueError("magnitude out of table key range")
    best_len = -1
    best = table.default
    for e in table.entries:
        shift = table.width - e.prefix_len
        if (magnitude >> shift) == (e.prefix >> shift) and e.prefix_len > best_len:
            best_len = e.prefix_len
            best = e.leading_zeros
    return best


# ---------------------------------------------------------------------------
# readout: delayed renormalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Renormalized:
    sign: int
    unbiased_exponent: int
    significand: int      # (m+1)-bit with leading one, or 0


def renormalize(
    state: SwitchValue,
    cfg: CoreConfig,
    rounding: RoundingMode = RoundingMode.TOWARD_NEG_INF,
    table: LpmTable | None = None,
) -> Renormalized:
    """Bring a (possibly denormalized) state to sign/exponent/significand.

    The leading-zero count of the magnitude selects the shift distance; the
    shift itself is applied to the signed two's-complement mantissa, so
    TOWARD_NEG_INF floors the value regardless of sign (readout never exceeds
    the exact sum). NEAREST_EVEN resolves the discarded bits (headroom spill
    plus guard bits) in one rounding and requires guard_bits >= 1. A result
    magnitude that carries to 2**(m+1) is folded back with one more exact
    shift and an exponent bump.
    """
    if rounding is RoundingMode.NEAREST_EVEN and cfg.guard_bits == 0:
        raise ValueError("nearest-even readout requires at least one guard bit")
    if state.mantissa == 0:
        return Renormalized(0, 0, 0)
    _check_state(state, cfg)
    m = cfg.fmt.mantissa_bits
    if table is None:
        table = build_lpm_table(cfg.register_width)
    sign = 1 if state.mantissa < 0 else 0
    magnitude = abs(state.mantissa)
    lz = clz_lpm(magnitude, table)
    # total right shift from register position to an (m+1)-bit significand;
    # independent of G because the register already holds G extra low bits
    t = (cfg.register_width - 1 - m) - lz
    if t <= 0:
        q = state.mantissa << -t
    elif rounding is RoundingMode.TOWARD_NEG_INF:
        q = state.mantissa >> t
    else:
        q, rem = divmod(state.mantissa, 1 << t)
        half = 1 << (t - 1)
        if rem > half or (rem == half and q & 1):
            q += 1
    exponent = state.exponent - cfg.fmt.bias - cfg.guard_bits + t
    if abs(q) == 1 << (m + 1):
        q >>= 1              # exact: the carried pattern has a zero low bit
        exponent += 1
    return Renormalized(sign, exponent, abs(q))


def readout(
    state: SwitchValue,
    cfg: CoreConfig,
    rounding: RoundingMode = RoundingMode.TOWARD_NEG_INF,
    table: LpmTable | None = None,
) -> tuple[int, EncodeStatus]:
    """Renormalize and pack; exponent range events are forwarded, not raised."""
    rn = renormalize(state, cfg, rounding, table)
    return encode(rn.sign, rn.unbiased_exponent, rn.significand, cfg.fmt, rounding)


def check_overflow_capacity(cfg: CoreConfig, n_ops: int) -> bool:
    """True iff n_ops same-exponent max-significand adds cannot overflow.

    Worst case is every operand carrying the all-ones significand at one
    exponent: the accumulated magnitude is n_ops * (2**(m+1) - 1) * 2**G and
    must stay below 2**(R-1).
    """
    if n_ops < 0:
        raise ValueError("n_ops must be non-negative")
    worst = n_ops * (((1 << (cfg.fmt.mantissa_bits + 1)) - 1) << cfg.guard_bits)
    return worst < (1 << (cfg.register_width - 1))
