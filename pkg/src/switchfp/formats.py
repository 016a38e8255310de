"""IEEE-style binary floating-point formats and host-boundary conversions.

Everything downstream (the accumulator core, the pipeline builtins, the wire
protocol) works on packed words of a parameterized format: 1 sign bit, ``n``
exponent bits (biased, unsigned), ``m`` mantissa bits with an implied leading
one for normal values. This module owns:

* format descriptions and the FP32 / FP16 / BF16 presets,
* decode/encode between packed words and (sign, exponent, significand) parts,
* the order-preserving integer key used by comparison offload (Top-N,
  group-by extreme), and
* host conversions between decimal text / Python floats and packed words.

Subnormal inputs are decoded faithfully (class retained) but are flushed to
zero when loaded into the accumulator; see ``core.to_switch_value``.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass

__all__ = [
    "FpFormat",
    "FP32",
    "FP16",
    "BF16",
    "FORMATS_BY_NAME",
    "FpClass",
    "DecodedFp",
    "RoundingMode",
    "EncodeStatus",
    "NonFiniteInput",
    "decode",
    "encode",
    "monotone_key",
    "encode_decimal",
    "to_float",
]


class NonFiniteInput(ValueError):
    """Raised when NaN or an infinity reaches an operation that requires a
    finite value (accumulator loads, monotone keys, wire payload checks)."""


@dataclass(frozen=True)
class FpFormat:
    """Bit layout of a packed binary floating-point word.

    Attributes:
        name: short lowercase identifier ("fp32", ...) used by the CLI.
        exponent_bits: width of the biased exponent field (n).
        mantissa_bits: width of the stored fraction field (m).
        bias: exponent bias.
    """

    name: str
    exponent_bits: int
    mantissa_bits: int
    bias: int

    def __post_init__(self) -> None:
        if self.exponent_bits < 2 or self.mantissa_bits < 1:
            raise ValueError("degenerate format")

    @property
    def total_bits(self) -> int:
        return 1 + self.exponent_bits + self.mantissa_bits

    @property
    def exponent_mask(self) -> int:
        return (1 << self.exponent_bits) - 1

    @property
    def mantissa_mask(self) -> int:
        return (1 << self.mantissa_bits) - 1

    @property
    def sign_mask(self) -> int:
        return 1 << (self.total_bits - 1)

    @property
    def word_mask(self) -> int:
        return (1 << self.total_bits) - 1

    @property
    def max_unbiased_exponent(self) -> int:
        # largest normal exponent: all-ones biased field is reserved
        return self.exponent_mask - 1 - self.bias

    @property
    def min_unbiased_exponent(self) -> int:
        return 1 - self.bias


FP32 = FpFormat("fp32", exponent_bits=8, mantissa_bits=23, bias=127)
FP16 = FpFormat("fp16", exponent_bits=5, mantissa_bits=10, bias=15)
BF16 = FpFormat("bf16", exponent_bits=8, mantissa_bits=7, bias=127)

FORMATS_BY_NAME: dict[str, FpFormat] = {f.name: f for f in (FP32, FP16, BF16)}


class FpClass(enum.Enum):
    ZERO = "zero"
    NORMAL = "normal"
    SUBNORMAL = "subnormal"
    INF = "inf"
    NAN = "nan"


class RoundingMode(enum.Enum):
    """Readout rounding behavior.

    TOWARD_NEG_INF is the truncating mode implied by two's-complement
    arithmetic shifts with no guard bits; it is the only mode valid at G=0.
    NEAREST_EVEN requires at least one guard bit and applies only at readout
    (in-pipeline adds always truncate).
    """

    TOWARD_NEG_INF = "toward_neg_inf"
    NEAREST_EVEN = "nearest_even"


class EncodeStatus(enum.Enum):
    OK = "ok"
    OVERFLOW = "overflow"     # exponent above format max: word is +/-Inf
    UNDERFLOW = "underflow"   # exponent below format min: word flushed to +/-0


@dataclass(frozen=True)
class DecodedFp:
    """Unpacked FP word.

    ``significand`` includes the implied leading one for NORMAL values
    (an (m+1)-bit integer with bit m set); for SUBNORMAL it is the raw
    fraction, for ZERO/INF it is 0, and for NAN it is the fraction payload.
    ``biased_exponent`` is the raw field value.
    """

    sign: int                 # 0 positive, 1 negative
    biased_exponent: int
    significand: int
    fp_class: FpClass

    @property
    def is_finite(self) -> bool:
        return self.fp_class in (FpClass.ZERO, FpClass.NORMAL, FpClass.SUBNORMAL)


def decode(bits: int, fmt: FpFormat) -> DecodedFp:
    """Unpack a word into sign/exponent/significand and classify it."""
    if not 0 <= bits <= fmt.word_mask:
        raise ValueError(f"word 0x{bits:x} out of range for {fmt.name}")
    sign = (bits >> (fmt.total_bits - 1)) & 1
    exp = (bits >> fmt.mantissa_bits) & fmt.exponent_mask
    frac = bits & fmt.mantissa_mask
    if exp == fmt.exponent_mask:
        cls = FpClass.NAN if frac else FpClass.INF
        return DecodedFp(sign, exp, frac, cls)
    if exp == 0:
        cls = FpClass.SUBNORMAL if frac else FpClass.ZERO
        return DecodedFp(sign, exp, frac, cls)
    return DecodedFp(sign, exp, frac | (1 << fmt.mantissa_bits), FpClass.NORMAL)


def encode(
    sign: int,
    unbiased_exponent: int,
    significand: int,
    fmt: FpFormat,
    rounding: RoundingMode = RoundingMode.TOWARD_NEG_INF,
) -> tuple[int, EncodeStatus]:
    """Pack a normalized significand into a word.

    Args:
        sign: 0 or 1.
        unbiased_exponent: true exponent of the leading one.
        significand: 0, or an (m+1)-bit integer with bit m set; guard bits
            must already be resolved by the caller (``core.renormalize``).
        rounding: accepted for interface symmetry; the significand is already
            exact at this width, so it does not alter the result.

    Returns:
        (word, status). Exponent overflow yields +/-Inf with OVERFLOW;
        exponent underflow flushes to +/-0 with UNDERFLOW. Both are reported,
        not raised.
    """
    del rounding
    if sign not in (0, 1):
        raise ValueError("sign must be 0 or 1")
    sign_bits = sign << (fmt.total_bits - 1)
    if significand == 0:
        return sign_bits, EncodeStatus.OK
    if not (1 << fmt.mantissa_bits) <= significand < (1 << (fmt.mantissa_bits + 1)):
        raise ValueError(f"significand 0x{significand:x} not normalized for {fmt.name}")
    biased = unbiased_exponent + fmt.bias
    if biased >= fmt.exponent_mask:
        return sign_bits | (fmt.exponent_mask << fmt.mantissa_bits), EncodeStatus.OVERFLOW
    if biased <= 0:
        return sign_bits, EncodeStatus.UNDERFLOW
    frac = significand & fmt.mantissa_mask
    return sign_bits | (biased << fmt.mantissa_bits) | frac, EncodeStatus.OK


def monotone_key(bits: int, fmt: FpFormat) -> int:
    """Map a finite FP word to an unsigned key with the same total order.

    Negative values have all bits complemented; non-negative values have the
    sign bit set. The map is strictly increasing in the real value, so plain
    unsigned integer comparison in a register implements FP comparison.
    key(-0.0) < key(+0.0); callers that treat the two zeros as equal must
    resolve that tie themselves.
    """
    d = decode(bits, fmt)
    if d.fp_class is FpClass.NAN:
        raise NonFiniteInput("monotone key undefined for NaN")
    if d.sign:
        return bits ^ fmt.word_mask
    return bits | fmt.sign_mask


# ---------------------------------------------------------------------------
# host-boundary conversions (decimal text / Python float <-> packed words)
# ---------------------------------------------------------------------------

def _f32_bits(x: float) -> int:
    return struct.unpack(">I", struct.pack(">f", x))[0]


def _f32_value(bits: int) -> float:
    return struct.unpack(">f", struct.pack(">I", bits))[0]


def _f16_bits(x: float) -> int:
    return struct.unpack(">H", struct.pack(">e", x))[0]


def _f16_value(bits: int) -> float:
    return struct.unpack(">e", struct.pack(">H", bits))[0]


def _bf16_bits(x: float) -> int:
    """Round a Python float to BF16 through FP32, ties to even."""
    b32 = _f32_bits(x)
    if (b32 >> 23) & 0xFF == 0xFF:           # inf/nan: truncate payload
        word = b32 >> 16
        if b32 & 0x7FFFFF and not word & 0x7F:
            word |= 1                         # keep NaN a NaN
        return word
    lower = b32 & 0xFFFF
    word = b32 >> 16
    if lower > 0x8000 or (lower == 0x8000 and word & 1):
        word += 1                             # may carry into the exponent
    return word & 0xFFFF


def encode_decimal(text: str | float, fmt: FpFormat) -> int:
    """Parse a decimal literal (or take a float) and round it to ``fmt``.

    Conversion goes through the host binary64 parse and a single
    round-to-nearest-even narrowing, the standard text-to-word path.
    NaN and infinities are rejected: packed operands in this system are
    always finite.
    """
    x = float(text)
    if math.isnan(x) or math.isinf(x):
        raise NonFiniteInput(f"non-finite literal {text!r}")
    if fmt is FP32 or fmt.name == "fp32":
        return _f32_bits(x)
    if fmt is FP16 or fmt.name == "fp16":
        try:
            bits = _f16_bits(x)
        except OverflowError:
            raise NonFiniteInput(f"{text!r} overflows {fmt.name}") from None
        if (bits >> 10) & 0x1F == 0x1F:
            raise NonFiniteInput(f"{text!r} overflows {fmt.name}")
        return bits
    if fmt is BF16 or fmt.name == "bf16":
        bits = _bf16_bits(x)
        if (bits >> 7) & 0xFF == 0xFF:
            raise NonFiniteInput(f"{text!r} overflows {fmt.name}")
        return bits
    raise ValueError(f"no host conversion for format {fmt.name}")


def to_float(bits: int, fmt: FpFormat) -> float:
    """Exact value of a packed word as a Python float (all presets fit)."""
    if fmt is FP32 or fmt.name == "fp32":
        return _f32_value(bits)
    if fmt is FP16 or fmt.name == "fp16":
        return _f16_value(bits)
    if fmt is BF16 or fmt.name == "bf16":
        return _f32_value((bits & 0xFFFF) << 16)
    raise ValueError(f"no host conversion for format {fmt.name}")
