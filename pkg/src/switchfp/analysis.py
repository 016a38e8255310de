"""Exact oracles and error/ratio statistics for accumulator runs.

Two reference models ground every comparison:

* ``ExactRational`` sums the decoded words with unbounded-precision rational
  arithmetic; it is the mathematical truth, independent of any register rule.
* ``TruncationModel`` replays the chosen variant's shift-and-truncate rules
  on an unbounded-width signed mantissa. With infinite headroom nothing can
  overflow and the approximate variant never overwrites, so any deviation
  from ExactRational is rounding alone.

On top of the oracles sit two histogram analyses: absolute error of a full
aggregation run against the exact sum, classified per element by the events
that produced it, and the element-wise max/min magnitude ratio across
workers that motivates the approximate variant's headroom budget.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

from .aggregation import LengthMismatch, aggregate_vectors
from .core import CoreConfig, EventKind, Variant
from .formats import (
    FP32,
    FpClass,
    FpFormat,
    NonFiniteInput,
    RoundingMode,
    decode,
    encode_decimal,
)

__all__ = [
    "ErrorHistogram",
    "ExactRational",
    "OracleModel",
    "RatioHistogram",
    "TruncationModel",
    "error_distribution",
    "error_histogram_csv",
    "error_histogram_json",
    "oracle_sum",
    "ratio_distribution",
    "ratio_histogram_csv",
    "ratio_histogram_json",
    "rational_of_word",
    "synthetic_vectors",
    "truncation_state",
]


# ---------------------------------------------------------------------------
# exact rational helpers
# ---------------------------------------------------------------------------

def _pow2(e: int) -> Fraction:
    return Fraction(1 << e) if e >= 0 else Fraction(1, 1 << -e)


def _floor_log2(a: Fraction) -> int:
    if a <= 0:
        raise ValueError("floor_log2 requires a positive value")
    e = a.numerator.bit_length() - a.denominator.bit_length()
    if _pow2(e) > a:
        e -= 1
    if _pow2(e + 1) <= a:
        e += 1
    return e


def rational_of_word(bits: int, fmt: FpFormat) -> Fraction:
    """Exact value of a finite packed word, subnormals included."""
    d = decode(bits, fmt)
    if not d.is_finite:
        raise NonFiniteInput(f"no rational value for {d.fp_class.value} word")
    if d.significand == 0:
        return Fraction(0)
    exp = d.biased_exponent if d.fp_class is FpClass.NORMAL else 1
    mag = Fraction(d.significand) * _pow2(exp - fmt.bias - fmt.mantissa_bits)
    return -mag if d.sign else mag


def _encode_rational(v: Fraction, fmt: FpFormat, rounding: RoundingMode) -> int:
    """Round an exact rational to a packed word.

    TOWARD_NEG_INF floors the signed value; NEAREST_EVEN breaks ties on the
    significand's parity. Out-of-range exponents clamp to +/-Inf or flush to
    +/-0 exactly like register readout.
    """
    if v == 0:
        return 0
    sign = 1 if v < 0 else 0
    m = fmt.mantissa_bits
    e = _floor_log2(-v if sign else v)
    scaled = v * _pow2(m - e)
    q = math.floor(scaled)
    if rounding is RoundingMode.NEAREST_EVEN:
        rem = scaled - q
        if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and q & 1):
            q += 1
    if abs(q) == 1 << (m + 1):
        q >>= 1
        e += 1
    biased = e + fmt.bias
    sign_bits = sign << (fmt.total_bits - 1)
    if biased >= fmt.exponent_mask:
        return sign_bits | (fmt.exponent_mask << m)
    if biased <= 0:
        return sign_bits
    return sign_bits | (biased << m) | (abs(q) & fmt.mantissa_mask)


# ---------------------------------------------------------------------------
# oracle models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactRational:
    fmt: FpFormat = FP32


@dataclass(frozen=True)
class TruncationModel:
    cfg: CoreConfig = field(default_factory=CoreConfig)
    rounding: RoundingMode = RoundingMode.TOWARD_NEG_INF


OracleModel = Union[ExactRational, TruncationModel]


def truncation_state(
    values: Sequence[int], cfg: CoreConfig
) -> tuple[int, int, int]:
    """Replay the variant's alignment rules with an unbounded mantissa.

    Returns (biased exponent, signed mantissa scaled by
    2**(exponent - bias - m - G), count of discarded one-bits). Right shifts
    floor the signed value; nothing saturates, overflows, or overwrites. In
    the approximate variant the register keeps the exponent stored first and
    later incoming mantissas shift left into the unbounded headroom, so the
    overwrite escape hatch is never needed. The discard count can exceed a
    real register's saturated count for deep shifts of negative values;
    callers use it only as a nonzero test.
    """
    st_exp, st_mant, lost = 0, 0, 0
    for w in values:
        d = decode(w, cfg.fmt)
        if not d.is_finite:
            raise NonFiniteInput(f"non-finite word 0x{w:x}")
        if d.fp_class is not FpClass.NORMAL:
            continue  # zeros and flushed subnormals are no-ops, as in registers
        mant = d.significand << cfg.guard_bits
        if d.sign:
            mant = -mant
        gap = d.biased_exponent - st_exp
        if st_exp == 0:
            st_exp = d.biased_exponent  # empty register: store as-is
            st_mant += mant
        elif gap <= 0:
            lost += bin(mant & ((1 << -gap) - 1)).count("1")
            st_mant += mant >> -gap
        elif cfg.variant is Variant.EXACT:
            lost += bin(st_mant & ((1 << gap) - 1)).count("1")
            st_mant = (st_mant >> gap) + mant
            st_exp = d.biased_exponent
        else:
            st_mant += mant << gap
    return st_exp, st_mant, lost


def oracle_sum(
    values: Sequence[int], model: OracleModel
) -> Union[Fraction, int]:
    """Reference sum: an exact rational, or the word an ideal register yields."""
    if isinstance(model, ExactRational):
        return sum(
            (rational_of_word(w, model.fmt) for w in values), Fraction(0)
        )
    cfg = model.cfg
    st_exp, st_mant, _ = truncation_state(values, cfg)
    scale = st_exp - cfg.fmt.bias - cfg.fmt.mantissa_bits - cfg.guard_bits
    return _encode_rational(Fraction(st_mant) * _pow2(scale), cfg.fmt,
                            model.rounding)


# ---------------------------------------------------------------------------
# error distribution
# ---------------------------------------------------------------------------

_DECADE_LO = -12
_ERROR_BUCKETS = (
    [f"lt_1e{_DECADE_LO}"]
    + [f"[1e{i},1e{i + 1})" for i in range(_DECADE_LO, 0)]
    + ["ge_1e0"]
)
_CLASS_PRIORITY = (
    EventKind.HEADROOM_OVERFLOW,
    EventKind.OVERWRITE,
    EventKind.ROUNDING_LOSS,
)


def _error_bucket(err: Fraction) -> str:
    if err >= 1:
        return "ge_1e0"
    if err < Fraction(10) ** _DECADE_LO:
        return f"lt_1e{_DECADE_LO}"
    for i in range(_DECADE_LO, 0):
        if err < Fraction(10) ** (i + 1):
            return f"[1e{i},1e{i + 1})"
    raise AssertionError("unreachable")


@dataclass
class ErrorHistogram:
    """Absolute-error decades plus single-class attribution per element.

    ``bucket_counts`` and ``class_counts`` each sum to the number of
    elements with nonzero error; zero-error elements are counted apart.
    """

    bucket_counts: dict[str, int]
    class_counts: dict[str, int]
    zero_error: int
    total_elements: int

    @property
    def total_errors(self) -> int:
        return self.total_elements - self.zero_error


def error_distribution(
    worker_vectors: Sequence[Sequence[int]],
    cfg: CoreConfig,
    rounding: RoundingMode = RoundingMode.TOWARD_NEG_INF,
) -> ErrorHistogram:
    """Aggregate the vectors, then bucket |readout - exact sum| per element.

    Attribution is single-class by severity: an element touched by a
    headroom overflow counts there, else an overwrite counts there, else the
    nonzero error is rounding (including event-free causes such as flushed
    subnormal inputs). A non-finite readout lands in the top bucket.
    """
    words, events = aggregate_vectors(worker_vectors, cfg, rounding)
    kinds_by_element: dict[int, set[EventKind]] = {}
    for ev in events:
        kinds_by_element.setdefault(ev.element, set()).add(ev.event.kind)
    buckets = {label: 0 for label in _ERROR_BUCKETS}
    classes = {kind.value: 0 for kind in _CLASS_PRIORITY}
    zero = 0
    for i, word in enumerate(words):
        exact = sum(
            (rational_of_word(vec[i], cfg.fmt) for vec in worker_vectors),
            Fraction(0),
        )
        try:
            err = abs(rational_of_word(word, cfg.fmt) - exact)
        except NonFiniteInput:
            err = None  # +/-Inf readout: error beyond the top decade
        if err == 0:
            zero += 1
            continue
        buckets[_error_bucket(err) if err is not None else "ge_1e0"] += 1
        kinds = kinds_by_element.get(i, ())
        for kind in _CLASS_PRIORITY:
            if kind in kinds or kind is EventKind.ROUNDING_LOSS:
                classes[kind.value] += 1
                break
    return ErrorHistogram(buckets, classes, zero, len(words))


def error_histogram_csv(h: ErrorHistogram) -> str:
    denom = h.total_elements or 1
    lines = ["bucket,count,fraction"]
    lines.append(f"zero_error,{h.zero_error},{h.zero_error / denom:.12g}")
    for label in _ERROR_BUCKETS:
        count = h.bucket_counts[label]
        lines.append(f'"{label}",{count},{count / denom:.12g}')
    for name, count in h.class_counts.items():
        lines.append(f"class:{name},{count},{count / denom:.12g}")
    return "\n".join(lines) + "\n"


def error_histogram_json(h: ErrorHistogram) -> str:
    return json.dumps(
        {
            "total_elements": h.total_elements,
            "zero_error": h.zero_error,
            "buckets": h.bucket_counts,
            "classes": h.class_counts,
        },
        indent=2,
    )


# ---------------------------------------------------------------------------
# max/min ratio distribution
# ---------------------------------------------------------------------------

@dataclass
class RatioHistogram:
    """Element-wise max/min magnitude ratios in power-of-two buckets.

    ``bucket_counts[k]`` counts ratios in [2**k, 2**(k+1)). Elements where
    every worker is zero, or where some but not all are zero (ratio
    undefined), sit in their own counters.
    """

    bucket_counts: dict[int, int]
    all_zero: int
    some_zero: int
    total_elements: int
    threshold_log2: int = 7

    @property
    def defined(self) -> int:
        return self.total_elements - self.all_zero - self.some_zero

    def fraction_below(self, log2: int | None = None) -> float:
        """Fraction of defined ratios strictly below 2**log2."""
        if log2 is None:
            log2 = self.threshold_log2
        if self.defined == 0:
            return 0.0
        below = sum(c for k, c in self.bucket_counts.items() if k < log2)
        return below / self.defined


def ratio_distribution(
    worker_vectors: Sequence[Sequence[int]], fmt: FpFormat = FP32
) -> RatioHistogram:
    """Histogram of max|v| / min nonzero |v| across workers, per element."""
    if len(worker_vectors) < 2:
        raise LengthMismatch("ratio analysis needs at least 2 workers")
    n = len(worker_vectors[0])
    if any(len(vec) != n for vec in worker_vectors):
        raise LengthMismatch("worker vectors must have equal length")
    buckets: dict[int, int] = {}
    all_zero = some_zero = 0
    for i in range(n):
        mags = [abs(rational_of_word(vec[i], fmt)) for vec in worker_vectors]
        if all(m == 0 for m in mags):
            all_zero += 1
        elif any(m == 0 for m in mags):
            some_zero += 1
        else:
            k = _floor_log2(max(mags) / min(mags))
            buckets[k] = buckets.get(k, 0) + 1
    return RatioHistogram(buckets, all_zero, some_zero, n)


def ratio_histogram_csv(h: RatioHistogram) -> str:
    """Rows are fractions of all elements; the summary row is of defined ratios."""
    denom = h.total_elements or 1
    lines = ["bucket,count,fraction"]
    lines.append(f"all_zero,{h.all_zero},{h.all_zero / denom:.12g}")
    lines.append(f"some_zero,{h.some_zero},{h.some_zero / denom:.12g}")
    for k in sorted(h.bucket_counts):
        count = h.bucket_counts[k]
        lines.append(f'"[2^{k},2^{k + 1})",{count},{count / denom:.12g}')
    below = sum(c for k, c in h.bucket_counts.items() if k < h.threshold_log2)
    lines.append(
        f"below_2^{h.threshold_log2},{below},{h.fraction_below():.12g}"
    )
    return "\n".join(lines) + "\n"


def ratio_histogram_json(h: RatioHistogram) -> str:
    return json.dumps(
        {
            "total_elements": h.total_elements,
            "all_zero": h.all_zero,
            "some_zero": h.some_zero,
            "buckets": {str(k): h.bucket_counts[k]
                        for k in sorted(h.bucket_counts)},
            "threshold_log2": h.threshold_log2,
            "fraction_below_threshold": h.fraction_below(),
        },
        indent=2,
    )


# ---------------------------------------------------------------------------
# synthetic inputs
# ---------------------------------------------------------------------------

_DIST_RE = re.compile(
    r"^\s*(uniform|lognormal)\s*\(\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\)\s*$"
)


def synthetic_vectors(
    dist: str,
    n_workers: int,
    n_elements: int,
    seed: int = 0,
    fmt: FpFormat = FP32,
) -> list[list[int]]:
    """Seeded worker vectors from 'uniform(a,b)' or 'lognormal(mu,sigma)'."""
    m = _DIST_RE.match(dist)
    if m is None:
        raise ValueError(f"unrecognized distribution {dist!r}")
    name, a, b = m.group(1), float(m.group(2)), float(m.group(3))
    if n_workers < 1 or n_elements < 0:
        raise ValueError("need n_workers >= 1 and n_elements >= 0")
    rng = random.Random(seed)
    if name == "uniform":
        draw = lambda: rng.uniform(a, b)
    else:
        draw = lambda: rng.lognormvariate(a, b)
    return [
        [encode_decimal(draw(), fmt) for _ in range(n_elements)]
        for _ in range(n_workers)
    ]
