"""Query operators over floating-point columns.

Two pruning operators (Top-N, group-by-having max/min) model a switch stage
that keeps candidate values in register slots and forwards only rows that can
still affect the final answer; a master then finishes the query over the
forwarded subset. One aggregation operator (group-by sum) folds each group
through a switch accumulator.

All in-switch comparisons run on ``formats.monotone_key`` integers: the key
transform is strictly increasing in the real value, so an unsigned register
compare decides exactly what a floating-point compare would, with no
truncation ambiguity near ties. The two zeros order as -0.0 < +0.0, which is
harmless here because replacing one zero-valued row with another never
changes a value-level result.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable

from .core import (
    AddEvent,
    CoreConfig,
    EventKind,
    Variant,
    ZERO_STATE,
    add,
    build_lpm_table,
    readout,
    to_switch_value,
)
from .formats import FP32, FpFormat, NonFiniteInput, RoundingMode, decode, monotone_key
from .pipeline import EXTENDED, builtin_program, validate


class Direction(enum.Enum):
    LARGEST = "largest"
    SMALLEST = "smallest"


class Extreme(enum.Enum):
    MAX = "max"
    MIN = "min"


@dataclass(frozen=True)
class Row:
    """One ingested row: an unsigned 64-bit key and a packed FP value."""

    key: int
    value: int


@dataclass
class PruneReport:
    rows_in: int
    rows_forwarded: int
    rows_dropped: int
    final_result: Any

    def __post_init__(self) -> None:
        if self.rows_in != self.rows_forwarded + self.rows_dropped:
            raise ValueError("rows_in must equal rows_forwarded + rows_dropped")


def _finite_key(row: Row, fmt: FpFormat) -> int:
    if not decode(row.value, fmt).is_finite:
        raise NonFiniteInput(f"non-finite value 0x{row.value:x} in row {row.key}")
    return monotone_key(row.value, fmt)


def _beats(a: int, b: int, largest: bool) -> bool:
    return a > b if largest else a < b


def topn(
    rows: Iterable[Row],
    n: int,
    direction: Direction = Direction.LARGEST,
    fmt: FpFormat = FP32,
) -> PruneReport:
    """Top-N pruning: keep n candidate keys in registers, drop the rest.

    A row is forwarded iff fewer than n slots are filled or its key strictly
    beats the worst kept key (which it then replaces). Ties lose to the
    earlier arrival. The master recomputes the exact Top-N over forwarded
    rows, so the result equals the Top-N of the full stream.

    ``final_result`` is the list of winning rows, best first; ties between
    equal values resolve to the earlier arrival.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    largest = direction is Direction.LARGEST
    slots: list[int] = []
    forwarded: list[tuple[int, int, Row]] = []  # (key, arrival, row)
    rows_in = dropped = 0
    for arrival, row in enumerate(rows):
        rows_in += 1
        mk = _finite_key(row, fmt)
        if len(slots) < n:
            slots.append(mk)
            forwarded.append((mk, arrival, row))
            continue
        worst = min(range(n), key=slots.__getitem__) if largest \
            else max(range(n), key=slots.__getitem__)
        if _beats(mk, slots[worst], largest):
            slots[worst] = mk
            forwarded.append((mk, arrival, row))
        else:
            dropped += 1
    if largest:
        ranked = sorted(forwarded, key=lambda t: (-t[0], t[1]))
    else:
        ranked = sorted(forwarded, key=lambda t: (t[0], t[1]))
    final = [row for _, _, row in ranked[:n]]
    return PruneReport(rows_in, len(forwarded), dropped, final)


def groupby_having_extreme(
    rows: Iterable[Row],
    which: Extreme = Extreme.MAX,
    fmt: FpFormat = FP32,
) -> PruneReport:
    """Per-group running max/min with strict-improvement forwarding.

    Each group owns one register holding its current extreme as a monotone
    key; a row is forwarded iff it opens the group or strictly improves the
    extreme. ``final_result`` maps group key to the extreme's packed word.
    """
    largest = which is Extreme.MAX
    regs: dict[int, int] = {}
    best: dict[int, int] = {}
    rows_in = fwd = 0
    for row in rows:
        rows_in += 1
        mk = _finite_key(row, fmt)
        cur = regs.get(row.key)
        if cur is None or _beats(mk, cur, largest):
            regs[row.key] = mk
            best[row.key] = row.value
            fwd += 1
    return PruneReport(rows_in, fwd, rows_in - fwd, best)


@dataclass
class GroupSumReport:
    """Result of a group-by sum: per-group readout words plus the event log.

    Groups whose accumulator overflowed are listed in ``failed`` (keyed by
    group, holding the rejecting event) and excluded from ``sums``; their
    partial sums are unreliable by definition and are not reported.
    """

    sums: dict[int, int] = field(default_factory=dict)
    events: list[tuple[int, AddEvent]] = field(default_factory=list)
    failed: dict[int, AddEvent] = field(default_factory=dict)
    rows_in: int = 0


def groupby_sum(
    rows: Iterable[Row],
    cfg: CoreConfig,
    rounding: RoundingMode = RoundingMode.TOWARD_NEG_INF,
) -> GroupSumReport:
    """Fold each group through an exact-variant accumulator in stream order.

    Requires the exact variant (sums must not silently drop contributions)
    and a pipeline profile able to host it, which is checked up front by
    validating the builtin exact program. Rounding-loss events are logged
    per group; a headroom overflow aborts its group.
    """
    if cfg.variant is not Variant.EXACT:
        raise ValueError("groupby_sum requires the exact variant")
    violations = validate(builtin_program(Variant.EXACT, cfg), EXTENDED)
    if violations:
        raise ValueError(
            "exact accumulator program does not validate: "
            + "; ".join(str(v) for v in violations)
        )
    report = GroupSumReport()
    states = {}
    for row in rows:
        report.rows_in += 1
        if not decode(row.value, cfg.fmt).is_finite:
            raise NonFiniteInput(f"non-finite value 0x{row.value:x} in row {row.key}")
        if row.key in report.failed:
            continue
        outcome = add(states.get(row.key, ZERO_STATE),
                      to_switch_value(row.value, cfg), cfg)
        if outcome.event is not None:
            if outcome.event.kind is EventKind.HEADROOM_OVERFLOW:
                report.failed[row.key] = outcome.event
                states.pop(row.key, None)
                continue
            report.events.append((row.key, outcome.event))
        states[row.key] = outcome.state
    table = build_lpm_table(cfg.register_width)
    for key, state in states.items():
        word, status = readout(state, cfg, rounding, table)
        report.sums[key] = word
        if status.name == "OVERFLOW":
            report.events.append((key, AddEvent(EventKind.EXPONENT_OVERFLOW)))
        elif status.name == "UNDERFLOW":
            report.events.append((key, AddEvent(EventKind.EXPONENT_UNDERFLOW)))
    return report


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

class MalformedRowWarning(UserWarning):
    pass


def load_rows_csv(path: str, fmt: FpFormat = FP32) -> tuple[list[Row], int]:
    """Read ``key,value`` rows; returns (rows, count of rejected rows).

    A leading ``key,value`` header is skipped. Rows with the wrong shape, a
    bad key, an unparsable value, or a non-finite value are counted and
    skipped; one summary warning is emitted if any were rejected.
    """
    from .formats import encode_decimal

    rows: list[Row] = []
    rejected = 0
    with open(path, newline="") as fh:
        for i, rec in enumerate(csv.reader(fh)):
            if not rec:
                continue
            if i == 0 and [c.strip().lower() for c in rec] == ["key", "value"]:
                continue
            try:
                if len(rec) != 2:
                    raise ValueError("expected key,value")
                key = int(rec[0])
                if not 0 <= key < 1 << 64:
                    raise ValueError("key out of range")
                rows.append(Row(key, encode_decimal(rec[1], fmt)))
            except ValueError:  # NonFiniteInput is a ValueError
                rejected += 1
    if rejected:
        warnings.warn(
            f"{path}: skipped {rejected} malformed row(s)",
            MalformedRowWarning,
            stacklevel=2,
        )
    return rows, rejected
