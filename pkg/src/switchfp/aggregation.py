"""Scatter-gather vector aggregation over the accumulator pipeline.

Workers contribute equal-length vectors of packed FP words; the switch folds
them element-wise into accumulator slots and hands the reduced vector back
once every worker has contributed. The wire unit is a frame:

    magic 0xF9 0x1A | version | kind | slot (4B) | worker (2B) |
    generation (2B) | count (2B) | count big-endian words

Kinds: CONTRIBUTE carries a worker's chunk; RESULT returns the reduced chunk
(echoing the worker whose contribution completed it); ACK confirms a
contribution that is folded in or recognized as a duplicate; ERROR rejects a
frame, carrying a single reason word.

A session serves `n_slots` concurrent chunks of `vector_len` elements on one
machine whose register arrays are `n_slots * vector_len` long. Each slot
tracks a contribution bitmap and a generation counter: a chunk round
completes when all workers have hit the slot, which emits the RESULT, bumps
the generation, and rezeroes the slot's registers from the control plane.
Retransmits are idempotent: a duplicate (same round, worker bit already set)
or a stale generation is acknowledged without touching state. A future
generation is an error; rounds per slot are strictly ordered.

The pure fold aggregate_vectors() gives the same reduction without the
machine or the protocol, plus a per-element event log; the differential
tests hold the two routes against each other.
"""

from __future__ import annotations

import enum
import math
import struct
import warnings
from collections import Counter
from dataclasses import dataclass, field

from .core import (
    AddEvent,
    CoreConfig,
    EventKind,
    ZERO_STATE,
    add,
    build_lpm_table,
    check_overflow_capacity,
    readout,
    to_switch_value,
)
from .formats import FpFormat, NonFiniteInput, RoundingMode, decode, encode_decimal
from .pipeline import (
    AluProfile,
    EXP_ARRAY,
    EXTENDED,
    MANT_ARRAY,
    Machine,
    add_packet,
    builtin_program,
    event_from_metadata,
    read_packet,
    result_word,
)

__all__ = [
    "MAGIC",
    "VERSION",
    "FrameKind",
    "ErrorReason",
    "Frame",
    "MalformedFrame",
    "encode_frame",
    "decode_frame",
    "SessionConfig",
    "OverflowCapacityWarning",
    "Session",
    "open_session",
    "scatter_gather",
    "ElementEvent",
    "LengthMismatch",
    "aggregate_vectors",
    "load_values_csv",
    "load_values_binary",
    "load_worker_file",
]

MAGIC = b"\xf9\x1a"
VERSION = 1
_HEADER = struct.Struct(">2sBBIHHH")


class FrameKind(enum.IntEnum):
    CONTRIBUTE = 1
    RESULT = 2
    ACK = 3
    ERROR = 4


class ErrorReason(enum.IntEnum):
    MALFORMED = 1
    SLOT_RANGE = 2
    NON_FINITE = 3
    BAD_GENERATION = 4
    WORKER_RANGE = 5
    COUNT_MISMATCH = 6


class MalformedFrame(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    slot: int
    worker: int
    generation: int
    values: tuple[int, ...] = ()


def _word_struct(fmt: FpFormat) -> str:
    return "I" if fmt.total_bits == 32 else "H"


def encode_frame(frame: Frame, fmt: FpFormat) -> bytes:
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        int(frame.kind),
        frame.slot,
        frame.worker,
        frame.generation,
        len(frame.values),
    )
    body = struct.pack(f">{len(frame.values)}{_word_struct(fmt)}", *frame.values)
    return header + body


def decode_frame(data: bytes, fmt: FpFormat) -> Frame:
    if len(data) < _HEADER.size:
        raise MalformedFrame(f"frame too short ({len(data)} bytes)")
    magic, version, kind, slot, worker, generation, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedFrame(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedFrame(f"unsupported version {version}")
    try:
        kind = FrameKind(kind)
    except ValueError:
        raise MalformedFrame(f"unknown frame kind {kind}") from None
    word_bytes = fmt.total_bits // 8
    expected = _HEADER.size + count * word_bytes
    if len(data) != expected:
        raise MalformedFrame(
            f"length {len(data)} != {expected} for count {count}")
    values = struct.unpack_from(f">{count}{_word_struct(fmt)}", data, _HEADER.size)
    return Frame(kind, slot, worker, generation, values)


# ---------------------------------------------------------------------------
# session
# ---------------------------------------------------------------------------

class OverflowCapacityWarning(UserWarning):
    """More workers than the headroom provably absorbs without overflow."""


@dataclass(frozen=True)
class SessionConfig:
    core: CoreConfig = field(default_factory=CoreConfig)
    n_workers: int = 2
    n_slots: int = 1
    vector_len: int = 1
    profile: AluProfile = EXTENDED
    rounding: RoundingMode = RoundingMode.TOWARD_NEG_INF

    def __post_init__(self) -> None:
        if not 1 <= self.n_workers <= 0xFFFF:
            raise ValueError("n_workers must fit the 16-bit worker field")
        if not 1 <= self.n_slots <= 0xFFFFFFFF:
            raise ValueError("n_slots must fit the 32-bit slot field")
        if not 1 <= self.vector_len <= 0xFFFF:
            raise ValueError("vector_len must fit the 16-bit count field")


class Session:
    """One aggregation session: a machine plus per-slot round bookkeeping."""

    def __init__(self, config: SessionConfig):
        self.config = config
        if not check_overflow_capacity(config.core, config.n_workers):
            warnings.warn(
                f"{config.n_workers} workers can overflow "
                f"{config.core.register_width}-bit headroom; "
                "rejected adds will drop contributions",
                OverflowCapacityWarning,
                stacklevel=3,
            )
        program = builtin_program(
            config.core.variant,
            config.core,
            n_slots=config.n_slots * config.vector_len,
            profile=config.profile,
            rounding=config.rounding,
        )
        self._machine = Machine(program, config.profile)
        self._bitmap = [0] * config.n_slots
        self._generation = [0] * config.n_slots
        self._full = (1 << config.n_workers) - 1
        self.event_counts: Counter[EventKind] = Counter()
        self.contributions = 0
        self.results_emitted = 0
        self.errors_emitted = 0
        self.acks_emitted = 0

    def generation(self, slot: int) -> int:
        return self._generation[slot]

    def _ack(self, frame: Frame) -> Frame:
        self.acks_emitted += 1
        return Frame(FrameKind.ACK, frame.slot, frame.worker, frame.generation)

    def _error(self, frame: Frame, reason: ErrorReason) -> Frame:
        self.errors_emitted += 1
        return Frame(
            FrameKind.ERROR, frame.slot, frame.worker, frame.generation,
            (int(reason),),
        )

    def handle(self, frame: Frame) -> Frame:
        """Apply one decoded frame; always returns a response frame."""
        cfg = self.config
        if frame.kind is not FrameKind.CONTRIBUTE:
            return self._error(frame, ErrorReason.MALFORMED)
        if frame.slot >= cfg.n_slots:
            return self._error(frame, ErrorReason.SLOT_RANGE)
        if frame.worker >= cfg.n_workers:
            return self._error(frame, ErrorReason.WORKER_RANGE)
        if len(frame.values) != cfg.vector_len:
            return self._error(frame, ErrorReason.COUNT_MISMATCH)
        fmt = cfg.core.fmt
        for word in frame.values:
            if not decode(word, fmt).is_finite:
                return self._error(frame, ErrorReason.NON_FINITE)
        current = self._generation[frame.slot]
        if frame.generation < current:
            return self._ack(frame)  # stale retransmit of a finished round
        if frame.generation > current:
            return self._error(frame, ErrorReason.BAD_GENERATION)
        bit = 1 << frame.worker
        if self._bitmap[frame.slot] & bit:
            return self._ack(frame)  # duplicate within the round
        base = frame.slot * cfg.vector_len
        machine = self._machine
        for j, word in enumerate(frame.values):
            pkt = machine.process(add_packet(word, base + j))
            event = event_from_metadata(pkt.metadata, cfg.core)
            if event is not None:
                self.event_counts[event.kind] += 1
        self._bitmap[frame.slot] |= bit
        self.contributions += 1
        if self._bitmap[frame.slot] != self._full:
            return self._ack(frame)
        words = []
        for j in range(cfg.vector_len):
            words.append(result_word(machine.process(read_packet(base + j))))
            machine.write_register(EXP_ARRAY, base + j, 0)
            machine.write_register(MANT_ARRAY, base + j, 0)
        self._bitmap[frame.slot] = 0
        self._generation[frame.slot] = current + 1
        self.results_emitted += 1
        return Frame(
            FrameKind.RESULT, frame.slot, frame.worker, current, tuple(words))

    def ingest(self, data: bytes) -> bytes:
        """Wire-level handle(): decode, apply, encode the response."""
        fmt = self.config.core.fmt
        try:
            frame = decode_frame(data, fmt)
        except MalformedFrame:
            self.errors_emitted += 1
            reply = Frame(FrameKind.ERROR, 0, 0, 0, (int(ErrorReason.MALFORMED),))
            return encode_frame(reply, fmt)
        return encode_frame(self.handle(frame), fmt)


def open_session(config: SessionConfig) -> Session:
    """Construct a session; warns if the worker count can overflow headroom."""
    return Session(config)


class LengthMismatch(ValueError):
    pass


def scatter_gather(
    vectors: list[list[int]] | tuple, session: Session
) -> list[int]:
    """Drive full vectors through a session chunk by chunk.

    Chunk c goes to slot c mod n_slots in generation c div n_slots; short
    tails are padded with +0.0 words. Returns the reduced vector, trimmed to
    the input length.
    """
    cfg = session.config
    if len(vectors) != cfg.n_workers:
        raise LengthMismatch(
            f"{len(vectors)} vectors for {cfg.n_workers} workers")
    n = len(vectors[0])
    if any(len(v) != n for v in vectors):
        raise LengthMismatch("worker vectors differ in length")
    if n == 0:
        return []
    e = cfg.vector_len
    out: list[int] = []
    for c in range(math.ceil(n / e)):
        slot, gen = c % cfg.n_slots, c // cfg.n_slots
        lo = c * e
        reply = None
        for w in range(cfg.n_workers):
            chunk = list(vectors[w][lo:lo + e])
            chunk += [0] * (e - len(chunk))
            reply = session.handle(
                Frame(FrameKind.CONTRIBUTE, slot, w, gen, tuple(chunk)))
        if reply is None or reply.kind is not FrameKind.RESULT:
            raise RuntimeError(f"chunk {c} did not complete: {reply}")
        out.extend(reply.values)
    return out[:n]


# ---------------------------------------------------------------------------
# pure fold (no machine, no protocol)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ElementEvent:
    element: int
    worker: int
    event: AddEvent


def aggregate_vectors(
    vectors,
    cfg: CoreConfig,
    rounding: RoundingMode = RoundingMode.TOWARD_NEG_INF,
) -> tuple[list[int], list[ElementEvent]]:
    """Element-wise fold of packed-word vectors in worker-index order.

    Returns the readout words and every numeric event with its coordinates.
    """
    if not vectors:
        return [], []
    n = len(vectors[0])
    if any(len(v) != n for v in vectors):
        raise LengthMismatch("worker vectors differ in length")
    table = build_lpm_table(cfg.register_width)
    words: list[int] = []
    events: list[ElementEvent] = []
    for j in range(n):
        state = ZERO_STATE
        for w, vector in enumerate(vectors):
            outcome = add(state, to_switch_value(vector[j], cfg), cfg)
            state = outcome.state
            if outcome.event is not None:
                events.append(ElementEvent(j, w, outcome.event))
        words.append(readout(state, cfg, rounding, table)[0])
    return words, events


# ---------------------------------------------------------------------------
# worker input files
# ---------------------------------------------------------------------------

def load_values_csv(path: str, fmt: FpFormat) -> list[int]:
    """Single-column decimal values, one per line; an optional header row."""
    words: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            text = line.split(",")[0].strip()
            if not text:
                continue
            try:
                words.append(encode_decimal(text, fmt))
            except NonFiniteInput:
                raise
            except ValueError:
                if i == 0:
                    continue  # header row
                raise
    return words


def load_values_binary(path: str, fmt: FpFormat) -> list[int]:
    """Little-endian packed words, no header."""
    word_bytes = fmt.total_bits // 8
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) % word_bytes:
        raise ValueError(
            f"{path}: size {len(data)} not a multiple of {word_bytes}")
    code = "I" if word_bytes == 4 else "H"
    return [v[0] for v in struct.iter_unpack(f"<{code}", data)]


def load_worker_file(path: str, fmt: FpFormat) -> list[int]:
    """Dispatch on suffix: .bin/.raw are binary, anything else is CSV."""
    if path.endswith((".bin", ".raw")):
        return load_values_binary(path, fmt)
    return load_values_csv(path, fmt)
