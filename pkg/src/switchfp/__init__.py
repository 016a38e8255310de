"""Floating-point addition and comparison for match-action switch pipelines.

The package models a register-based accumulator that splits a float into an
unsigned exponent register and a signed two's-complement mantissa register,
folds operands with shift-and-add only, and renormalizes on readout. Layers:

* ``formats``: packed word presets (FP32/FP16/BF16), decode/encode, the
  order-preserving monotone key transform.
* ``core``: the functional accumulator (exact and approximate variants),
  numeric events, leading-zero tables, readout.
* ``pipeline``: a stage-program IR with an ALU-capability validator and a
  deterministic interpreter; builders for the accumulator programs.
* ``aggregation``: a wire protocol and session for multi-worker vector
  reduction on the pipeline machine.
* ``query``: Top-N and group-by pruning via monotone keys, group-by sum via
  the accumulator.
* ``analysis``: exact rational and truncation-model oracles, error and
  ratio histograms.
* ``cli``: ``switchfp`` command-line surface over all of the above.
"""

from .aggregation import (
    ElementEvent,
    ErrorReason,
    Frame,
    FrameKind,
    LengthMismatch,
    MalformedFrame,
    OverflowCapacityWarning,
    Session,
    SessionConfig,
    aggregate_vectors,
    decode_frame,
    encode_frame,
    open_session,
    scatter_gather,
)
from .analysis import (
    ErrorHistogram,
    ExactRational,
    RatioHistogram,
    TruncationModel,
    error_distribution,
    oracle_sum,
    ratio_distribution,
    rational_of_word,
    synthetic_vectors,
)
from .core import (
    AddEvent,
    AddOutcome,
    CoreConfig,
    EventKind,
    SwitchValue,
    Variant,
    ZERO_STATE,
    add,
    add_approx,
    add_exact,
    build_lpm_table,
    check_overflow_capacity,
    clz_lpm,
    readout,
    renormalize,
    to_switch_value,
    value_of,
)
from .formats import (
    BF16,
    FP16,
    FP32,
    FORMATS_BY_NAME,
    EncodeStatus,
    FpClass,
    FpFormat,
    NonFiniteInput,
    RoundingMode,
    decode,
    encode,
    encode_decimal,
    monotone_key,
    to_float,
)
from .query import (
    Direction,
    Extreme,
    GroupSumReport,
    PruneReport,
    Row,
    groupby_having_extreme,
    groupby_sum,
    load_rows_csv,
    topn,
)

__version__ = "0.1.0"
