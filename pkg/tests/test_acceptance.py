"""End-to-end acceptance suite.

Each test exercises one numbered acceptance check at its stated tolerance and
prints a single PASS line on success (visible with ``pytest -s``; under
``pytest -v`` the per-test outcome line carries the same information).  Every
expected value is either an exact integer, a frozen word, or the output of an
independent oracle computed here: exact rationals, the unbounded-width
truncation model, a software CLZ, or sort-everything references.  No check
compares the implementation against itself.
"""

import random
import struct
import time
import warnings
from fractions import Fraction

from switchfp.aggregation import (
    Session,
    SessionConfig,
    add_packet,
    aggregate_vectors,
    read_packet,
    result_word,
    scatter_gather,
)
from switchfp.analysis import (
    ExactRational,
    TruncationModel,
    _encode_rational,
    error_distribution,
    oracle_sum,
    rational_of_word,
    synthetic_vectors,
)
from switchfp.cli import main as cli_main
from switchfp.core import (
    ZERO_STATE,
    CoreConfig,
    EncodeStatus,
    EventKind,
    RoundingMode,
    Variant,
    add,
    build_lpm_table,
    check_overflow_capacity,
    clz_lpm,
    readout,
    to_switch_value,
    value_of,
)
from switchfp.formats import FP32, decode, monotone_key
from switchfp.pipeline import (
    BASELINE,
    EXTENDED,
    Capability,
    Machine,
    builtin_program,
    validate,
)
from switchfp.query import Extreme, Row, groupby_having_extreme, groupby_sum, topn

from lockstep import random_finite_word, run_lockstep

CFG = CoreConfig()  # fp32 words, exact variant, 32-bit registers, no guard bits


def _word(sign: int, biased_exp: int, frac: int) -> int:
    return (sign << 31) | (biased_exp << 23) | frac


# ---------------------------------------------------------------------------
# 1. worked example: 3.0 + 1.0, every intermediate bitwise
# ---------------------------------------------------------------------------

def test_c01_worked_example_reproduced_bitwise():
    started = time.monotonic()
    a, b = 0x40400000, 0x3F800000  # 3.0 and 1.0

    da, db = decode(a, FP32), decode(b, FP32)
    assert (da.biased_exponent, da.significand) == (128, 0xC00000)  # 1.1b
    assert (db.biased_exponent, db.significand) == (127, 0x800000)  # 1.0b

    first = add(ZERO_STATE, to_switch_value(a, CFG), CFG)
    assert first.event is None
    assert (first.state.exponent, first.state.mantissa) == (128, 0xC00000)

    second = add(first.state, to_switch_value(b, CFG), CFG)
    assert second.event is None
    # incoming 1.0b aligned down one place to exponent 128, summed with 1.1b:
    # 0xC00000 + 0x400000 = 0x1000000, the de-normalized pattern 10.0b x 2^1
    assert (second.state.exponent, second.state.mantissa) == (128, 0x1000000)
    assert readout(second.state, CFG) == (0x40800000, EncodeStatus.OK)

    # the staged pipeline must expose the same intermediates in its metadata
    m = Machine(builtin_program(Variant.EXACT, CFG))
    t1 = []
    m.process(add_packet(a), trace=t1)
    s1 = {snap.stage_id: snap.metadata for snap in t1}
    assert s1[0]["exp_in"] == 128
    assert s1[1]["mant_in"] == 0xC00000

    t2 = []
    m.process(add_packet(b), trace=t2)
    s2 = {snap.stage_id: snap.metadata for snap in t2}
    assert s2[0]["exp_in"] == 127
    assert s2[1]["mant_mag"] == 0x800000
    assert s2[3]["mant_in"] == 0x400000 and s2[3]["dist_r"] == 1  # 0.1b x 2^1
    assert s2[4]["mant_cur"] == 0x1000000                         # 10.0b x 2^1
    assert s2[6]["lz"] == 7                                       # via LPM table
    assert s2[6]["t"] == 1 and s2[6]["t_r"] == 1                  # shift right 1
    assert (s2[6]["q"], s2[6]["out_e"]) == (0x800000, 129)
    assert s2[8]["word"] == 0x40800000
    assert m.read_register("exp_state", 0) == 128
    assert m.read_register("mant_state", 0) == 0x1000000

    t3 = []
    pkt = m.process(read_packet(), trace=t3)
    assert result_word(pkt) == 0x40800000

    elapsed = time.monotonic() - started
    assert elapsed < 1.0
    print(f"PASS C1: 3.0 + 1.0 reproduced bitwise through core and pipeline, "
          f"result 0x40800000 in {elapsed * 1e3:.0f} ms")


# ---------------------------------------------------------------------------
# 2. headroom bound: 128 max-mantissa adds fit, the 129th overflows
# ---------------------------------------------------------------------------

def test_c02_headroom_overflow_bound_exact_integers():
    word = _word(0, 127, 0x7FFFFF)  # largest significand at one exponent
    inc = to_switch_value(word, CFG)
    assert check_overflow_capacity(CFG, 128)
    assert not check_overflow_capacity(CFG, 129)

    st = ZERO_STATE
    for _ in range(128):
        out = add(st, inc, CFG)
        assert out.event is None
        st = out.state
    assert (st.exponent, st.mantissa) == (127, 128 * 0xFFFFFF)

    rejected = add(st, inc, CFG)
    assert rejected.event is not None
    assert rejected.event.kind is EventKind.HEADROOM_OVERFLOW
    assert rejected.state == st  # the rejected add leaves the register unchanged
    print("PASS C2: 128 same-exponent max-mantissa adds accumulate exactly; "
          "the 129th reports HeadroomOverflow and changes nothing")


# ---------------------------------------------------------------------------
# 3. overwrite threshold: gap 7 lossless, gap 8 overwrites with bounded loss
# ---------------------------------------------------------------------------

def test_c03_overwrite_threshold_and_discard_bound():
    cfg = CoreConfig(variant=Variant.APPROX)
    rng = random.Random(0xC3)
    trials = 100_000
    bound = Fraction(1, 128)  # 2^-7
    for _ in range(trials):
        e = rng.randrange(40, 200)
        stored = _word(rng.getrandbits(1), e, rng.getrandbits(23))
        st = add(ZERO_STATE, to_switch_value(stored, cfg), cfg).state

        # gap exactly 7: the incoming mantissa shifts left losslessly.  Its
        # significand stays below 2^24 - 2^17 so the shifted sum cannot hit
        # the headroom limit and the value identity is exact.
        inc7 = to_switch_value(
            _word(rng.getrandbits(1), e + 7,
                  rng.randrange(0, (1 << 23) - (1 << 17))), cfg)
        out7 = add(st, inc7, cfg)
        assert out7.event is None
        assert value_of(out7.state, cfg) == value_of(st, cfg) + value_of(inc7, cfg)

        # gap exactly 8: overwrite, discarding strictly less than 2^-7 of
        # the incoming magnitude
        inc8 = to_switch_value(_word(rng.getrandbits(1), e + 8,
                                     rng.getrandbits(23)), cfg)
        out8 = add(st, inc8, cfg)
        assert out8.event is not None
        assert out8.event.kind is EventKind.OVERWRITE
        assert abs(Fraction(out8.event.discarded)) \
            < abs(value_of(inc8, cfg)) * bound
    print(f"PASS C3: {trials} trials each way; gap-7 adds exact, every gap-8 "
          f"overwrite discarded < 2^-7 of the incoming magnitude")


# ---------------------------------------------------------------------------
# 4. exact variant vs truncation-model and exact-rational oracles
# ---------------------------------------------------------------------------

def test_c04_exact_variant_matches_oracles_bitwise():
    rng = random.Random(0xC4)
    model = TruncationModel(CFG)
    exact = ExactRational()
    total_adds = 0
    sequences = 0
    clean = 0
    while total_adds < 1_000_000:
        # every fourth sequence is short so loss-free folds, where the exact
        # rational branch applies, occur in bulk and not just by luck
        length = rng.randint(1, 6) if sequences % 4 == 0 else rng.randint(1, 64)
        lo = rng.randint(1, 200)  # exponent spread capped at 30
        words = [random_finite_word(rng, CFG, lo, lo + 30) for _ in range(length)]

        st = ZERO_STATE
        lossy = False
        for w in words:
            out = add(st, to_switch_value(w, CFG), CFG)
            assert out.event is None or out.event.kind is EventKind.ROUNDING_LOSS
            lossy = lossy or out.event is not None
            st = out.state
        got = readout(st, CFG)[0]

        assert got == oracle_sum(words, model)
        if not lossy:
            clean += 1
            want = _encode_rational(oracle_sum(words, exact), FP32,
                                    RoundingMode.TOWARD_NEG_INF)
            assert got == want
        total_adds += length
        sequences += 1
    assert clean >= 1_000  # the rational branch must actually be exercised
    print(f"PASS C4: {total_adds} adds over {sequences} sequences match the "
          f"truncation model bitwise; {clean} loss-free sequences also match "
          f"the exact rational sum")


# ---------------------------------------------------------------------------
# 5. rounding direction: never above the exact sum
# ---------------------------------------------------------------------------

def test_c05_rounding_direction_toward_neg_inf():
    rng = random.Random(0xC5)
    trials = 100_000
    for _ in range(trials):
        length = rng.randint(1, 12)
        words = [_word(0, rng.randrange(80, 191), rng.getrandbits(23))
                 for _ in range(length)]
        exact = sum((rational_of_word(w, FP32) for w in words), Fraction(0))

        st = ZERO_STATE
        for w in words:
            st = add(st, to_switch_value(w, CFG), CFG).state
        got = rational_of_word(readout(st, CFG)[0], FP32)
        assert got <= exact  # all-positive: floor never rounds up

        st = ZERO_STATE
        for w in words:
            st = add(st, to_switch_value(w | 0x80000000, CFG), CFG).state
        got_neg = rational_of_word(readout(st, CFG)[0], FP32)
        assert got_neg <= -exact       # still toward -inf
        assert abs(got_neg) >= exact   # all-negative: magnitude never shrinks
    print(f"PASS C5: {trials} positive trials floor below the exact sum and "
          f"their negations floor below with magnitude at least the exact one")


# ---------------------------------------------------------------------------
# 6. CLZ lookup table vs software count
# ---------------------------------------------------------------------------

def test_c06_clz_lpm_agrees_with_software_count():
    table = build_lpm_table(32)
    rng = random.Random(0xC6)
    checked = 0
    for lz in range(32):
        for _ in range(100):
            low = rng.getrandbits(31 - lz) if lz < 31 else 0
            mag = (1 << (31 - lz)) | low
            assert 32 - mag.bit_length() == lz  # the fill is in its class
            assert clz_lpm(mag, table) == lz
            checked += 1
    assert clz_lpm(0, table) == 32  # the all-zero class has a single member
    checked += 1
    print(f"PASS C6: LPM CLZ equals software CLZ on {checked} fills across "
          f"all 33 leading-zero classes")


# ---------------------------------------------------------------------------
# 7. pipeline differential fuzz plus Baseline rejection
# ---------------------------------------------------------------------------

def test_c07_differential_lockstep_and_baseline_rejection():
    compared = 0
    compared += run_lockstep(CoreConfig(), profile=EXTENDED,
                             n_ops=400_000, seed=701)
    compared += run_lockstep(CoreConfig(variant=Variant.APPROX),
                             profile=EXTENDED, n_ops=400_000, seed=702)
    compared += run_lockstep(CoreConfig(variant=Variant.APPROX),
                             profile=BASELINE, n_ops=200_000, seed=703)
    assert compared >= 1_000_000

    violations = validate(builtin_program(Variant.EXACT, CoreConfig()), BASELINE)
    assert violations
    assert all(v.rule == "UnsupportedCapability" for v in violations)
    assert {v.capability for v in violations} == {
        Capability.VARIABLE_SHIFT,
        Capability.STATEFUL_READ_SHIFT_ADD_WRITE,
    }
    print(f"PASS C7: {compared} lockstep ops agree with the core bitwise; "
          f"Baseline rejects the exact program for exactly the two missing "
          f"capabilities")


# ---------------------------------------------------------------------------
# 8. aggregation protocol vs per-element oracles
# ---------------------------------------------------------------------------

def test_c08_aggregation_protocol_matches_oracles():
    n_workers, n_elements = 8, 100_000
    vectors = synthetic_vectors("uniform(-1,1)", n_workers, n_elements,
                                seed=2026)

    session = Session(SessionConfig(core=CFG, n_workers=n_workers,
                                    n_slots=64, vector_len=256))
    words = scatter_gather(vectors, session)
    assert len(words) == n_elements
    assert session.results_emitted > 0 and session.errors_emitted == 0

    # the protocol path must agree with a plain fold over the same vectors
    folded, events = aggregate_vectors(vectors, CFG)
    assert words == folded
    assert not any(ev.event.kind is EventKind.OVERWRITE for ev in events)

    model = TruncationModel(CFG)
    for i, column in enumerate(zip(*vectors)):
        assert words[i] == oracle_sum(column, model)

    hist = error_distribution(vectors, CFG)
    assert hist.total_elements == n_elements
    assert hist.class_counts["overwrite"] == 0
    assert hist.zero_error + sum(hist.bucket_counts.values()) == n_elements
    print(f"PASS C8: {n_workers} x {n_elements} protocol run matches the "
          f"truncation model bitwise on every element; error classes "
          f"{ {k: v for k, v in hist.class_counts.items() if v} or 'none'} "
          f"with zero overwrites under the exact variant")


# ---------------------------------------------------------------------------
# 9. query pruning vs sort-everything oracles
# ---------------------------------------------------------------------------

def _oracle_topn(rows, n):
    keyed = [(monotone_key(r.value, FP32), i, r) for i, r in enumerate(rows)]
    keyed.sort(key=lambda t: (-t[0], t[1]))
    return [r for _, _, r in keyed[:n]]


def _oracle_extremes(rows):
    best = {}
    for r in rows:
        mk = monotone_key(r.value, FP32)
        cur = best.get(r.key)
        if cur is None or mk > cur[0]:
            best[r.key] = (mk, r.value)
    return {g: v for g, (_, v) in best.items()}


def test_c09_query_pruning_matches_full_scan():
    rng = random.Random(0xC9)
    pack, unpack = struct.Struct("<f").pack, struct.Struct("<I").unpack
    n_rows, n_groups, n_top = 1_000_000, 20_000, 100
    rows = [Row(rng.randrange(n_groups),
                unpack(pack(rng.uniform(-1000.0, 1000.0)))[0])
            for _ in range(n_rows)]

    rep = topn(rows, n_top)
    assert rep.final_result == _oracle_topn(rows, n_top)
    top_drop = rep.rows_dropped / rep.rows_in

    gex = groupby_having_extreme(rows, Extreme.MAX)
    assert gex.final_result == _oracle_extremes(rows)
    gex_drop = gex.rows_dropped / gex.rows_in

    gsum = groupby_sum(rows, CFG)
    assert gsum.failed == {}
    by_group = {}
    for r in rows:
        by_group.setdefault(r.key, []).append(r.value)
    assert gsum.sums.keys() == by_group.keys()
    model = TruncationModel(CFG)
    for key, values in by_group.items():
        assert gsum.sums[key] == oracle_sum(values, model)

    print(f"PASS C9: over {n_rows} rows Top-{n_top} dropped "
          f"{top_drop:.1%} and group-extreme dropped {gex_drop:.1%} with "
          f"zero deviations from the full scans; all {n_groups} group sums "
          f"match the truncation model bitwise")


# ---------------------------------------------------------------------------
# 10. CLI determinism: identical invocations, byte-identical outputs
# ---------------------------------------------------------------------------

def _run_cli(capsys, *argv):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            code = cli_main(list(argv))
        except SystemExit as exc:
            code = exc.code
    out, err = capsys.readouterr()
    return code, out.encode(), err.encode()


def test_c10_cli_reruns_are_byte_identical(capsys, tmp_path):
    stream = tmp_path / "rows.csv"
    lines = ["key,value"]
    rng = random.Random(10)
    lines += [f"{rng.randrange(5)},{rng.uniform(-3.0, 3.0)!r}"
              for _ in range(200)]
    stream.write_text("\n".join(lines) + "\n")
    agg_out = tmp_path / "agg.json"

    commands = [
        ("add", "3.0", "1.0"),
        ("add", "1.0", "256.0", "--variant", "approx"),
        ("validate", "--builtin", "exact", "--profile", "baseline"),
        ("aggregate", "--synthetic", "uniform(-1,1)", "--n", "8",
         "--len", "500", "--seed", "7", "--out", str(agg_out)),
        ("query", str(stream), "--op", "topn", "--n", "5"),
        ("query", str(stream), "--op", "gb-sum"),
        ("analyze", "--ratio", "--synthetic", "lognormal(0,1.337)",
         "--n", "4", "--len", "300", "--seed", "3", "--out-format", "csv"),
    ]
    for argv in commands:
        first = _run_cli(capsys, *argv)
        file_first = agg_out.read_bytes() if "--out" in argv else None
        second = _run_cli(capsys, *argv)
        assert first == second, f"stdout/stderr/exit drifted for {argv}"
        if file_first is not None:
            assert agg_out.read_bytes() == file_first
    print(f"PASS C10: {len(commands)} CLI invocations rerun byte-identical "
          f"(stdout, stderr, exit codes, and output files)")
