"""Accumulator core: loads, exact/approx adds, renormalization, capacity.

Expected values are frozen from independent arithmetic (Fraction math and a
software leading-zero count), not from running the implementation.
"""

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchfp.formats import FP32, NonFiniteInput, RoundingMode, decode, encode_decimal
from switchfp.core import (
    AddEvent,
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

CFG = CoreConfig()
ACFG = CoreConfig(variant=Variant.APPROX)
TABLE = build_lpm_table(32)


def load(x: float) -> SwitchValue:
    return to_switch_value(encode_decimal(x, FP32), CFG)


def exact_fraction(x: float) -> Fraction:
    return Fraction(x)


# configuration -------------------------------------------------------------

def test_headroom_fp32():
    assert CFG.headroom == 7
    assert CFG.canonical_clz == 8


def test_headroom_guard_bits():
    assert CoreConfig(guard_bits=2).headroom == 5


def test_config_rejects_bad_widths():
    with pytest.raises(ValueError):
        CoreConfig(register_width=24)
    with pytest.raises(ValueError):
        CoreConfig(guard_bits=4)


# loads ----------------------------------------------------------------------

def test_load_frozen():
    assert load(3.0) == SwitchValue(128, 0xC00000)
    assert load(1.0) == SwitchValue(127, 0x800000)
    assert load(-1.0) == SwitchValue(127, -0x800000)
    assert load(0.0) == ZERO_STATE
    assert to_switch_value(0x80000000, CFG) == ZERO_STATE  # -0 loads as zero


def test_load_guard_bits_shift():
    cfg = CoreConfig(guard_bits=2)
    assert to_switch_value(encode_decimal(1.0, FP32), cfg) == SwitchValue(127, 0x2000000)


def test_load_flushes_subnormals():
    assert to_switch_value(0x00000001, CFG) == ZERO_STATE
    assert to_switch_value(0x807FFFFF, CFG) == ZERO_STATE


def test_load_rejects_non_finite():
    with pytest.raises(NonFiniteInput):
        to_switch_value(0x7F800000, CFG)
    with pytest.raises(NonFiniteInput):
        to_switch_value(0x7FC00000, CFG)


def test_value_of():
    assert value_of(load(3.0), CFG) == Fraction(3)
    assert value_of(load(-1.0), CFG) == Fraction(-1)
    assert value_of(ZERO_STATE, CFG) == 0
    cfg = CoreConfig(guard_bits=3)
    assert value_of(to_switch_value(encode_decimal(0.5, FP32), cfg), cfg) == Fraction(1, 2)


# exact adds -----------------------------------------------------------------

def test_add_exact_worked_example():
    out = add_exact(load(3.0), load(1.0), CFG)
    assert out.state == SwitchValue(128, 0x01000000)
    assert out.event is None


def test_add_exact_shifts_state_right():
    out = add_exact(load(1.0), load(4.0), CFG)
    assert out.state == SwitchValue(129, 0xA00000)
    assert out.event is None
    assert value_of(out.state, CFG) == 5


def test_add_exact_mixed_signs():
    out = add_exact(load(3.0), load(-1.0), CFG)
    assert out.state == SwitchValue(128, 0x800000)
    assert value_of(out.state, CFG) == 2


def test_add_exact_zero_state_init():
    out = add_exact(ZERO_STATE, load(1.0), CFG)
    assert out.state == load(1.0)
    assert out.event is None


def test_add_exact_zero_incoming_is_noop():
    out = add_exact(load(3.0), ZERO_STATE, CFG)
    assert out.state == load(3.0)
    assert out.event is None


def test_add_exact_rounding_loss():
    # 1.0 + 2^-23 * 1.5 -> the incoming low bit falls off after a 23-shift
    tiny = to_switch_value(encode_decimal(1.5 * 2.0**-23, FP32), CFG)
    out = add_exact(load(1.0), tiny, CFG)
    assert out.event == AddEvent(EventKind.ROUNDING_LOSS, bits_lost=1)
    # floor: the kept part is 2^-23, the half below is gone
    assert value_of(out.state, CFG) == 1 + Fraction(1, 2**23)


def test_add_exact_negative_full_shift_out_leaves_minus_one():
    # [PAPER-anchored residue rule]: negative operand fully shifted out -> -1
    big = load(float(2.0**40))
    tiny = load(-1.0)
    out = add_exact(big, tiny, CFG)
    assert out.state.mantissa == 0x800000 - 1
    assert out.event is not None and out.event.kind is EventKind.ROUNDING_LOSS
    assert out.event.bits_lost == 8  # 0xFF800000 & 0x7FFFFFFF has 8 ones


def test_add_exact_headroom_overflow_rejects():
    st_ = SwitchValue(128, (1 << 31) - 1)
    out = add_exact(st_, SwitchValue(128, 0x800000), CFG)
    assert out.state == st_
    assert out.event == AddEvent(EventKind.HEADROOM_OVERFLOW)


def test_add_exact_wrong_variant_guard():
    assert add(load(1.0), load(1.0), CFG).state == SwitchValue(127, 0x1000000)


# approx adds ----------------------------------------------------------------

def test_add_approx_left_shift():
    out = add_approx(load(1.0), load(4.0), ACFG)
    assert out.state == SwitchValue(127, 0x02800000)
    assert out.event is None
    assert value_of(out.state, ACFG) == 5


def test_add_approx_overwrite():
    out = add_approx(load(1.0), load(256.0), ACFG)
    assert out.state == SwitchValue(135, 0x800000)
    assert out.event == AddEvent(EventKind.OVERWRITE, discarded=Fraction(1))


def test_add_approx_zero_state_overwrites_silently():
    out = add_approx(ZERO_STATE, load(1.0), ACFG)
    assert out.state == load(1.0)
    assert out.event is None


def test_add_approx_gap_exactly_headroom_is_lossless():
    out = add_approx(load(1.0), load(128.0), ACFG)
    assert out.event is None
    assert value_of(out.state, ACFG) == 129


def test_add_approx_right_shift_branch_matches_exact():
    out_a = add_approx(load(3.0), load(1.0), ACFG)
    out_e = add_exact(load(3.0), load(1.0), CFG)
    assert out_a.state == out_e.state


def test_add_approx_computed_zero_at_exponent_keeps_slot():
    # exponent nonzero, mantissa zero (reached by cancellation): not "empty"
    s = add_approx(load(1.0), load(-1.0), ACFG).state
    assert s == SwitchValue(127, 0)
    out = add_approx(s, load(2.0), ACFG)
    assert out.event is None
    assert value_of(out.state, ACFG) == 2


# LPM leading-zero table ------------------------------------------------------

def test_lpm_entry_structure():
    t = build_lpm_table(32)
    e9 = t.entries[8]
    assert e9.prefix == 0x00800000 and e9.prefix_len == 9 and e9.leading_zeros == 8
    assert t.entries[0].prefix == 0x80000000 and t.entries[0].leading_zeros == 0
    assert t.entries[-1].prefix == 1 and t.entries[-1].prefix_len == 32


def test_clz_frozen():
    assert clz_lpm(0x00800000, TABLE) == 8
    assert clz_lpm(0x01000000, TABLE) == 7
    assert clz_lpm(0, TABLE) == 32
    assert clz_lpm(1, TABLE) == 31
    assert clz_lpm(0xFFFFFFFF, TABLE) == 0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 0xFFFFFFFF))
def test_clz_matches_software_count(word):
    assert clz_lpm(word, TABLE) == 32 - word.bit_length()


def test_clz_width16():
    t16 = build_lpm_table(16)
    assert clz_lpm(0x8000, t16) == 0
    assert clz_lpm(0x0001, t16) == 15
    assert clz_lpm(0, t16) == 16


def test_lpm_rejects_other_widths():
    with pytest.raises(ValueError):
        build_lpm_table(24)


# renormalize / readout --------------------------------------------------------

def test_renormalize_worked_example():
    rn = renormalize(SwitchValue(128, 0x01000000), CFG)
    assert (rn.sign, rn.unbiased_exponent, rn.significand) == (0, 2, 0x800000)
    bits, status = readout(SwitchValue(128, 0x01000000), CFG)
    assert bits == 0x40800000


def test_renormalize_negative_denormalized():
    rn = renormalize(SwitchValue(130, -0x600000), CFG)
    assert (rn.sign, rn.unbiased_exponent, rn.significand) == (1, 2, 0xC00000)
    bits, _ = readout(SwitchValue(130, -0x600000), CFG)
    assert bits == encode_decimal(-6.0, FP32)


def test_renormalize_zero():
    assert readout(ZERO_STATE, CFG)[0] == 0
    assert readout(SwitchValue(130, 0), CFG)[0] == 0


def test_renormalize_floor_is_signwise_uniform():
    # positive: truncates down; negative: floors away from zero
    pos = SwitchValue(127, 0x1000001)
    neg = SwitchValue(127, -0x1000001)
    assert readout(pos, CFG)[0] == encode_decimal(2.0, FP32)
    bits, _ = readout(neg, CFG)
    assert bits == encode_decimal(-(2.0 + 2.0**-22), FP32)


def test_renormalize_negative_floor_carry():
    # |q| carries to 2^(m+1) after flooring: one extra exact shift
    s = SwitchValue(127, -(2**25 - 1))
    rn = renormalize(s, CFG)
    assert (rn.sign, rn.unbiased_exponent, rn.significand) == (1, 2, 0x800000)
    assert value_of(s, CFG) > -4  # floor moved past the true value
    assert readout(s, CFG)[0] == encode_decimal(-4.0, FP32)


def test_renormalize_nearest_even_needs_guard_bits():
    with pytest.raises(ValueError):
        renormalize(SwitchValue(127, 0x800000), CFG, RoundingMode.NEAREST_EVEN)


def test_renormalize_nearest_even_ties():
    cfg = CoreConfig(guard_bits=1)
    # guard bit exactly half, even significand stays
    assert readout(SwitchValue(127, 0x1000001), cfg, RoundingMode.NEAREST_EVEN)[0] \
        == encode_decimal(1.0, FP32)
    # guard bit half, odd significand rounds up
    assert readout(SwitchValue(127, 0x1000003), cfg, RoundingMode.NEAREST_EVEN)[0] \
        == encode_decimal(1.0 + 2.0**-22, FP32)
    # round-up carry across the significand
    assert readout(SwitchValue(127, 0x1FFFFFF), cfg, RoundingMode.NEAREST_EVEN)[0] \
        == encode_decimal(2.0, FP32)


def test_readout_exponent_range_forwarded():
    from switchfp.formats import EncodeStatus

    bits, status = readout(SwitchValue(254, 0x40000000), CFG)
    assert status is EncodeStatus.OVERFLOW and bits == 0x7F800000
    bits, status = readout(SwitchValue(1, 0x1), CFG)
    assert status is EncodeStatus.UNDERFLOW and bits == 0


# capacity ---------------------------------------------------------------------

def test_capacity_frozen():
    assert check_overflow_capacity(CFG, 128) is True
    assert check_overflow_capacity(CFG, 129) is False
    assert check_overflow_capacity(CoreConfig(guard_bits=1), 64) is True
    assert check_overflow_capacity(CoreConfig(guard_bits=1), 65) is False


# value-conservation properties ------------------------------------------------

@settings(max_examples=300, deadline=None)
@given(
    st.integers(0, 1), st.integers(100, 140), st.integers(0, (1 << 23) - 1),
    st.integers(0, 1), st.integers(100, 140), st.integers(0, (1 << 23) - 1),
)
def test_exact_add_conserves_value_when_event_free(s1, e1, f1, s2, e2, f2):
    a = SwitchValue(e1, (-1) ** s1 * (f1 | 0x800000))
    b = SwitchValue(e2, (-1) ** s2 * (f2 | 0x800000))
    out = add_exact(a, b, CFG)
    if out.event is None:
        assert value_of(out.state, CFG) == value_of(a, CFG) + value_of(b, CFG)
    elif out.event.kind is EventKind.ROUNDING_LOSS:
        err = value_of(a, CFG) + value_of(b, CFG) - value_of(out.state, CFG)
        ulp = Fraction(1, 2) ** (CFG.fmt.mantissa_bits - (out.state.exponent - CFG.fmt.bias))
        assert 0 < err < ulp


def test_readout_floor_property_seeded():
    rng = random.Random(20260816)
    for _ in range(2000):
        state = ZERO_STATE
        total = Fraction(0)
        for _ in range(rng.randint(1, 24)):
            word = encode_decimal(rng.uniform(-4.0, 4.0), FP32)
            v = to_switch_value(word, CFG)
            out = add_exact(state, v, CFG)
            if out.event is not None and out.event.kind is EventKind.HEADROOM_OVERFLOW:
                continue
            state = out.state
            total += value_of(v, CFG)
        bits, status = readout(state, CFG)
        if status.name != "OK":
            continue
        got = Fraction(decodef(bits))
        assert got <= total


def decodef(bits: int) -> float:
    from switchfp.formats import to_float

    return to_float(bits, FP32)
