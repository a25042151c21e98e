"""Process-element state machines: bit-exactness and cycle behavior."""

import numpy as np
import pytest

from bwsim.arith import ArityMismatch, mac_reference
from bwsim.encoding import DigitScheme, encode
from bwsim.pe import (
    GROUP_LANES,
    IncompleteStream,
    PEKind,
    PEVariant,
    pe_finalize,
    pe_init,
    pe_step,
    run_pe,
)

ALL_KINDS = list(PEKind)


def make_variant(kind: PEKind, **kw) -> PEVariant:
    if kind is PEKind.OPT4E:
        kw.setdefault("k_p", GROUP_LANES)
    return PEVariant(kind=kind, **kw)


# ---------------------------------------------------------------- validation

def test_opt4e_requires_four_lanes():
    with pytest.raises(ValueError, match="4-lane group"):
        PEVariant(kind=PEKind.OPT4E, k_p=2)


def test_opt2_arity_restricted_to_supported_compressors():
    for k_p in (1, 2, 4):
        PEVariant(kind=PEKind.OPT2, k_p=k_p)
    with pytest.raises(ValueError, match="k_p must be 1, 2, or 4"):
        PEVariant(kind=PEKind.OPT2, k_p=3)


def test_k_p_and_min_cycles_bounds():
    with pytest.raises(ValueError, match="k_p"):
        PEVariant(kind=PEKind.OPT3, k_p=0)
    with pytest.raises(ValueError, match="0/1 flag"):
        PEVariant(kind=PEKind.OPT3, min_cycles_per_operand=2)


# ------------------------------------------------------------ spec'd streams

def test_init_then_finalize_is_zero():
    for kind in ALL_KINDS:
        assert pe_finalize(pe_init(make_variant(kind))) == 0


def test_opt1_two_element_stream():
    result, cycles = run_pe(make_variant(PEKind.OPT1), [91, 15], [2, 3])
    assert result == 91 * 2 + 15 * 3 == 227
    assert cycles == 2


def test_opt3_single_operand_cycle_counts():
    # 124 encodes to two nonzero digits; -1 to a single one.
    assert run_pe(make_variant(PEKind.OPT3), [124], [1]) == (124, 2)
    assert run_pe(make_variant(PEKind.OPT3), [-1], [77]) == (-77, 1)


def test_zero_operand_costs_nothing_by_default():
    for kind in (PEKind.OPT3, PEKind.OPT4C):
        assert run_pe(make_variant(kind), [0], [99]) == (0, 0)


def test_min_cycles_flag_charges_zero_operands():
    for kind in (PEKind.OPT3, PEKind.OPT4C):
        v = make_variant(kind, min_cycles_per_operand=1)
        assert run_pe(v, [0, 0, 5], [9, 9, 9]) == (45, 1 + 1 + 2)
    v = make_variant(PEKind.OPT4E, min_cycles_per_operand=1)
    _, cycles = run_pe(v, [0, 0, 0, 0], [3, 3, 3, 3])
    assert cycles == 1  # four bubbles share one group cycle


def test_baseline_cycle_per_pair():
    rng = np.random.default_rng(11)
    a = rng.integers(-128, 128, size=576).tolist()
    b = rng.integers(-128, 128, size=576).tolist()
    result, cycles = run_pe(make_variant(PEKind.BASELINE_MAC), a, b)
    assert cycles == 576
    assert result == mac_reference(a, b)


def test_opt3_average_cycles_on_quantized_normal_stream():
    # The stream is a slice of a per-tensor-quantized normal draw, the way a
    # real GEMM operand row would be: one scale for the whole tensor.
    rng = np.random.default_rng(7)
    x = rng.normal(0.0, 1.0, size=1 << 16)
    q = np.rint(x * (127.0 / np.abs(x).max())).astype(int)
    a = q[:576].tolist()
    b = rng.integers(-128, 128, size=576).tolist()
    result, cycles = run_pe(make_variant(PEKind.OPT3), a, b)
    assert result == mac_reference(a, b)
    assert 2.3 <= cycles / len(a) <= 2.6


# ----------------------------------------------------------------- cycle laws

def test_opt2_cycle_law():
    rng = np.random.default_rng(3)
    a = rng.integers(-128, 128, size=5).tolist()
    b = rng.integers(-128, 128, size=5).tolist()
    for k_p, want in ((1, 5 * 4), (2, 3 * 4), (4, 2 * 4)):
        result, cycles = run_pe(make_variant(PEKind.OPT2, k_p=k_p), a, b)
        assert cycles == want
        assert result == mac_reference(a, b)


def test_sparse_drain_cycle_law():
    rng = np.random.default_rng(4)
    a = rng.integers(-128, 128, size=37).tolist()
    b = rng.integers(-128, 128, size=37).tolist()
    nnz = sum(encode(v, DigitScheme.mbe()).nonzero_count for v in a)
    _, c3 = run_pe(make_variant(PEKind.OPT3), a, b)
    _, c4c = run_pe(make_variant(PEKind.OPT4C), a, b)
    _, c4e = run_pe(make_variant(PEKind.OPT4E), a, b)
    assert c3 == c4c == nnz
    assert c4e == -(-nnz // GROUP_LANES)


# ---------------------------------------------------------- oracle equivalence

def _random_pairs(rng, length, count):
    for _ in range(count):
        yield (
            rng.integers(-128, 128, size=length).tolist(),
            rng.integers(-128, 128, size=length).tolist(),
        )


@pytest.mark.parametrize("kind", ALL_KINDS, ids=[k.value for k in ALL_KINDS])
def test_oracle_equivalence_sweep(kind):
    # >=1000 pairs per variant, weighted toward short vectors so the long
    # tails still get coverage without dominating the runtime.
    rng = np.random.default_rng(hash(kind.value) % 2**32)
    plan = [(1, 500), (2, 300), (3, 170), (64, 25), (576, 8)]
    assert sum(n for _, n in plan) >= 1000
    variant = make_variant(kind)
    for length, count in plan:
        for a, b in _random_pairs(rng, length, count):
            result, _ = run_pe(variant, a, b)
            assert result == mac_reference(a, b, variant.acc_width)


def test_variants_agree_with_each_other():
    rng = np.random.default_rng(99)
    a = rng.integers(-128, 128, size=64).tolist()
    b = rng.integers(-128, 128, size=64).tolist()
    results = {kind: run_pe(make_variant(kind), a, b)[0] for kind in ALL_KINDS}
    assert len(set(results.values())) == 1


def test_accumulator_wraps_like_oracle():
    # A 16-bit accumulator overflows after two full-scale products; every
    # variant must wrap identically to the oracle rather than saturate.
    a = [127, 127, 127]
    b = [127, 127, 127]
    assert 127 * 127 * 3 > 2**15  # genuinely overflows
    want = mac_reference(a, b, acc_width=16)
    assert want == 127 * 127 * 3 - 2**16
    for kind in ALL_KINDS:
        result, _ = run_pe(make_variant(kind, acc_width=16), a, b)
        assert result == want, kind


def test_debug_mode_checks_partials_every_boundary():
    rng = np.random.default_rng(21)
    a = rng.integers(-128, 128, size=64).tolist()
    b = rng.integers(-128, 128, size=64).tolist()
    for kind in ALL_KINDS:
        result, _ = run_pe(make_variant(kind, k_p=4 if kind is not PEKind.OPT2 else 2), a, b, debug=True)
        assert result == mac_reference(a, b)


# ------------------------------------------------------ stepping and draining

def test_opt3_partial_drain_and_incomplete_stream():
    v = make_variant(PEKind.OPT3)
    state = pe_init(v)
    enc = encode(91, v.scheme)  # four nonzero digits
    assert enc.nonzero_count == 4
    state, out = pe_step(state, [enc], [3], max_cycles=2)
    assert out.cycles_consumed == 2 and out.busy
    with pytest.raises(IncompleteStream, match="2 digits"):
        pe_finalize(state)
    state, out = pe_step(state, [], [])  # drain the remainder
    assert out.cycles_consumed == 2
    assert pe_finalize(state) == 91 * 3


def test_opt3_idle_step_reports_not_busy():
    state = pe_init(make_variant(PEKind.OPT3))
    state, out = pe_step(state, [], [])
    assert out.cycles_consumed == 0
    assert not out.busy


def test_step_arity_is_enforced():
    mbe = DigitScheme.mbe()
    enc = encode(5, mbe)
    cases = [
        (make_variant(PEKind.BASELINE_MAC), [enc, enc], [1, 1]),
        (make_variant(PEKind.OPT2, k_p=2), [enc], [1]),
        (make_variant(PEKind.OPT3, k_p=1), [enc, enc], [1, 1]),
        (make_variant(PEKind.OPT4C), [(1, 0), (1, 1)], [1, 1]),
        (make_variant(PEKind.OPT4E), [(1, 0)] * 5, [1] * 5),
    ]
    for variant, a_in, b_in in cases:
        with pytest.raises(ArityMismatch):
            pe_step(pe_init(variant), a_in, b_in)
    with pytest.raises(ArityMismatch, match="operands vs"):
        pe_step(pe_init(make_variant(PEKind.OPT3)), [enc], [])


def test_opt2_lane_recombination_exhaustive():
    # Every 8-bit (a, b) product appears exactly once, shuffled across 16
    # long streams, so lane recombination is exercised against deep
    # accumulation as well as against every operand pair.
    rng = np.random.default_rng(2**16)
    pairs = np.stack(
        np.meshgrid(np.arange(-128, 128), np.arange(-128, 128)), axis=-1
    ).reshape(-1, 2)
    rng.shuffle(pairs, axis=0)
    variant = make_variant(PEKind.OPT2, k_p=4)
    for stream in np.split(pairs, 16):
        a = stream[:, 0].tolist()
        b = stream[:, 1].tolist()
        result, _ = run_pe(variant, a, b)
        assert result == mac_reference(a, b)
