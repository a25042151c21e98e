"""Acceptance criteria, one test per criterion, each printing a verdict line.

Every check runs at its stated tolerance against values computed by the
package itself plus independent oracle routes.  Two of the statistical
averaging checks (the complement-form and magnitude-form bands) state bands
that the exhaustively-verified encoders cannot produce — the measured
averages land in each other's bands, i.e. the stated pairing is swapped.
Those two tests fail by design rather than bending the encoders or the
bands; the README documents the expected failures.
"""

import math
import time
from functools import lru_cache

import numpy as np

from bwsim.analytics import (
    TsyncModel,
    avg_numpp,
    cost_report,
    equal_area_speedup,
    numpp_distribution,
    tsync_expectation,
    tsync_monte_carlo,
    tsync_saving,
)
from bwsim.arith import accumulate, mac_reference, to_signed, wrap
from bwsim.array_sim import (
    ArrayConfig,
    Dataflow,
    _wrap_to_int32,
    column_trace,
    simulate_gemm,
)
from bwsim.encoding import DigitScheme, EncodedOperand, encode_mbe, sparse_indices
from bwsim.pe import PEKind, PEVariant, run_pe
from bwsim.workloads import MatrixSpec, gen_matrix, img2col_gemm, load_preset

MBE = DigitScheme.mbe()


def verdict(label: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, f"{label}: {detail}"


def test_criterion_1_exhaustive_encoding_tables():
    t0 = time.perf_counter()
    mbe_hist = numpp_distribution(MBE)
    tc_hist = numpp_distribution(DigitScheme.twos_complement())
    buckets = [
        tc_hist.bucket(8, 7),
        tc_hist.bucket(6, 5),
        tc_hist.bucket(4),
        tc_hist.bucket(3, 2),
        tc_hist.bucket(1, 0),
    ]
    elapsed = time.perf_counter() - t0
    ok = (
        mbe_hist.counts == {4: 81, 3: 108, 2: 54, 1: 12, 0: 1}
        and buckets == [9, 84, 70, 84, 9]
        and elapsed < 1.0
    )
    verdict(
        "criterion 1 (encoding tables, exact, <1s)",
        ok,
        f"radix-4 counts {mbe_hist.counts}, complement buckets {buckets}, {elapsed:.3f}s",
    )


def test_criterion_2_worked_encodings():
    e91 = encode_mbe(91).digits_msb_first
    e124 = encode_mbe(124).digits_msb_first
    probe = EncodedOperand(MBE, 0, (0, 1, 0, 2))  # raw digit vector, value unused
    sparse = tuple(sparse_indices(probe))
    ok = e91 == (1, 2, -1, -1) and e124 == (2, 0, -1, 0) and sparse == (1, 3)
    verdict(
        "criterion 2 (worked encodings, exact)",
        ok,
        f"91 -> {e91}, 124 -> {e124}, sparse(0,1,0,2) -> {list(sparse)}",
    )


@lru_cache(maxsize=1)
def _quantized_normal_averages():
    """Per-sigma averages for all three schemes on 1024x1024 matrices."""
    schemes = {
        "radix-4": MBE,
        "complement": DigitScheme.twos_complement(),
        "magnitude": DigitScheme.sign_magnitude(),
    }
    t0 = time.perf_counter()
    averages = {name: {} for name in schemes}
    for i, sigma in enumerate((0.5, 1.0, 2.5, 5.0)):
        matrix = gen_matrix(MatrixSpec(rows=1024, cols=1024, sigma=sigma, seed=i))
        for name, scheme in schemes.items():
            averages[name][sigma] = avg_numpp(matrix, scheme)
    return averages, time.perf_counter() - t0


def _band_check(name: str, lo: float, hi: float) -> tuple[bool, str]:
    averages, elapsed = _quantized_normal_averages()
    values = averages[name]
    ok = all(lo <= v <= hi for v in values.values()) and elapsed < 10.0
    shown = {s: round(v, 4) for s, v in values.items()}
    return ok, f"measured {shown}, required [{lo:.2f}, {hi:.2f}], {elapsed:.2f}s"


def test_criterion_3a_radix4_average_band():
    ok, detail = _band_check("radix-4", 2.41 - 0.10, 2.46 + 0.10)
    verdict("criterion 3a (radix-4 averages 2.41-2.46 +/- 0.10, <10s)", ok, detail)


def test_criterion_3b_complement_average_band():
    # Stated band 3.52 +/- 0.10.  The exhaustively-verified complement
    # encoder averages 4.0 over all 256 values and ~3.98 on quantized normal
    # data, so this band is not attainable; it matches the magnitude form's
    # measurements instead (the two stated bands are swapped).  Expected FAIL.
    ok, detail = _band_check("complement", 3.52 - 0.10, 3.52 + 0.10)
    verdict("criterion 3b (complement averages 3.52 +/- 0.10)", ok, detail)


def test_criterion_3c_magnitude_average_band():
    # Stated band 3.98 +/- 0.10.  The magnitude form zeroes every bit below
    # the leading one of small values, and symmetric-max normal data is
    # dominated by small magnitudes: measured ~2.45-2.56, provably <= 3.5 for
    # any magnitude-decreasing distribution.  The complement form lands in
    # this band instead (swapped with 3b).  Expected FAIL.
    ok, detail = _band_check("magnitude", 3.98 - 0.10, 3.98 + 0.10)
    verdict("criterion 3c (magnitude averages 3.98 +/- 0.10)", ok, detail)


def test_criterion_4_sync_time_model():
    t0 = time.perf_counter()
    model = TsyncModel(k=576, s=0.38, m_p=32)
    expected = tsync_expectation(model)
    saving = tsync_saving(model)
    mc_mean, mc_stderr = tsync_monte_carlo(model, trials=100_000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = (
        380.0 <= expected <= 382.0
        and abs(saving - 0.338) <= 0.002
        and abs(mc_mean - expected) <= 3 * mc_stderr
        and elapsed < 5.0
    )
    verdict(
        "criterion 4 (sync-time model, exact +/- rounding, <5s)",
        ok,
        f"expectation {expected:.4f}, saving {saving:.4%}, "
        f"monte-carlo {mc_mean:.4f} +/- {mc_stderr:.4f} ({elapsed:.2f}s)",
    )


def _variant_for(kind: PEKind) -> PEVariant:
    k_p = 4 if kind in (PEKind.OPT2, PEKind.OPT4E) else 1
    return PEVariant(kind=kind, k_p=k_p)


def test_criterion_5_functional_equivalence_everywhere():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    gemms = [
        (
            rng.integers(-128, 128, size=(64, 64)),
            rng.integers(-128, 128, size=(64, 64)),
        )
        for _ in range(100)
    ]
    oracles = [
        _wrap_to_int32((a.astype(np.float64) @ b.astype(np.float64)).astype(np.int64))
        for a, b in gemms
    ]
    identity_a = np.arange(-128, 128, dtype=np.int64).reshape(256, 1)
    identity_c = identity_a * identity_a.T  # every 8-bit product, exact

    checked = 0
    for kind in PEKind:
        variant = _variant_for(kind)
        for dataflow in Dataflow:
            cfg = ArrayConfig(
                m_p=8,
                n_p=8,
                variant=variant,
                k_p=2 if dataflow is Dataflow.CUBE_3D else 1,
                dataflow=dataflow,
            )
            for (a, b), want in zip(gemms, oracles):
                got, _ = simulate_gemm(a, b, cfg)
                assert np.array_equal(got, want), (kind, dataflow)
                checked += 1
            got, _ = simulate_gemm(identity_a, identity_a.T, cfg)
            assert np.array_equal(got, identity_c), (kind, dataflow)
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = checked == 6 * 4 * 101 and elapsed < 60.0
    verdict(
        "criterion 5 (functional equivalence, 6 variants x 4 dataflows, <60s)",
        ok,
        f"{checked} GEMMs bit-exact incl. exhaustive 65536-pair identity ({elapsed:.1f}s)",
    )


def test_criterion_6_cycle_laws():
    rng = np.random.default_rng(7)
    details = []
    ok = True
    for k in (1, 7, 64, 576):
        a = rng.integers(-128, 128, size=k).tolist()
        b = rng.integers(-128, 128, size=k).tolist()
        _, base_cycles = run_pe(PEVariant(kind=PEKind.BASELINE_MAC), a, b)
        ok &= base_cycles == k
        nnz = sum(len(sparse_indices(encode_mbe(v))) for v in a)
        for kind in (PEKind.OPT3, PEKind.OPT4C):
            _, cycles = run_pe(PEVariant(kind=kind), a, b)
            ok &= cycles == nnz
        details.append(f"K={k}: dense {base_cycles}, sparse {nnz}")
    zero_col = int(
        column_trace(
            ArrayConfig(m_p=1, n_p=1, variant=PEVariant(kind=PEKind.OPT3)),
            np.zeros(40, dtype=np.int64),
        )
    )
    _, zero_cycles = run_pe(PEVariant(kind=PEKind.OPT3), [0] * 40, [99] * 40)
    ok &= zero_col == 0 and zero_cycles == 0
    verdict(
        "criterion 6 (cycle laws, exact)",
        ok,
        "; ".join(details) + f"; zero column {zero_col} cycles",
    )


def test_criterion_7_shift_decoupling_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    vectors = rng.integers(-(2**31), 2**31, size=(10_000, 64), dtype=np.int64)
    ok = True
    for bw in range(4):
        s = MBE.weight_shift(bw)
        reduce_then_shift = _wrap_to_int32(_wrap_to_int32(vectors.sum(axis=1)) << s)
        shift_then_reduce = _wrap_to_int32(_wrap_to_int32(vectors << s).sum(axis=1))
        ok &= bool(np.array_equal(reduce_then_shift, shift_then_reduce))
        # Scalar route through the arithmetic primitives, sampled.
        for i in range(25):
            acc = 0
            for v in vectors[i]:
                acc = accumulate(acc, int(v))
            one_shift = to_signed(wrap(acc << s, 32), 32)
            acc2 = 0
            for v in vectors[i]:
                acc2 = accumulate(acc2, to_signed(wrap(int(v) << s, 32), 32))
            ok &= one_shift == acc2 == int(reduce_then_shift[i])
    # The identity is what lets the pass variant accumulate unshifted digit
    # lanes and shift once at readout: it must agree with the per-cycle
    # shifting variant on real operand streams.
    for trial in range(20):
        a = rng.integers(-128, 128, size=64).tolist()
        b = rng.integers(-128, 128, size=64).tolist()
        lane_machine, _ = run_pe(PEVariant(kind=PEKind.OPT2, k_p=4), a, b)
        shift_machine, _ = run_pe(PEVariant(kind=PEKind.OPT1), a, b)
        ok &= lane_machine == shift_machine == mac_reference(a, b)
    elapsed = time.perf_counter() - t0
    verdict(
        "criterion 7 (shift decoupling, exact, 10^4 vectors)",
        ok,
        f"4 shift weights x 10000 vectors bit-equal at 32-bit wrap ({elapsed:.1f}s)",
    )


def test_criterion_8_cost_accounting():
    ok = True
    details = []
    for m_p, n_p in ((8, 8), (16, 32), (32, 32), (64, 16)):
        for k in (50, 576, 1024, 4096):
            cfg = ArrayConfig(m_p=m_p, n_p=n_p, variant=PEVariant(kind=PEKind.OPT1))
            adders = cost_report(cfg, k).external_full_adders
            ok &= adders == math.ceil(m_p * n_p / k)
            cfg2 = ArrayConfig(
                m_p=m_p, n_p=n_p, variant=PEVariant(kind=PEKind.OPT2, k_p=4)
            )
            ok &= cost_report(cfg2, k).shifters == 0
            cfg4 = ArrayConfig(m_p=m_p, n_p=n_p, variant=PEVariant(kind=PEKind.OPT4C))
            report4 = cost_report(cfg4, k)
            ok &= report4.encoders == 2 * m_p and report4.sparse_encoders == m_p
    showcase = cost_report(
        ArrayConfig(m_p=32, n_p=32, variant=PEVariant(kind=PEKind.OPT1)), 1024
    )
    ok &= showcase.external_full_adders == 1
    # Column sharing means the encoder count cannot depend on n_p.
    wide = cost_report(
        ArrayConfig(m_p=16, n_p=64, variant=PEVariant(kind=PEKind.OPT4C)), 576
    )
    narrow = cost_report(
        ArrayConfig(m_p=16, n_p=2, variant=PEVariant(kind=PEKind.OPT4C)), 576
    )
    ok &= wide.encoders == narrow.encoders == 32
    details.append(
        f"(32,32,K=1024) adders {showcase.external_full_adders}; "
        f"pass-variant shifters 0; column encoders 2/column across grid"
    )
    verdict("criterion 8 (cost accounting, exact)", ok, "; ".join(details))


def test_criterion_9_substituted_silicon_scale_property():
    t0 = time.perf_counter()
    # Equal-area throughput band: the model is monotone in the average digit
    # count, so checking both band edges covers the whole interval...
    lo_edge = equal_area_speedup(2.5)
    hi_edge = equal_area_speedup(2.2)
    ok = 1.5 <= lo_edge <= hi_edge <= 3.7
    # ...and the shape presets with synthetic normal weights must land inside
    # the conditioning band and hence inside the factor band.
    factors = {}
    for name in ("resnet18", "gpt2", "mobilenetv3", "vit"):
        workload = load_preset(name)
        average = avg_numpp(gen_matrix(workload.matrix), MBE)
        ok &= 2.2 <= average <= 2.5
        factor = equal_area_speedup(average)
        ok &= 1.5 <= factor <= 3.7
        factors[name] = (round(average, 3), round(factor, 3))

    # Idle trend: the short depthwise reduction (K = 9 * channels = 144)
    # leaves columns more spread than the long attention reduction (K = 768).
    cfg = ArrayConfig(m_p=8, n_p=4, variant=PEVariant(kind=PEKind.OPT3))

    def idle_fraction(workload, layer_index: int, seed: int) -> float:
        shape = img2col_gemm(workload[layer_index])
        base = workload.matrix
        a = gen_matrix(
            MatrixSpec(rows=shape.m, cols=shape.k, sigma=base.sigma,
                       quantization=base.quantization,
                       seed=(seed << 12) + 2 * layer_index)
        )
        b = gen_matrix(
            MatrixSpec(rows=shape.k, cols=shape.n, sigma=base.sigma,
                       quantization=base.quantization,
                       seed=(seed << 12) + 2 * layer_index + 1)
        )
        _, stats = simulate_gemm(a, b, cfg)
        return stats.idle_fraction

    mobilenet = load_preset("mobilenetv3")
    gpt2 = load_preset("gpt2")
    assert img2col_gemm(mobilenet[1]).k == 144
    assert img2col_gemm(gpt2[0]).k == 768
    short_k = [idle_fraction(mobilenet, 1, seed) for seed in range(30)]
    long_k = [idle_fraction(gpt2, 0, seed) for seed in range(30)]
    decreases = sum(a > b for a, b in zip(short_k, long_k))
    ok &= decreases == 30
    elapsed = time.perf_counter() - t0
    verdict(
        "criterion 9 (equal-area throughput band + idle trend, >=30 seeds)",
        ok,
        f"factors {factors}; idle {np.mean(short_k):.4f} -> {np.mean(long_k):.4f}, "
        f"strict decrease {decreases}/30 seeds ({elapsed:.1f}s)",
    )
