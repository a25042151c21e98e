"""Statistics and closed-form models over the encoding and array layers.

Four families live here:

* nonzero-digit statistics — exhaustive per-scheme histograms and matrix
  averages, the quantities that decide how many cycles sparse PEs spend;
* the column-synchronization model — the reduction time of a column is the
  max of per-column Binomial(K, 1-s) draws, with a log-space CDF, an exact
  expectation, and a Monte-Carlo cross-check that shares no math with it;
* hardware-cost accounting — component counts per array config, tracking
  what each optimization moves out of the PE or removes outright;
* throughput models, including the equal-silicon-area comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .array_sim import ArrayConfig
from .encoding import DigitScheme, digit_planes, encode
from .pe import GROUP_LANES, PEKind

MC_SHARD = 20_000  # Monte-Carlo trials per deterministic shard

__all__ = [
    "DomainError",
    "NumPPHistogram",
    "TsyncModel",
    "CostReport",
    "numpp_distribution",
    "avg_numpp",
    "tsync_cdf",
    "tsync_expectation",
    "tsync_saving",
    "tsync_monte_carlo",
    "cost_report",
    "throughput_model",
    "equal_area_speedup",
]


class DomainError(ValueError):
    """A model parameter or query point lies outside its legal domain."""


@dataclass(frozen=True)
class NumPPHistogram:
    """Counts of operands by nonzero-digit count, 0..BW inclusive."""

    counts: dict[int, int]
    total: int

    def __post_init__(self) -> None:
        if sum(self.counts.values()) != self.total:
            raise DomainError("histogram counts do not sum to total")

    def average(self) -> float:
        return sum(k * c for k, c in self.counts.items()) / self.total

    def bucket(self, *keys: int) -> int:
        return sum(self.counts.get(k, 0) for k in keys)


@dataclass(frozen=True)
class TsyncModel:
    """Column-sync inputs: reduction length K, digit sparsity s, m_p columns.

    A column's reduction time is X ~ Binomial(K, 1-s) ideal-sparse cycles;
    the barrier waits for the slowest of m_p independent columns.
    """

    k: int
    s: float
    m_p: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise DomainError("K must be >= 1")
        if self.m_p < 1:
            raise DomainError("m_p must be >= 1")
        if not 0.0 <= self.s <= 1.0:
            raise DomainError(f"sparsity {self.s} outside [0, 1]")

    @property
    def mu(self) -> float:
        return self.k * (1.0 - self.s)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.k * self.s * (1.0 - self.s))


@dataclass(frozen=True)
class CostReport:
    """Component counts for one array configuration."""

    encoders: int
    sparse_encoders: int
    cppg_instances: int
    mux_instances: int
    shifters: int
    compressor_input_ports: int
    register_bits_in: int
    register_bits_out: int
    external_full_adders: int
    external_shifters: int

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if value < 0:
                raise DomainError(f"negative component count: {name}")


# --------------------------------------------------------------------------
# nonzero-digit statistics


def numpp_distribution(scheme: DigitScheme) -> NumPPHistogram:
    """Exhaustive nonzero-digit histogram over every encodable operand.

    Deliberately walks the scalar encoder one value at a time — the slow,
    obviously-correct path — so it can serve as an independent check on the
    vectorized statistics.
    """
    if scheme.operand_width != 8:
        raise DomainError("distribution tables are defined for 8-bit operands")
    lo, hi = scheme.value_range
    counts = {k: 0 for k in range(scheme.bw_count + 1)}
    for value in range(lo, hi + 1):
        counts[encode(value, scheme).nonzero_count] += 1
    return NumPPHistogram(counts=counts, total=hi - lo + 1)


def avg_numpp(matrix, scheme: DigitScheme) -> float:
    """Mean nonzero-digit count per element, over the vectorized planes."""
    a = np.asarray(matrix)
    if a.size == 0:
        raise DomainError("empty matrix")
    planes = digit_planes(a, scheme)
    return float((planes != 0).sum() / a.size)


# --------------------------------------------------------------------------
# synchronization-time model


def tsync_cdf(model: TsyncModel, t: float) -> float:
    """P(barrier time <= t): the Binomial CDF raised to the column count.

    Computed in log space so K in the thousands keeps precision even when
    the per-column CDF is tiny.
    """
    if not 0 <= t <= model.k:
        raise DomainError(f"t={t} outside [0, {model.k}]")
    log_f = binom.logcdf(t, model.k, 1.0 - model.s)
    return float(np.exp(model.m_p * log_f))


def tsync_expectation(model: TsyncModel) -> float:
    """E[barrier time], exactly: K - sum of the CDF over t = 0..K-1.

    The t = 0 term is included — it is what makes the degenerate all-zero
    case (s = 1) come out 0 rather than 1.
    """
    ts = np.arange(model.k)
    log_f = binom.logcdf(ts, model.k, 1.0 - model.s)
    return float(model.k - np.exp(model.m_p * log_f).sum())


def tsync_saving(model: TsyncModel) -> float:
    """Fraction of the dense reduction time the barrier model saves."""
    return 1.0 - tsync_expectation(model) / model.k


def tsync_monte_carlo(
    model: TsyncModel, trials: int, seed: int = 0
) -> tuple[float, float]:
    """Sample mean and standard error of max over m_p binomial draws.

    Trials run in fixed-size shards with seeds derived per shard, so the
    result is identical regardless of how the shards are scheduled.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    total = 0.0
    total_sq = 0.0
    done = 0
    shard_index = 0
    while done < trials:
        n = min(MC_SHARD, trials - done)
        rng = np.random.default_rng(np.random.SeedSequence((seed, shard_index)))
        draws = rng.binomial(model.k, 1.0 - model.s, size=(n, model.m_p)).max(axis=1)
        total += float(draws.sum())
        total_sq += float((draws.astype(np.float64) ** 2).sum())
        done += n
        shard_index += 1
    mean = total / trials
    if trials == 1:
        return mean, float("inf")
    var = (total_sq - trials * mean * mean) / (trials - 1)
    return mean, math.sqrt(max(var, 0.0) / trials)


# --------------------------------------------------------------------------
# hardware-cost accounting


def cost_report(cfg: ArrayConfig, nominal_k: int) -> CostReport:
    """Component counts for `cfg` at a nominal reduction length.

    ``nominal_k`` sizes the shared external hardware: one vector-core slice
    (full adder, and for the lane variant a shifter) serves K reductions, so
    the array needs ceil(PEs / K) of them.
    """
    if nominal_k < 1:
        raise DomainError("nominal K must be >= 1")
    v = cfg.variant
    p = cfg.m_p * cfg.n_p * cfg.k_p
    bw = v.scheme.bw_count
    w = v.scheme.operand_width
    digit_bits = 3  # signed digit in {-2..2}
    weight_bits = max(1, (bw - 1).bit_length())
    acc = v.acc_width
    operand_latch = digit_bits * bw + w  # one encoded A + its B word

    kind = v.kind
    shared_adders = -(-p // nominal_k)
    match kind:
        case PEKind.BASELINE_MAC:
            return CostReport(
                encoders=p,
                sparse_encoders=0,
                cppg_instances=p,
                mux_instances=p * bw,
                shifters=p * bw,
                compressor_input_ports=0,  # full adder + register, no CS tree
                register_bits_in=p * operand_latch,
                register_bits_out=p * acc,
                external_full_adders=0,
                external_shifters=0,
            )
        case PEKind.OPT1:
            return CostReport(
                encoders=p,
                sparse_encoders=0,
                cppg_instances=p,
                mux_instances=p * bw,
                shifters=p * bw,
                compressor_input_ports=p * 4,
                register_bits_in=p * operand_latch,
                register_bits_out=p * 2 * acc,
                external_full_adders=shared_adders,
                external_shifters=0,
            )
        case PEKind.OPT2:
            return CostReport(
                encoders=p,
                sparse_encoders=0,
                cppg_instances=p * v.k_p,
                mux_instances=p * v.k_p,
                shifters=0,  # the single post-reduction shift lives outside
                compressor_input_ports=p * (v.k_p + 2),
                register_bits_in=p * v.k_p * operand_latch,
                register_bits_out=p * bw * 2 * acc,
                external_full_adders=shared_adders,
                external_shifters=-(-p * bw // nominal_k),
            )
        case PEKind.OPT3:
            return CostReport(
                encoders=p,
                sparse_encoders=p,
                cppg_instances=p,
                mux_instances=p,  # one wide digit-and-weight select
                shifters=0,
                compressor_input_ports=p * 3,
                register_bits_in=p * v.k_p * operand_latch,
                register_bits_out=p * 2 * acc,
                external_full_adders=shared_adders,
                external_shifters=0,
            )
        case PEKind.OPT4C:
            sel_latch = digit_bits + weight_bits + w
            return CostReport(
                encoders=2 * cfg.m_p,  # two shared per column, zero per PE
                sparse_encoders=cfg.m_p,
                cppg_instances=p,
                mux_instances=p,
                shifters=0,
                compressor_input_ports=p * 3,
                register_bits_in=p * sel_latch,
                register_bits_out=p * 2 * acc,
                external_full_adders=shared_adders,
                external_shifters=0,
            )
        case PEKind.OPT4E:
            sel_latch = digit_bits + weight_bits + w
            groups = -(-p // GROUP_LANES)
            return CostReport(
                encoders=2 * cfg.m_p,
                sparse_encoders=cfg.m_p,
                cppg_instances=p,
                mux_instances=p,
                shifters=0,
                compressor_input_ports=groups * 6,
                register_bits_in=p * sel_latch,
                register_bits_out=groups * 2 * acc,  # output DFFs shared
                external_full_adders=shared_adders,
                external_shifters=0,
            )
    raise ValueError(kind)  # pragma: no cover


# --------------------------------------------------------------------------
# throughput


OPS_PER_MAC = 2  # multiply and accumulate both count, matching TOPS practice


def throughput_model(
    cfg: ArrayConfig, avg_numpp: float, freq_hz: float, pe_count: int
) -> float:
    """Steady-state ops/s for `pe_count` PEs at `freq_hz`.

    Dense variants retire one MAC per PE per cycle; the pass variant needs a
    bit-weight sweep per operand group; sparse variants retire one MAC per
    avg_numpp cycles (OPT4E's four shared lanes come out the same per PE).
    """
    if avg_numpp <= 0:
        raise DomainError("avg_numpp must be positive")
    if freq_hz <= 0 or pe_count < 1:
        raise DomainError("need a positive frequency and at least one PE")
    v = cfg.variant
    match v.kind:
        case PEKind.BASELINE_MAC | PEKind.OPT1:
            macs_per_cycle = float(pe_count)
        case PEKind.OPT2:
            macs_per_cycle = pe_count * v.k_p / v.scheme.bw_count
        case PEKind.OPT3 | PEKind.OPT4C | PEKind.OPT4E:
            macs_per_cycle = pe_count / avg_numpp
        case _:  # pragma: no cover
            raise ValueError(v.kind)
    return OPS_PER_MAC * macs_per_cycle * freq_hz


def equal_area_speedup(
    avg_numpp: float,
    pes_per_mac_area: float = 4.0,
    freq_ratio: float = 2.0,
) -> float:
    """Shared-lane throughput over a parallel MAC of the same silicon area.

    ``pes_per_mac_area`` is how many shared-lane PEs fit where one parallel
    MAC sits; ``freq_ratio`` is their clock advantage.  The shallow select-
    and-compress pipeline both shrinks and closes timing faster, hence the
    defaults; both knobs stay exposed because they are silicon-calibrated,
    not derivable.
    """
    if avg_numpp <= 0:
        raise DomainError("avg_numpp must be positive")
    if pes_per_mac_area <= 0 or freq_ratio <= 0:
        raise DomainError("area and frequency ratios must be positive")
    return pes_per_mac_area * freq_ratio / avg_numpp
