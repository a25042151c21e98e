"""Array-level GEMM simulation: tiling, dataflows, sync, operand banking.

The functional result is computed over digit planes — the same signed-digit
decomposition the PEs consume — so it is a genuinely independent route from
the plain integer matmul an oracle uses:

    C = sum over bw of (digits_bw(A) @ B) << weight(bw),  wrapped to 32 bits

Cycle accounting is vectorized from the per-element nonzero-digit counts and
follows each variant's consumption law exactly; a dedicated test drives the
stepped PE state machines over small shapes and checks both the values and
the per-column busy counts against this module.

Column synchronization follows the barrier model: within one output block a
column runs its whole reduction; the block ends when the slowest column does,
and the others are charged idle for the difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .encoding import DigitScheme, digit_planes
from .pe import PEKind, PEVariant

__all__ = [
    "Dataflow",
    "ArrayConfig",
    "TileSchedule",
    "ColumnCycles",
    "CycleStats",
    "BankAddress",
    "ShapeMismatch",
    "IndexOutOfRange",
    "simulate_gemm",
    "sync_barrier",
    "column_trace",
    "layout_a",
    "layout_b",
]


class ShapeMismatch(ValueError):
    """Operand shapes and array/tile configuration do not agree."""


class IndexOutOfRange(IndexError):
    """A layout query addressed an element outside the scheduled volume."""


class Dataflow(str, Enum):
    OUTPUT_STATIONARY_2D = "os-2d"
    WEIGHT_STATIONARY_SYSTOLIC = "ws-systolic"
    CUBE_3D = "cube-3d"
    ADDER_TREE = "adder-tree"


@dataclass(frozen=True)
class ArrayConfig:
    """Spatial array shape plus the PE variant populating it.

    ``k_p`` is the spatial K unroll and is only meaningful for the 3D cube,
    where each (row, column) site holds ``k_p`` lanes splitting the reduction;
    the planar dataflows keep it at 1.  ``dk`` is the bank-rotation stride of
    the operand layout and must be coprime with ``m_p`` for conflict freedom.
    """

    m_p: int
    n_p: int
    variant: PEVariant
    k_p: int = 1
    dataflow: Dataflow = Dataflow.OUTPUT_STATIONARY_2D
    dk: int = 1

    def __post_init__(self) -> None:
        if min(self.m_p, self.n_p, self.k_p) < 1:
            raise ValueError("array dimensions must be >= 1")
        if self.k_p > 1 and self.dataflow is not Dataflow.CUBE_3D:
            raise ValueError("spatial K lanes (k_p > 1) are a cube-3d feature")
        if math.gcd(self.dk, self.m_p) != 1:
            raise ValueError(
                f"dk={self.dk} shares a factor with m_p={self.m_p}; "
                "bank rotation would collide"
            )

    @property
    def column_count(self) -> int:
        return self.n_p if self.dataflow is Dataflow.ADDER_TREE else self.m_p


@dataclass(frozen=True)
class TileSchedule:
    """Temporal loop sizes; the padded volume is (m_t·m_p, n_t·n_p, k_t·k_p)."""

    m_t: int
    n_t: int
    k_t: int
    loop_order: str = "zigzag"

    def __post_init__(self) -> None:
        if min(self.m_t, self.n_t, self.k_t) < 1:
            raise ValueError("tile counts must be >= 1")
        if self.loop_order not in ("zigzag", "raster"):
            raise ValueError(f"unknown loop order {self.loop_order!r}")

    @classmethod
    def for_shape(cls, m: int, n: int, k: int, cfg: ArrayConfig) -> "TileSchedule":
        return cls(
            m_t=-(-m // cfg.m_p),
            n_t=-(-n // cfg.n_p),
            k_t=-(-k // cfg.k_p),
        )


@dataclass(frozen=True)
class ColumnCycles:
    busy: int
    idle: int


@dataclass(frozen=True)
class CycleStats:
    total_cycles: int
    per_column: tuple[ColumnCycles, ...]
    sync_events: int

    @property
    def busy_min(self) -> int:
        return min(c.busy for c in self.per_column)

    @property
    def busy_max(self) -> int:
        return max(c.busy for c in self.per_column)

    @property
    def busy_avg(self) -> float:
        return sum(c.busy for c in self.per_column) / len(self.per_column)

    @property
    def idle_fraction(self) -> float:
        denom = self.total_cycles * len(self.per_column)
        return sum(c.idle for c in self.per_column) / denom if denom else 0.0

    def to_record(self, config: dict | None = None, seed: int | None = None) -> dict:
        return {
            "config": config or {},
            "seed": seed,
            "total_cycles": self.total_cycles,
            "per_column": [{"busy": c.busy, "idle": c.idle} for c in self.per_column],
            "sync_events": self.sync_events,
        }


@dataclass(frozen=True)
class BankAddress:
    bank: int
    offset: int


# --------------------------------------------------------------------------
# operand banking


def layout_a(m: int, k: int, cfg: ArrayConfig, sched: TileSchedule) -> BankAddress:
    """Bank/line of A[m, k] under the K1·MT·K2·MP layout.

    Bank is the low K digit (`k mod m_p`), so the m_p columns can be granted
    rotating, non-colliding banks each cycle.  A bank line holds the m_p row
    words of one (m-tile, k-slot) pair — each column pulls its own word from
    the granted line — so the offset is the line index (m-tile, k-slot)
    lexicographic, and k, k + m_p land on consecutive lines of one bank.
    """
    m_limit = sched.m_t * cfg.m_p
    k_limit = sched.k_t * cfg.k_p
    if not (0 <= m < m_limit and 0 <= k < k_limit):
        raise IndexOutOfRange(f"A[{m},{k}] outside scheduled {m_limit}x{k_limit}")
    k_slots = -(-k_limit // cfg.m_p)
    return BankAddress(
        bank=k % cfg.m_p,
        offset=(m // cfg.m_p) * k_slots + k // cfg.m_p,
    )


def layout_b(k: int, n: int, cfg: ArrayConfig, sched: TileSchedule) -> BankAddress:
    """Mirror layout for B[k, n]: banked by `k mod n_p`, n_p words per line."""
    k_limit = sched.k_t * cfg.k_p
    n_limit = sched.n_t * cfg.n_p
    if not (0 <= k < k_limit and 0 <= n < n_limit):
        raise IndexOutOfRange(f"B[{k},{n}] outside scheduled {k_limit}x{n_limit}")
    k_slots = -(-k_limit // cfg.n_p)
    return BankAddress(
        bank=k % cfg.n_p,
        offset=(n // cfg.n_p) * k_slots + k // cfg.n_p,
    )


def _assert_conflict_free(cfg: ArrayConfig) -> None:
    # Rotating grant: at cycle c, column j is granted bank (c + j*dk) mod m_p.
    # Distinctness across columns every cycle is what the layout promises.
    for c in range(min(2 * cfg.m_p, 64)):
        grants = {(c + j * cfg.dk) % cfg.m_p for j in range(cfg.m_p)}
        if len(grants) != cfg.m_p:
            raise ShapeMismatch(
                f"bank conflict at cycle {c}: {cfg.m_p} columns share {len(grants)} banks"
            )


# --------------------------------------------------------------------------
# cycle laws


def _reduction_cycles(nnz: np.ndarray, variant: PEVariant) -> np.ndarray:
    """Busy cycles to reduce the last axis, per the variant's consumption law.

    ``nnz`` holds nonzero-digit counts; shape (..., L) -> (...,).
    """
    length = nnz.shape[-1]
    bw = variant.scheme.bw_count
    charged = np.maximum(nnz, variant.min_cycles_per_operand)
    match variant.kind:
        case PEKind.BASELINE_MAC | PEKind.OPT1:
            return np.full(nnz.shape[:-1], length, dtype=np.int64)
        case PEKind.OPT2:
            passes = -(-length // variant.k_p) * bw
            return np.full(nnz.shape[:-1], passes, dtype=np.int64)
        case PEKind.OPT3 | PEKind.OPT4C:
            return charged.sum(axis=-1, dtype=np.int64)
        case PEKind.OPT4E:
            return -(-charged.sum(axis=-1, dtype=np.int64) // 4)
    raise ValueError(variant.kind)  # pragma: no cover


def _row_block_cycles(nnz_rows: np.ndarray, cfg: ArrayConfig) -> np.ndarray:
    """Per-row busy cycles for one full reduction, honoring cube lanes.

    ``nnz_rows`` is (rows, K_pad); a cube site finishes when its slowest of
    k_p lanes does, so lane imbalance is a max, not a sum.
    """
    if cfg.k_p == 1:
        return _reduction_cycles(nnz_rows, cfg.variant)
    rows, k_pad = nnz_rows.shape
    lanes = nnz_rows.reshape(rows, k_pad // cfg.k_p, cfg.k_p)
    per_lane = np.stack(
        [_reduction_cycles(lanes[:, :, l], cfg.variant) for l in range(cfg.k_p)]
    )
    return per_lane.max(axis=0)


def sync_barrier(columns) -> int:
    """Barrier time for one block: the slowest column sets the pace."""
    counts = list(columns)
    if not counts:
        raise ValueError("sync_barrier needs at least one column")
    return max(counts)


def column_trace(cfg: ArrayConfig, operands) -> np.ndarray:
    """Busy cycles per column for explicit per-column operand streams.

    ``operands`` is (columns, L) int8-range values — row j is the stream
    column j reduces.  A 1-D stream is treated as a single column.
    """
    a = np.asarray(operands, dtype=np.int64)
    squeeze = a.ndim == 1
    if squeeze:
        a = a[None, :]
    if a.shape[1] % cfg.k_p:  # cube lanes need a whole number of groups
        pad = cfg.k_p - a.shape[1] % cfg.k_p
        a = np.pad(a, ((0, 0), (0, pad)))
    planes = digit_planes(a, cfg.variant.scheme)
    nnz = (planes != 0).sum(axis=0)
    busy = _row_block_cycles(nnz, cfg)
    return busy[0] if squeeze else busy


# --------------------------------------------------------------------------
# the simulator


def _wrap_to_int32(x: np.ndarray) -> np.ndarray:
    return ((x.astype(np.int64) + 2**31) % 2**32 - 2**31).astype(np.int64)


def _functional_gemm(a_pad: np.ndarray, b_pad: np.ndarray, scheme: DigitScheme) -> np.ndarray:
    planes = digit_planes(a_pad, scheme)
    k_pad = a_pad.shape[1]
    # float64 matmul is exact while every partial sum stays below 2^53 and is
    # far faster than numpy's integer matmul; the bound is enormous for int8.
    exact = 2 * 128 * max(k_pad, 1) < 2**53
    acc = np.zeros((a_pad.shape[0], b_pad.shape[1]), dtype=np.int64)
    for bw in range(scheme.bw_count):
        if exact:
            part = (planes[bw].astype(np.float64) @ b_pad.astype(np.float64)).astype(np.int64)
        else:  # pragma: no cover - K beyond 2^45 is not a desk-scale shape
            part = planes[bw].astype(np.int64) @ b_pad.astype(np.int64)
        acc = _wrap_to_int32(acc + (part << scheme.weight_shift(bw)))
    return acc, planes


def simulate_gemm(
    a,
    b,
    cfg: ArrayConfig,
    sched: TileSchedule | None = None,
) -> tuple[np.ndarray, CycleStats]:
    """Run one GEMM through the array model; returns (C, CycleStats).

    C is bit-exact against the wrapped 32-bit integer product for every
    variant and dataflow; the stats follow the dataflow's column/sync model.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch("A and B must be 2-D")
    m, k = a.shape
    kb, n = b.shape
    if k != kb:
        raise ShapeMismatch(f"inner dims differ: A is {m}x{k}, B is {kb}x{n}")
    lo, hi = cfg.variant.scheme.value_range
    if a.size and (a.min() < lo or a.max() > hi):
        raise ShapeMismatch(f"A values outside operand range [{lo}, {hi}]")
    w = cfg.variant.scheme.operand_width
    if b.size and (b.min() < -(1 << w - 1) or b.max() >= 1 << w - 1):
        raise ShapeMismatch(f"B values outside {w}-bit range")

    if sched is None:
        sched = TileSchedule.for_shape(m, n, k, cfg)
    m_pad = sched.m_t * cfg.m_p
    n_pad = sched.n_t * cfg.n_p
    k_pad = sched.k_t * cfg.k_p
    if m_pad < m or n_pad < n or k_pad < k:
        raise ShapeMismatch(
            f"schedule volume {m_pad}x{n_pad}x{k_pad} cannot cover {m}x{n}x{k}"
        )

    _assert_conflict_free(cfg)

    a_pad = np.zeros((m_pad, k_pad), dtype=np.int64)
    a_pad[:m, :k] = a
    b_pad = np.zeros((k_pad, n_pad), dtype=np.int64)
    b_pad[:k, :n] = b

    c_pad, planes = _functional_gemm(a_pad, b_pad, cfg.variant.scheme)
    nnz = (planes != 0).sum(axis=0)

    if cfg.dataflow is Dataflow.ADDER_TREE:
        stats = _adder_tree_stats(nnz, cfg, sched)
    else:
        stats = _column_barrier_stats(nnz, cfg, sched)

    return c_pad[:m, :n], stats


def _column_barrier_stats(
    nnz: np.ndarray, cfg: ArrayConfig, sched: TileSchedule
) -> CycleStats:
    # os-2d, ws-systolic, cube-3d: m_p columns, one barrier per output block.
    # A column's work depends only on its A rows, so each m-tile's block time
    # repeats across the n_t tiles.
    busy = np.zeros(cfg.m_p, dtype=np.int64)
    idle = np.zeros(cfg.m_p, dtype=np.int64)
    total = 0
    for t_m in range(sched.m_t):
        rows = nnz[t_m * cfg.m_p : (t_m + 1) * cfg.m_p]
        block_busy = _row_block_cycles(rows, cfg)
        block_time = sync_barrier(block_busy.tolist())
        busy += block_busy * sched.n_t
        idle += (block_time - block_busy) * sched.n_t
        total += block_time * sched.n_t
    per_column = tuple(
        ColumnCycles(busy=int(bu), idle=int(iv)) for bu, iv in zip(busy, idle)
    )
    return CycleStats(
        total_cycles=int(total),
        per_column=per_column,
        sync_events=sched.m_t * sched.n_t,
    )


def _adder_tree_stats(
    nnz: np.ndarray, cfg: ArrayConfig, sched: TileSchedule
) -> CycleStats:
    # n_p trees each reduce the K axis for one output column; the A stream is
    # broadcast, so every tree keeps pace with every other — no idle.
    per_row = _reduction_cycles(nnz, cfg.variant)
    total = int(per_row.sum()) * sched.n_t
    per_column = tuple(ColumnCycles(busy=total, idle=0) for _ in range(cfg.n_p))
    return CycleStats(
        total_cycles=total,
        per_column=per_column,
        sync_events=nnz.shape[0] * sched.n_t,
    )
