"""Cycle-stepped models of the six process-element microarchitectures.

Variants, from heaviest to lightest per-PE hardware:

* ``BASELINE_MAC``  - full multiplier + full adder + plain accumulator, one
  multiply-accumulate per cycle.
* ``OPT1``          - the product stays carry-save; a 4-2 compressor replaces
  the full adder and accumulator, with the final add deferred to finalize.
* ``OPT2``          - the bit-weight loop moves to time: each pass folds the
  same-weight digits of ``k_p`` operands unshifted into a per-weight lane;
  the single shift per lane happens once, at finalize (the vector core).
* ``OPT3``          - digits are sparsity-encoded; one nonzero digit drains
  per cycle through a 3-2 compressor, so zero digits cost nothing.
* ``OPT4C``         - like OPT3 but the encoder and sparse encoder live
  outside the PE; each cycle delivers a ready (digit, weight) selection and
  its B word.
* ``OPT4E``         - four OPT4C-style lanes share one 6-2 compressor tree
  and one output register set, draining up to four selections per group cycle.

All variants are bit-exact against `arith.mac_reference` and differ only in
cycle behavior and hardware footprint.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .arith import (
    DEFAULT_ACC_WIDTH,
    ArityMismatch,
    CarrySaveValue,
    CompressorSpec,
    accumulate,
    add,
    cppg,
    half_reduce,
    mac_reference,
    map_select,
    shift,
    to_signed,
    wrap,
)
from .encoding import DigitScheme, EncodedOperand, encode, sparse_indices

GROUP_LANES = 4  # OPT4E lanes sharing one compressor tree

__all__ = [
    "GROUP_LANES",
    "PEKind",
    "PEVariant",
    "PEState",
    "StepOutcome",
    "IncompleteStream",
    "pe_init",
    "pe_step",
    "pe_finalize",
    "run_pe",
]


class IncompleteStream(RuntimeError):
    """Finalize was called while digits were still waiting to drain."""


class PEKind(str, Enum):
    BASELINE_MAC = "baseline-mac"
    OPT1 = "opt1"
    OPT2 = "opt2"
    OPT3 = "opt3"
    OPT4C = "opt4c"
    OPT4E = "opt4e"

    @property
    def is_sparse_drain(self) -> bool:
        """Does this variant skip zero digits cycle-for-cycle?"""
        return self in (PEKind.OPT3, PEKind.OPT4C, PEKind.OPT4E)


@dataclass(frozen=True)
class PEVariant:
    """A PE microarchitecture plus its operating parameters."""

    kind: PEKind
    scheme: DigitScheme = field(default_factory=DigitScheme.mbe)
    k_p: int = 1
    acc_width: int = DEFAULT_ACC_WIDTH
    min_cycles_per_operand: int = 0

    def __post_init__(self) -> None:
        if self.k_p < 1:
            raise ValueError("k_p must be >= 1")
        if self.min_cycles_per_operand not in (0, 1):
            raise ValueError("min_cycles_per_operand is a 0/1 flag")
        if self.kind is PEKind.OPT4E and self.k_p != GROUP_LANES:
            raise ValueError(f"OPT4E is a {GROUP_LANES}-lane group; k_p must be {GROUP_LANES}")
        if self.kind is PEKind.OPT2 and self.k_p + 2 not in (3, 4, 6):
            raise ValueError("OPT2 k_p must be 1, 2, or 4 (compressor arity k_p+2)")


@dataclass
class StepOutcome:
    cycles_consumed: int
    emitted: int | None = None
    busy: bool = True


@dataclass
class PEState:
    variant: PEVariant
    cycle_count: int = 0
    acc_plain: int = 0
    acc_cs: CarrySaveValue = None  # type: ignore[assignment]
    lanes: list[CarrySaveValue] = field(default_factory=list)
    pending: deque = field(default_factory=deque)  # (digit, bw, b) awaiting drain
    consumed_a: list[int] = field(default_factory=list)
    consumed_b: list[int] = field(default_factory=list)

    def partial_value(self) -> int:
        """The dot product of everything consumed so far, reconstructed."""
        v = self.variant
        match v.kind:
            case PEKind.BASELINE_MAC:
                return self.acc_plain
            case PEKind.OPT2:
                total = 0
                for bw, lane in enumerate(self.lanes):
                    shifted = to_signed(
                        wrap(add(lane), v.acc_width) << v.scheme.weight_shift(bw),
                        v.acc_width,
                    )
                    total = accumulate(total, shifted, v.acc_width)
                return total
            case _:
                return add(self.acc_cs)


def pe_init(variant: PEVariant) -> PEState:
    state = PEState(variant=variant, acc_cs=CarrySaveValue.zero(variant.acc_width))
    if variant.kind is PEKind.OPT2:
        state.lanes = [
            CarrySaveValue.zero(variant.acc_width) for _ in range(variant.scheme.bw_count)
        ]
    return state


def _fold_product_cs(
    enc: EncodedOperand, b: int, variant: PEVariant
) -> CarrySaveValue:
    # The multiplier-internal compressor tree: all shifted PPs of one product.
    spec = CompressorSpec(3, variant.acc_width)
    table = cppg(b, variant.scheme.operand_width)
    cs = CarrySaveValue.zero(variant.acc_width)
    for bw, digit in enumerate(enc.digits):
        pp = shift(map_select(table, digit), bw, variant.scheme, variant.acc_width)
        cs = half_reduce([pp], cs, spec)
    return cs


def _drain_one(state: PEState, spec: CompressorSpec) -> None:
    digit, bw, b = state.pending.popleft()
    v = state.variant
    pp = shift(map_select(cppg(b, v.scheme.operand_width), digit), bw, v.scheme, v.acc_width)
    state.acc_cs = half_reduce([pp], state.acc_cs, spec)


def _queue_operand(state: PEState, enc: EncodedOperand, b: int) -> None:
    v = state.variant
    entries = [(enc.digits[bw], bw, b) for bw in sparse_indices(enc)]
    if not entries and v.min_cycles_per_operand:
        entries = [(0, 0, b)]  # a bubble: selects the zero candidate for one cycle
    state.pending.extend(entries)


def pe_step(
    state: PEState,
    a_inputs: Sequence,
    b_inputs: Sequence[int],
    max_cycles: int | None = None,
) -> tuple[PEState, StepOutcome]:
    """Advance one PE by one ingestion step.

    Input shapes by variant: BASELINE/OPT1 take one encoded operand and one B
    word; OPT2 takes ``k_p`` of each and burns one pass per bit-weight; OPT3
    latches up to ``k_p`` pairs then drains nonzero digits one per cycle
    (``max_cycles`` caps the drain for partial stepping); OPT4C takes one
    pre-encoded ``(digit, bw)`` selection with its B word; OPT4E takes up to
    four selections, one group cycle.
    """
    v = state.variant
    if len(a_inputs) != len(b_inputs):
        raise ArityMismatch(f"{len(a_inputs)} operands vs {len(b_inputs)} B words")

    match v.kind:
        case PEKind.BASELINE_MAC | PEKind.OPT1:
            if len(a_inputs) != 1:
                raise ArityMismatch(f"{v.kind.value} consumes exactly one pair per cycle")
            enc, b = a_inputs[0], b_inputs[0]
            prod = _fold_product_cs(enc, b, v)
            if v.kind is PEKind.BASELINE_MAC:
                state.acc_plain = accumulate(state.acc_plain, add(prod), v.acc_width)
            else:
                state.acc_cs = half_reduce(
                    [prod.sum_word, prod.carry_word],
                    state.acc_cs,
                    CompressorSpec(4, v.acc_width),
                )
            state.consumed_a.append(enc.source)
            state.consumed_b.append(b)
            cycles = 1

        case PEKind.OPT2:
            if len(a_inputs) != v.k_p:
                raise ArityMismatch(f"OPT2 consumes k_p={v.k_p} pairs per pass group")
            tables = [cppg(b, v.scheme.operand_width) for b in b_inputs]
            spec = CompressorSpec(v.k_p + 2, v.acc_width)
            for bw in range(v.scheme.bw_count):
                pps = [
                    map_select(t, enc.digits[bw])  # unshifted: the lane owns the weight
                    for enc, t in zip(a_inputs, tables)
                ]
                state.lanes[bw] = half_reduce(pps, state.lanes[bw], spec)
            state.consumed_a.extend(e.source for e in a_inputs)
            state.consumed_b.extend(b_inputs)
            cycles = v.scheme.bw_count

        case PEKind.OPT3:
            if len(a_inputs) > v.k_p:
                raise ArityMismatch(f"OPT3 latches at most k_p={v.k_p} operands")
            for enc, b in zip(a_inputs, b_inputs):
                _queue_operand(state, enc, b)
                state.consumed_a.append(enc.source)
                state.consumed_b.append(b)
            spec = CompressorSpec(3, v.acc_width)
            cycles = 0
            while state.pending and (max_cycles is None or cycles < max_cycles):
                _drain_one(state, spec)
                cycles += 1

        case PEKind.OPT4C:
            if len(a_inputs) != 1:
                raise ArityMismatch("OPT4C consumes one (digit, bw) selection per cycle")
            (digit, bw), b = a_inputs[0], b_inputs[0]
            pp = shift(
                map_select(cppg(b, v.scheme.operand_width), digit), bw, v.scheme, v.acc_width
            )
            state.acc_cs = half_reduce([pp], state.acc_cs, CompressorSpec(3, v.acc_width))
            cycles = 1

        case PEKind.OPT4E:
            if not 1 <= len(a_inputs) <= GROUP_LANES:
                raise ArityMismatch(f"OPT4E drains 1..{GROUP_LANES} selections per group cycle")
            pps = [
                shift(
                    map_select(cppg(b, v.scheme.operand_width), digit),
                    bw,
                    v.scheme,
                    v.acc_width,
                )
                for (digit, bw), b in zip(a_inputs, b_inputs)
            ]
            state.acc_cs = half_reduce(pps, state.acc_cs, CompressorSpec(6, v.acc_width))
            cycles = 1

        case _:  # pragma: no cover
            raise ValueError(f"unknown PE kind {v.kind!r}")

    state.cycle_count += cycles
    return state, StepOutcome(cycles_consumed=cycles, busy=cycles > 0)


def pe_finalize(state: PEState) -> int:
    """Resolve the accumulated state into one signed output word."""
    if state.pending:
        raise IncompleteStream(f"{len(state.pending)} digits still queued")
    return state.partial_value()


def _expected_cycles(variant: PEVariant, encs: Sequence[EncodedOperand]) -> int:
    n = len(encs)
    match variant.kind:
        case PEKind.BASELINE_MAC | PEKind.OPT1:
            return n
        case PEKind.OPT2:
            return math.ceil(n / variant.k_p) * variant.scheme.bw_count
        case PEKind.OPT3 | PEKind.OPT4C:
            return sum(
                max(e.nonzero_count, variant.min_cycles_per_operand) for e in encs
            )
        case PEKind.OPT4E:
            work = sum(
                max(e.nonzero_count, variant.min_cycles_per_operand) for e in encs
            )
            return math.ceil(work / GROUP_LANES)
    raise ValueError(variant.kind)  # pragma: no cover


def run_pe(
    variant: PEVariant,
    a_vec: Sequence[int],
    b_vec: Sequence[int],
    debug: bool = False,
) -> tuple[int, int]:
    """Drive one PE over a full operand stream; returns (result, cycles).

    With ``debug=True`` the carry-save invariant is checked at every operand
    boundary: the state's reconstructible partial value must equal the oracle
    prefix dot product.
    """
    if len(a_vec) != len(b_vec):
        raise ValueError("operand vectors must have equal length")
    v = variant
    encs = [encode(a, v.scheme) for a in a_vec]
    state = pe_init(v)
    total_cycles = 0

    def check(upto: int) -> None:
        if debug:
            expect = mac_reference(a_vec[:upto], b_vec[:upto], v.acc_width)
            got = state.partial_value()
            assert got == expect, f"partial {got} != oracle {expect} after {upto} operands"

    match v.kind:
        case PEKind.BASELINE_MAC | PEKind.OPT1:
            for i, (enc, b) in enumerate(zip(encs, b_vec)):
                state, out = pe_step(state, [enc], [b])
                total_cycles += out.cycles_consumed
                check(i + 1)
        case PEKind.OPT2:
            zero_enc = encode(0, v.scheme)
            for g in range(0, len(encs), v.k_p):
                group_a = list(encs[g : g + v.k_p])
                group_b = list(b_vec[g : g + v.k_p])
                while len(group_a) < v.k_p:  # zero-pad the trailing group
                    group_a.append(zero_enc)
                    group_b.append(0)
                state, out = pe_step(state, group_a, group_b)
                total_cycles += out.cycles_consumed
                check(min(g + v.k_p, len(encs)))
        case PEKind.OPT3:
            for g in range(0, len(encs), v.k_p):
                state, out = pe_step(
                    state, encs[g : g + v.k_p], list(b_vec[g : g + v.k_p])
                )
                total_cycles += out.cycles_consumed
                check(min(g + v.k_p, len(encs)))
        case PEKind.OPT4C | PEKind.OPT4E:
            # Encoding and sparse extraction happen outside the PE.
            sels: list[tuple[tuple[int, int], int]] = []
            for enc, b in zip(encs, b_vec):
                picks = [((enc.digits[bw], bw), b) for bw in sparse_indices(enc)]
                if not picks and v.min_cycles_per_operand:
                    picks = [((0, 0), b)]
                sels.extend(picks)
            chunk = 1 if v.kind is PEKind.OPT4C else GROUP_LANES
            for g in range(0, len(sels), chunk):
                part = sels[g : g + chunk]
                state, out = pe_step(
                    state, [s for s, _ in part], [b for _, b in part]
                )
                total_cycles += out.cycles_consumed
            check(len(encs))

    result = pe_finalize(state)
    assert total_cycles == _expected_cycles(v, encs)
    return result, total_cycles
