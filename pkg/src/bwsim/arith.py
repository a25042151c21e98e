"""Bit-exact semantics for the multiplier/accumulator hardware primitives.

Everything here operates on plain Python integers interpreted as fixed-width
two's-complement words. Addition wraps modulo ``2**acc_width`` — a documented,
testable overflow contract rather than an error. Carry-save reduction is
modeled with real compressor steps (XOR sum, majority carry), so the
``(sum, carry)`` split matches what a compressor tree would latch, while the
functional contract is simply value preservation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .encoding import DigitScheme, EncodedOperand, encode

DEFAULT_ACC_WIDTH = 32

__all__ = [
    "DEFAULT_ACC_WIDTH",
    "DigitOutOfRange",
    "ShiftOverflow",
    "ArityMismatch",
    "CandidatePPTable",
    "CarrySaveValue",
    "CompressorSpec",
    "wrap",
    "to_signed",
    "cppg",
    "map_select",
    "shift",
    "half_reduce",
    "add",
    "accumulate",
    "mac_reference",
    "multiply",
]


class DigitOutOfRange(LookupError):
    """A selection digit has no candidate partial product."""


class ShiftOverflow(OverflowError):
    """A shifted partial product does not fit the accumulator width."""


class ArityMismatch(ValueError):
    """More inputs were offered to a compressor tree than it has ports for."""


def wrap(value: int, width: int) -> int:
    """Reduce ``value`` to an unsigned ``width``-bit word."""
    return value & ((1 << width) - 1)


def to_signed(word: int, width: int) -> int:
    """Interpret an unsigned word as two's complement."""
    word = wrap(word, width)
    return word - (1 << width) if word >= 1 << (width - 1) else word


@dataclass(frozen=True)
class CandidatePPTable:
    """The five candidate partial products ``{-2B, -B, 0, B, 2B}`` for one B.

    Attributes:
        multiplier: The B operand the table was built from.
        pp_width: Word width every candidate is representable in.
    """

    multiplier: int
    pp_width: int

    def entry(self, digit: int) -> int:
        if digit not in (-2, -1, 0, 1, 2):
            raise DigitOutOfRange(f"digit {digit} outside the candidate set {{-2..2}}")
        return digit * self.multiplier


def cppg(b: int, operand_width: int = 8) -> CandidatePPTable:
    """Build the candidate-partial-product table for multiplier ``b``.

    Args:
        b: Signed multiplier within the operand range.
        operand_width: Width of ``b`` in bits; candidates occupy two more bits.
    """
    half = 1 << (operand_width - 1)
    if not -half <= b < half:
        raise ValueError(f"multiplier {b} outside {operand_width}-bit range")
    pp_width = operand_width + 2
    # The widest candidate is ±2·(-half); check it really fits the declared width.
    assert -(1 << (pp_width - 1)) <= 2 * b < 1 << (pp_width - 1)
    return CandidatePPTable(b, pp_width)


def map_select(table: CandidatePPTable, digit: int) -> int:
    """Select one candidate partial product (the mux behind a one-hot signal)."""
    return table.entry(digit)


def shift(pp: int, bw: int, scheme: DigitScheme, acc_width: int = DEFAULT_ACC_WIDTH) -> int:
    """Weight a partial product by its bit-weight position.

    Raises:
        ShiftOverflow: If the shifted value is not representable as a signed
            ``acc_width``-bit word.
    """
    result = pp * (1 << scheme.weight_shift(bw))
    half = 1 << (acc_width - 1)
    if not -half <= result < half:
        raise ShiftOverflow(
            f"{pp} << {scheme.weight_shift(bw)} does not fit {acc_width} signed bits"
        )
    return result


@dataclass(frozen=True, eq=False)
class CarrySaveValue:
    """A redundant ``(sum, carry)`` pair; its meaning is the wrapped total.

    Equality and hashing go through :meth:`value` — two states with different
    internal splits but the same total are the same value.
    """

    sum_word: int
    carry_word: int
    acc_width: int = DEFAULT_ACC_WIDTH

    @classmethod
    def zero(cls, acc_width: int = DEFAULT_ACC_WIDTH) -> "CarrySaveValue":
        return cls(0, 0, acc_width)

    def value(self) -> int:
        """The signed total this pair represents."""
        return to_signed(self.sum_word + self.carry_word, self.acc_width)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CarrySaveValue):
            return NotImplemented
        return self.acc_width == other.acc_width and self.value() == other.value()

    def __hash__(self) -> int:
        return hash((self.value(), self.acc_width))


@dataclass(frozen=True)
class CompressorSpec:
    """Shape of a compressor tree: how many addends it folds per cycle.

    A tree of arity ``n`` consumes ``n - 2`` fresh partial products per cycle;
    the remaining two ports recirculate the tree's own sum and carry words.
    """

    arity: int
    acc_width: int = DEFAULT_ACC_WIDTH

    def __post_init__(self) -> None:
        if self.arity not in (3, 4, 6):
            raise ValueError(f"compressor arity must be one of 3/4/6, got {self.arity}")

    @property
    def max_new_inputs(self) -> int:
        return self.arity - 2


def half_reduce(
    inputs: Sequence[int], state: CarrySaveValue, spec: CompressorSpec
) -> CarrySaveValue:
    """Fold fresh addends into a carry-save state through a compressor tree.

    The new state's value is ``wrap(state.value() + sum(inputs))``; internally
    each addend passes through one 3-2 compressor step (bitwise XOR sum,
    majority-carry shifted left), so the stored split is hardware-shaped.

    Raises:
        ArityMismatch: If more inputs are offered than the tree has free ports,
            or the state width disagrees with the tree's accumulator width.
    """
    if len(inputs) > spec.max_new_inputs:
        raise ArityMismatch(
            f"{len(inputs)} inputs exceed the {spec.arity}-2 tree's "
            f"{spec.max_new_inputs} free ports"
        )
    if state.acc_width != spec.acc_width:
        raise ArityMismatch(
            f"state width {state.acc_width} != compressor width {spec.acc_width}"
        )
    w = spec.acc_width
    s, c = state.sum_word, state.carry_word
    for x in inputs:
        xu = wrap(x, w)
        s, c = s ^ c ^ xu, wrap(((s & c) | (s & xu) | (c & xu)) << 1, w)
    return CarrySaveValue(s, c, w)


def add(cs: CarrySaveValue) -> int:
    """Resolve a carry-save pair into one signed word (the full-adder step)."""
    return cs.value()


def accumulate(state: int, value: int, acc_width: int = DEFAULT_ACC_WIDTH) -> int:
    """Wrap-add into a plain accumulator register."""
    return to_signed(state + value, acc_width)


def mac_reference(
    a_vec: Iterable[int], b_vec: Iterable[int], acc_width: int = DEFAULT_ACC_WIDTH
) -> int:
    """Arbitrary-precision dot product, wrapped once at the end.

    This is the oracle every process-element variant is checked against;
    it never touches the encoded-digit path.
    """
    a_list, b_list = list(a_vec), list(b_vec)
    if len(a_list) != len(b_list):
        raise ValueError(f"length mismatch: {len(a_list)} vs {len(b_list)}")
    return to_signed(sum(a * b for a, b in zip(a_list, b_list)), acc_width)


def multiply(
    a: int,
    b: int,
    scheme: DigitScheme | None = None,
    acc_width: int = DEFAULT_ACC_WIDTH,
) -> int:
    """One scalar multiply composed from the primitive chain.

    Encodes ``a``, selects a candidate partial product of ``b`` per digit,
    weights each by its position, and wrap-accumulates — the reference
    composition the process elements implement in hardware form.
    """
    scheme = scheme or DigitScheme.mbe()
    enc: EncodedOperand = encode(a, scheme)
    table = cppg(b, scheme.operand_width)
    total = 0
    for bw, digit in enumerate(enc.digits):
        total = accumulate(total, shift(map_select(table, digit), bw, scheme, acc_width), acc_width)
    return total
