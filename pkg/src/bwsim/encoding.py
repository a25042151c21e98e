"""Signed-digit encoders that split an integer multiplicand into bit-weighted digits.

A multiplication ``a * b`` can be evaluated as a sum of partial products, one
per *bit-weight position*: each encoded digit of ``a`` selects a small multiple
of ``b`` which is then shifted left by the position's weight and accumulated.
This module owns the digit side of that story:

* radix-4 modified Booth recoding (four digits in {-2..2} for an 8-bit operand),
* radix-2 bit-serial forms (two's-complement and sign-magnitude digit streams),
* user-supplied ("pluggable") radix-4 digit tables, validated on registration,
* sparse index extraction (which digit positions are nonzero),
* vectorized digit planes over numpy arrays for whole-matrix statistics.

Digits are stored least-significant-weight first: ``digits[bw]`` carries weight
``2**weight_shift(bw)``.  Display helpers reverse the order because humans read
most-significant first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "SchemeKind",
    "DigitScheme",
    "EncodedOperand",
    "SparseIndexList",
    "SignMagnitudeOverflow",
    "InvalidDigitTable",
    "encode_mbe",
    "encode_bit_serial",
    "encode",
    "decode",
    "sparse_indices",
    "digit_planes",
    "nonzero_digit_counts",
    "zero_digit_fraction",
    "load_digit_table",
    "build_minimal_weight_table",
]

_RADIX4_DIGITS = frozenset({-2, -1, 0, 1, 2})
_RADIX2_DIGITS = frozenset({-1, 0, 1})


class SignMagnitudeOverflow(ValueError):
    """The most negative two's-complement value has no sign-magnitude form."""


class InvalidDigitTable(ValueError):
    """A pluggable digit table failed validation (shape, range, or reconstruction)."""


class SchemeKind(str, Enum):
    """Which digit recoding a :class:`DigitScheme` applies."""

    RADIX4_MBE = "radix4-mbe"
    RADIX2_TWOS_COMPLEMENT = "radix2-twos-complement"
    RADIX2_SIGN_MAGNITUDE = "radix2-sign-magnitude"
    PLUGGABLE_RADIX4 = "pluggable-radix4"

    @property
    def is_radix4(self) -> bool:
        return self in (SchemeKind.RADIX4_MBE, SchemeKind.PLUGGABLE_RADIX4)


@dataclass(frozen=True)
class DigitScheme:
    """A digit recoding rule plus the operand width it applies to.

    Attributes:
        kind: Which recoding family to use.
        operand_width: Operand width in bits. Radix-4 schemes are defined for
            8-bit operands only; radix-2 schemes accept any width up to 32.
        digit_table: For :attr:`SchemeKind.PLUGGABLE_RADIX4` only — a 256-entry
            tuple mapping ``value & 0xFF`` to four digits (least-significant
            weight first). Validated on construction.
    """

    kind: SchemeKind
    operand_width: int = 8
    digit_table: tuple[tuple[int, int, int, int], ...] | None = field(
        default=None, repr=False
    )

    def __post_init__(self) -> None:
        if self.kind.is_radix4 and self.operand_width != 8:
            raise ValueError(
                f"radix-4 schemes are defined for 8-bit operands, got {self.operand_width}"
            )
        if not self.kind.is_radix4 and not (1 <= self.operand_width <= 32):
            raise ValueError(
                f"radix-2 operand width must be in [1, 32], got {self.operand_width}"
            )
        if self.kind is SchemeKind.PLUGGABLE_RADIX4:
            if self.digit_table is None:
                raise InvalidDigitTable("pluggable scheme requires a digit table")
            _validate_digit_table(self.digit_table)
        elif self.digit_table is not None:
            raise ValueError("digit_table is only meaningful for pluggable schemes")

    # --- Derived geometry ---

    @property
    def bw_count(self) -> int:
        """Number of digit positions (the bit-weight loop length)."""
        return self.operand_width // 2 if self.kind.is_radix4 else self.operand_width

    @property
    def digit_set(self) -> frozenset[int]:
        return _RADIX4_DIGITS if self.kind.is_radix4 else _RADIX2_DIGITS

    def weight_shift(self, bw: int) -> int:
        """Left-shift amount, in bits, carried by digit position ``bw``."""
        if not 0 <= bw < self.bw_count:
            raise IndexError(f"bit-weight index {bw} outside [0, {self.bw_count})")
        return 2 * bw if self.kind.is_radix4 else bw

    @property
    def value_range(self) -> tuple[int, int]:
        half = 1 << (self.operand_width - 1)
        if self.kind is SchemeKind.RADIX2_SIGN_MAGNITUDE:
            return (-(half - 1), half - 1)  # the width-bit minimum has no encoding
        return (-half, half - 1)

    # --- Constructors ---

    @classmethod
    def mbe(cls) -> "DigitScheme":
        return cls(SchemeKind.RADIX4_MBE)

    @classmethod
    def twos_complement(cls, operand_width: int = 8) -> "DigitScheme":
        return cls(SchemeKind.RADIX2_TWOS_COMPLEMENT, operand_width)

    @classmethod
    def sign_magnitude(cls, operand_width: int = 8) -> "DigitScheme":
        return cls(SchemeKind.RADIX2_SIGN_MAGNITUDE, operand_width)

    @classmethod
    def pluggable(
        cls, table: Sequence[Sequence[int]]
    ) -> "DigitScheme":
        frozen = tuple(tuple(int(d) for d in row) for row in table)
        return cls(SchemeKind.PLUGGABLE_RADIX4, 8, frozen)  # type: ignore[arg-type]


@dataclass(frozen=True)
class EncodedOperand:
    """An operand decomposed into bit-weighted signed digits.

    Attributes:
        scheme: The recoding that produced the digits.
        source: The original signed integer value.
        digits: One digit per bit-weight position, least-significant first;
            ``sum(d * 2**scheme.weight_shift(i)) == source`` always holds.
    """

    scheme: DigitScheme
    source: int
    digits: tuple[int, ...]

    @property
    def digits_msb_first(self) -> tuple[int, ...]:
        """Digits in display order (most significant weight first)."""
        return tuple(reversed(self.digits))

    @property
    def nonzero_count(self) -> int:
        """How many partial products this operand generates."""
        return sum(1 for d in self.digits if d != 0)

    def __len__(self) -> int:
        return len(self.digits)


@dataclass(frozen=True)
class SparseIndexList:
    """Ascending bit-weight positions holding nonzero digits."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(b >= a for a, b in zip(self.indices[1:], self.indices)):
            raise ValueError("sparse indices must be strictly ascending")

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)


# --- Scalar encoders ---


def _check_range(value: int, scheme: DigitScheme) -> None:
    lo, hi = scheme.value_range
    if not lo <= value <= hi:
        if (
            scheme.kind is SchemeKind.RADIX2_SIGN_MAGNITUDE
            and value == -(1 << (scheme.operand_width - 1))
        ):
            raise SignMagnitudeOverflow(
                f"{value} has no {scheme.operand_width}-bit sign-magnitude representation"
            )
        raise ValueError(f"value {value} outside operand range [{lo}, {hi}]")


def encode_mbe(value: int) -> EncodedOperand:
    """Recode an 8-bit value into four radix-4 Booth digits.

    Each digit examines an overlapping three-bit window of the two's-complement
    pattern: ``digit[bw] = -2*a[2bw+1] + a[2bw] + a[2bw-1]`` with ``a[-1] = 0``.

    Args:
        value: Signed integer in [-128, 127].

    Returns:
        The encoded operand; digits lie in {-2..2} and reconstruct ``value``.
    """
    scheme = DigitScheme.mbe()
    _check_range(value, scheme)
    bits = (value & 0xFF) | 0  # two's-complement pattern
    a = [(bits >> i) & 1 for i in range(8)]
    a_prev = [0] + a[:-1]  # a[2bw-1] with the bw=0 boundary zero
    digits = tuple(
        -2 * a[2 * bw + 1] + a[2 * bw] + a_prev[2 * bw] for bw in range(4)
    )
    return EncodedOperand(scheme, value, digits)


def encode_bit_serial(value: int, representation: str = "twos-complement") -> EncodedOperand:
    """Recode a value into one digit per bit for serial processing.

    Two representations are supported:

    * ``"twos-complement"``: digit ``bw`` is bit ``bw`` of the two's-complement
      pattern, except the top digit which is negated (so the digits reconstruct
      the signed value exactly).
    * ``"sign-magnitude"``: digit ``bw`` is ``sign * magnitude_bit(bw)``. The
      most negative value has no magnitude form and raises.

    Args:
        value: Signed integer within the 8-bit operand range.
        representation: ``"twos-complement"`` or ``"sign-magnitude"``.

    Raises:
        SignMagnitudeOverflow: For -128 under the sign-magnitude form.
    """
    if representation == "twos-complement":
        scheme = DigitScheme.twos_complement()
    elif representation == "sign-magnitude":
        scheme = DigitScheme.sign_magnitude()
    else:
        raise ValueError(f"unknown bit-serial representation: {representation!r}")
    return _encode_radix2(value, scheme)


def _encode_radix2(value: int, scheme: DigitScheme) -> EncodedOperand:
    _check_range(value, scheme)
    w = scheme.operand_width
    if scheme.kind is SchemeKind.RADIX2_TWOS_COMPLEMENT:
        bits = value & ((1 << w) - 1)
        digits = [(bits >> i) & 1 for i in range(w)]
        digits[w - 1] = -digits[w - 1]
    else:
        sign = -1 if value < 0 else 1
        mag = abs(value)
        digits = [sign * ((mag >> i) & 1) for i in range(w)]
    return EncodedOperand(scheme, value, tuple(digits))


def encode(value: int, scheme: DigitScheme) -> EncodedOperand:
    """Encode ``value`` under ``scheme`` (dispatcher over all scheme kinds)."""
    match scheme.kind:
        case SchemeKind.RADIX4_MBE:
            return encode_mbe(value)
        case SchemeKind.RADIX2_TWOS_COMPLEMENT | SchemeKind.RADIX2_SIGN_MAGNITUDE:
            return _encode_radix2(value, scheme)
        case SchemeKind.PLUGGABLE_RADIX4:
            _check_range(value, scheme)
            assert scheme.digit_table is not None  # guaranteed by __post_init__
            return EncodedOperand(scheme, value, scheme.digit_table[value & 0xFF])
    raise ValueError(f"unknown scheme kind: {scheme.kind!r}")  # pragma: no cover


def decode(enc: EncodedOperand) -> int:
    """Reassemble the source value from weighted digits (inverse of encode)."""
    return sum(d * (1 << enc.scheme.weight_shift(i)) for i, d in enumerate(enc.digits))


def sparse_indices(enc: EncodedOperand) -> SparseIndexList:
    """Positions of nonzero digits, ascending — the serial drain order."""
    return SparseIndexList(tuple(i for i, d in enumerate(enc.digits) if d != 0))


# --- Vectorized digit planes (whole-matrix statistics and the array simulator) ---


def digit_planes(values: np.ndarray, scheme: DigitScheme) -> np.ndarray:
    """Encode a whole integer array at once, one plane per bit-weight position.

    Args:
        values: Integer array of any shape, entries within the scheme's range.
        scheme: Digit recoding to apply.

    Returns:
        An ``int8`` array shaped ``(scheme.bw_count, *values.shape)`` where
        plane ``bw`` holds digit ``bw`` of every element. Summing
        ``plane[bw] * 2**weight_shift(bw)`` over planes reproduces ``values``.

    Raises:
        SignMagnitudeOverflow: If a sign-magnitude plane would need -2^(w-1).
    """
    v = np.asarray(values)
    if not np.issubdtype(v.dtype, np.integer):
        raise TypeError(f"digit_planes expects an integer array, got {v.dtype}")
    lo, hi = scheme.value_range
    v64 = v.astype(np.int64)
    w = scheme.operand_width
    if v64.size and (v64.min() < lo or v64.max() > hi):
        if (
            scheme.kind is SchemeKind.RADIX2_SIGN_MAGNITUDE
            and v64.min() == -(1 << (w - 1))
            and v64.max() <= hi
        ):
            raise SignMagnitudeOverflow(
                f"{v64.min()} has no {w}-bit sign-magnitude representation"
            )
        raise ValueError(f"values outside operand range [{lo}, {hi}]")
    u = (v64 & ((1 << w) - 1)).astype(np.uint64)

    match scheme.kind:
        case SchemeKind.RADIX4_MBE:
            a = [((u >> np.uint64(i)) & np.uint64(1)).astype(np.int8) for i in range(8)]
            zero = np.zeros_like(a[0])
            planes = [
                -2 * a[2 * bw + 1] + a[2 * bw] + (a[2 * bw - 1] if bw else zero)
                for bw in range(4)
            ]
            return np.stack(planes)
        case SchemeKind.RADIX2_TWOS_COMPLEMENT:
            planes = [
                ((u >> np.uint64(i)) & np.uint64(1)).astype(np.int8) for i in range(w)
            ]
            planes[w - 1] = -planes[w - 1]
            return np.stack(planes)
        case SchemeKind.RADIX2_SIGN_MAGNITUDE:
            sign = np.where(v64 < 0, -1, 1).astype(np.int8)
            mag = np.abs(v64).astype(np.uint64)
            return np.stack(
                [
                    sign * ((mag >> np.uint64(i)) & np.uint64(1)).astype(np.int8)
                    for i in range(w)
                ]
            )
        case SchemeKind.PLUGGABLE_RADIX4:
            assert scheme.digit_table is not None
            lut = np.asarray(scheme.digit_table, dtype=np.int8)  # (256, 4)
            return np.moveaxis(lut[u.astype(np.intp)], -1, 0)
    raise ValueError(f"unknown scheme kind: {scheme.kind!r}")  # pragma: no cover


def nonzero_digit_counts(values: np.ndarray, scheme: DigitScheme) -> np.ndarray:
    """Per-element count of nonzero digits (partial products generated)."""
    return (digit_planes(values, scheme) != 0).sum(axis=0, dtype=np.int64)


def zero_digit_fraction(values: np.ndarray, scheme: DigitScheme) -> float:
    """Fraction of zero digits across the whole population.

    This is the empirical encoding sparsity ``s`` used by the synchronization
    model when no explicit value is supplied.
    """
    counts = nonzero_digit_counts(values, scheme)
    if counts.size == 0:
        raise ValueError("cannot measure sparsity of an empty array")
    return float(1.0 - counts.mean() / scheme.bw_count)


# --- Pluggable digit tables ---


def _validate_digit_table(table: Sequence[Sequence[int]]) -> None:
    if len(table) != 256:
        raise InvalidDigitTable(f"digit table must have 256 entries, got {len(table)}")
    for u in range(256):
        row = table[u]
        if len(row) != 4:
            raise InvalidDigitTable(f"entry {u}: expected 4 digits, got {len(row)}")
        if any(d not in _RADIX4_DIGITS for d in row):
            raise InvalidDigitTable(f"entry {u}: digits {row} outside {{-2..2}}")
        value = u - 256 if u >= 128 else u
        recon = sum(d * (1 << (2 * i)) for i, d in enumerate(row))
        if recon != value:
            raise InvalidDigitTable(
                f"entry for value {value} reconstructs to {recon}, not {value}"
            )


def load_digit_table(path: str | Path) -> DigitScheme:
    """Load a pluggable radix-4 digit table from JSON.

    The file holds an array of 256 records ``{"value": v, "digits": [d0,d1,d2,d3]}``
    with digits listed least-significant weight first. Every in-range value must
    appear exactly once and every record must reconstruct its value.

    Returns:
        A validated pluggable :class:`DigitScheme`.

    Raises:
        InvalidDigitTable: On malformed records, duplicates, gaps, or any entry
            that fails the reconstruction identity.
    """
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise InvalidDigitTable("digit table file must hold a JSON array")
    rows: dict[int, tuple[int, int, int, int]] = {}
    for i, rec in enumerate(raw):
        if not isinstance(rec, dict) or "value" not in rec or "digits" not in rec:
            raise InvalidDigitTable(f"record {i}: expected {{value, digits}} object")
        value = rec["value"]
        digits = rec["digits"]
        if not isinstance(value, int) or not -128 <= value <= 127:
            raise InvalidDigitTable(f"record {i}: value {value!r} outside [-128, 127]")
        if value & 0xFF in rows:
            raise InvalidDigitTable(f"record {i}: duplicate entry for value {value}")
        if not isinstance(digits, list) or len(digits) != 4:
            raise InvalidDigitTable(f"record {i}: digits must be a 4-element list")
        rows[value & 0xFF] = tuple(int(d) for d in digits)  # type: ignore[assignment]
    if len(rows) != 256:
        raise InvalidDigitTable(f"table covers {len(rows)} of 256 values")
    table = tuple(rows[u] for u in range(256))
    return DigitScheme.pluggable(table)


def build_minimal_weight_table() -> tuple[tuple[int, int, int, int], ...]:
    """Construct a demonstration pluggable table with minimal nonzero digits.

    For every 8-bit value this picks, by exhaustive search over the 5^4 radix-4
    digit vectors, a representation with the fewest nonzero digits (ties broken
    lexicographically on the digit tuple). Useful as a valid, deterministic
    pluggable-table fixture; it is one of many possible minimal recodings.
    """
    best: dict[int, tuple[int, int, int, int]] = {}
    for digits in product((-2, -1, 0, 1, 2), repeat=4):
        value = sum(d * (1 << (2 * i)) for i, d in enumerate(digits))
        if not -128 <= value <= 127:
            continue
        nnz = sum(1 for d in digits if d != 0)
        cur = best.get(value)
        if cur is None:
            best[value] = digits
            continue
        cur_nnz = sum(1 for d in cur if d != 0)
        if (nnz, digits) < (cur_nnz, cur):
            best[value] = digits
    return tuple(best[u - 256 if u >= 128 else u] for u in range(256))
