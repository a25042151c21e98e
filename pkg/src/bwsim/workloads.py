"""Workload inputs: layer shapes, deterministic matrices, JSON ingestion.

Matrix generation is pinned down to the bit: a counter-based generator
(Philox) feeds an explicit Box-Muller transform, rows are produced in
fixed 128-row blocks with per-block derived seeds, and quantization is
symmetric about zero.  Any implementation following the same recipe — in
any language — reproduces the same int8 matrices, which is what makes
cycle statistics comparable across runs and machines.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

ROW_BLOCK = 128  # rows generated per derived seed

__all__ = [
    "LayerKind",
    "LayerSpec",
    "GemmShape",
    "MatrixSpec",
    "Workload",
    "UnsupportedLayer",
    "ParseError",
    "img2col_gemm",
    "attention_projections",
    "gen_matrix",
    "load_workload",
    "save_report",
    "preset_names",
    "load_preset",
]


class UnsupportedLayer(ValueError):
    """The layer kind or its parameters cannot be lowered to a GEMM."""


class ParseError(ValueError):
    """A workload file is malformed; the message names the offending field."""


class LayerKind(str, Enum):
    CONV2D = "conv2d"
    DENSE = "dense"
    ATTENTION = "attention"


@dataclass(frozen=True)
class GemmShape:
    m: int
    k: int
    n: int

    def __post_init__(self) -> None:
        if min(self.m, self.k, self.n) < 1:
            raise UnsupportedLayer(f"GEMM dims must be positive, got {self}")


@dataclass(frozen=True)
class LayerSpec:
    """One network layer, carrying only what its kind needs.

    Conv carries channel/kernel geometry plus the output-position count that
    becomes M after im2col; dense carries its GEMM dims directly; attention
    carries the transformer projection parameters.
    """

    kind: LayerKind
    channels_in: int | None = None
    channels_out: int | None = None
    kernel_h: int | None = None
    kernel_w: int | None = None
    out_positions: int = 196
    m: int | None = None
    k: int | None = None
    n: int | None = None
    d_model: int | None = None
    heads: int | None = None
    seq: int | None = None

    def __post_init__(self) -> None:
        needed = {
            LayerKind.CONV2D: ("channels_in", "channels_out", "kernel_h", "kernel_w"),
            LayerKind.DENSE: ("k", "n"),
            LayerKind.ATTENTION: ("d_model", "heads", "seq"),
        }[self.kind]
        for name in needed:
            value = getattr(self, name)
            if value is None or value < 1:
                raise UnsupportedLayer(f"{self.kind.value} layer needs positive {name}")
        if self.out_positions < 1:
            raise UnsupportedLayer("out_positions must be positive")

    @classmethod
    def conv2d(
        cls, channels_in: int, channels_out: int, kernel_h: int, kernel_w: int,
        out_positions: int = 196,
    ) -> "LayerSpec":
        return cls(
            kind=LayerKind.CONV2D,
            channels_in=channels_in,
            channels_out=channels_out,
            kernel_h=kernel_h,
            kernel_w=kernel_w,
            out_positions=out_positions,
        )

    @classmethod
    def dense(cls, k: int, n: int, m: int = 1) -> "LayerSpec":
        return cls(kind=LayerKind.DENSE, m=m, k=k, n=n)

    @classmethod
    def attention(cls, d_model: int, heads: int, seq: int) -> "LayerSpec":
        return cls(kind=LayerKind.ATTENTION, d_model=d_model, heads=heads, seq=seq)


@dataclass(frozen=True)
class MatrixSpec:
    """Recipe for one deterministic random int8 matrix."""

    rows: int
    cols: int
    mean: float = 0.0
    sigma: float = 1.0
    quantization: str = "symmetric-max"
    scale: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if min(self.rows, self.cols) < 1:
            raise ValueError("matrix dims must be positive")
        if self.quantization not in ("symmetric-max", "fixed-scale"):
            raise ValueError(f"unknown quantization {self.quantization!r}")
        if self.quantization == "fixed-scale" and (self.scale is None or self.scale <= 0):
            raise ValueError("fixed-scale quantization needs a positive scale")


@dataclass(frozen=True)
class Workload:
    """A named list of layers plus the matrix recipe that feeds them."""

    name: str
    layers: tuple = ()
    matrix: MatrixSpec | None = None

    def __iter__(self):
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]


# --------------------------------------------------------------------------
# layer lowering


def img2col_gemm(layer: LayerSpec | GemmShape) -> GemmShape:
    """Lower one layer to its GEMM shape.

    Conv flattens the receptive field: K = c_in * k_h * k_w, N = c_out, and
    M is the number of output positions.  Attention lowers to the fused
    QKV projection (the K = d_model matmul the array spends its time in);
    `attention_projections` lists the rest.
    """
    if isinstance(layer, GemmShape):
        return layer
    match layer.kind:
        case LayerKind.CONV2D:
            return GemmShape(
                m=layer.out_positions,
                k=layer.channels_in * layer.kernel_h * layer.kernel_w,
                n=layer.channels_out,
            )
        case LayerKind.DENSE:
            return GemmShape(m=layer.m or 1, k=layer.k, n=layer.n)
        case LayerKind.ATTENTION:
            return GemmShape(m=layer.seq, k=layer.d_model, n=3 * layer.d_model)
    raise UnsupportedLayer(f"cannot lower {layer.kind!r}")  # pragma: no cover


def attention_projections(layer: LayerSpec) -> list[GemmShape]:
    """All weight GEMMs of one attention block: fused QKV plus the output."""
    if layer.kind is not LayerKind.ATTENTION:
        raise UnsupportedLayer("attention_projections needs an attention layer")
    d = layer.d_model
    return [
        GemmShape(m=layer.seq, k=d, n=3 * d),
        GemmShape(m=layer.seq, k=d, n=d),
    ]


# --------------------------------------------------------------------------
# matrix generation


def _standard_normals(seed_key: tuple, count: int) -> np.ndarray:
    """`count` N(0,1) draws from Philox words through explicit Box-Muller."""
    bitgen = np.random.Philox(np.random.SeedSequence(seed_key))
    pairs = (count + 1) // 2
    words = np.random.Generator(bitgen).integers(
        0, 2**64, size=2 * pairs, dtype=np.uint64
    )
    # Top 53 bits -> uniforms; u1 is nudged off zero so the log is finite.
    u1 = ((words[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = (words[pairs:] >> np.uint64(11)).astype(np.float64) * 2.0**-53
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * math.pi * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return z[:count]


def gen_matrix(spec: MatrixSpec) -> np.ndarray:
    """Deterministic int8 matrix realizing a ``MatrixSpec`` recipe.

    Rows come in fixed 128-row blocks, each from its own derived seed, so a
    taller matrix extends a shorter one rather than reshuffling it, and
    blocks can be generated independently.
    """
    blocks = []
    for start in range(0, spec.rows, ROW_BLOCK):
        rows = min(ROW_BLOCK, spec.rows - start)
        z = _standard_normals((spec.seed, start // ROW_BLOCK), rows * spec.cols)
        blocks.append(z.reshape(rows, spec.cols))
    x = np.vstack(blocks) * spec.sigma + spec.mean

    if spec.quantization == "symmetric-max":
        peak = np.abs(x).max()
        if peak == 0.0:
            return np.zeros_like(x, dtype=np.int64)
        q = np.rint(x * (127.0 / peak))
    else:
        q = np.clip(np.rint(x * spec.scale), -127, 127)
    return q.astype(np.int64)


# --------------------------------------------------------------------------
# workload files


def _parse_layer(record: dict, where: str):
    if not isinstance(record, dict):
        raise ParseError(f"{where}: expected an object")
    kind = record.get("kind")
    if kind is None:
        raise ParseError(f"{where}.kind: missing")
    fields = {k: v for k, v in record.items() if k != "kind"}
    try:
        if kind == "gemm":
            return GemmShape(**fields)
        spec_kind = LayerKind(kind)
    except ValueError:
        raise ParseError(f"{where}.kind: unknown layer kind {kind!r}") from None
    except TypeError as exc:
        raise ParseError(f"{where}: {exc}") from None
    try:
        return LayerSpec(kind=spec_kind, **fields)
    except TypeError:
        known = {f for f in LayerSpec.__dataclass_fields__ if f != "kind"}
        bad = sorted(set(fields) - known)
        raise ParseError(f"{where}.{bad[0] if bad else 'params'}: unexpected field") from None
    except UnsupportedLayer as exc:
        raise ParseError(f"{where}: {exc}") from None


def _parse_matrix(record: dict, where: str) -> MatrixSpec:
    if not isinstance(record, dict):
        raise ParseError(f"{where}: expected an object")
    dist = record.get("dist", {})
    if not isinstance(dist, dict):
        raise ParseError(f"{where}.dist: expected an object")
    dims = record.get("dims", [1024, 1024])
    if not (isinstance(dims, (list, tuple)) and len(dims) == 2):
        raise ParseError(f"{where}.dims: expected [rows, cols]")
    try:
        return MatrixSpec(
            rows=int(dims[0]),
            cols=int(dims[1]),
            mean=float(dist.get("mean", 0.0)),
            sigma=float(dist.get("sigma", 1.0)),
            quantization=record.get("quantization", "symmetric-max"),
            scale=record.get("scale"),
            seed=int(record.get("seed", 0)),
        )
    except (ValueError, TypeError) as exc:
        raise ParseError(f"{where}: {exc}") from None


def parse_workload(doc: dict, source: str = "workload") -> Workload:
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: top level must be an object")
    layers_doc = doc.get("layers", [])
    if not isinstance(layers_doc, list):
        raise ParseError(f"{source}.layers: expected a list")
    layers = tuple(
        _parse_layer(rec, f"{source}.layers[{i}]") for i, rec in enumerate(layers_doc)
    )
    matrix = _parse_matrix(doc["matrix"], f"{source}.matrix") if "matrix" in doc else None
    return Workload(name=str(doc.get("name", "unnamed")), layers=layers, matrix=matrix)


def load_workload(path) -> Workload:
    """Load and validate a workload JSON file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name}: line {exc.lineno}: {exc.msg}") from None
    return parse_workload(doc, source=path.name)


def save_report(path, records) -> None:
    """Canonical JSON dump: sorted keys, stable layout, trailing newline."""
    Path(path).write_text(json.dumps(records, indent=2, sort_keys=True) + "\n")


def preset_names() -> list[str]:
    files = resources.files("bwsim.presets")
    return sorted(p.name.removesuffix(".json") for p in files.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> Workload:
    """Load one of the packaged workload presets by name."""
    ref = resources.files("bwsim.presets") / f"{name}.json"
    if not ref.is_file():
        raise ParseError(f"no preset named {name!r}; have {preset_names()}")
    return parse_workload(json.loads(ref.read_text()), source=f"{name}.json")
