"""HTTP service exposing the simulator and analytics over JSON.

The CLI is a thin client of this app: every report it prints is assembled
here, stamped with a run manifest (command, config snapshot, seeds, tool
version, creation time) so that a saved report is self-describing and a
rerun reproduces it byte-for-byte apart from the timestamp.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .analytics import (
    TsyncModel,
    avg_numpp,
    cost_report,
    numpp_distribution,
    tsync_expectation,
    tsync_monte_carlo,
    tsync_saving,
)
from .array_sim import (
    ArrayConfig,
    Dataflow,
    TileSchedule,
    _wrap_to_int32,
    simulate_gemm,
)
from .encoding import DigitScheme
from .pe import PEKind, PEVariant
from .workloads import (
    GemmShape,
    MatrixSpec,
    Workload,
    gen_matrix,
    img2col_gemm,
    load_preset,
    parse_workload,
    preset_names,
)

# ---------------------------------------------------------------------------
# scheme names shared by the CLI and the request schema

#: CLI/service spelling -> DigitScheme factory.  The ``bit-serial-*`` pair
#: distinguishes the two radix-2 digit rules by their sign convention:
#: ``-c`` is the complement form, ``-m`` the magnitude form.
SCHEME_FACTORIES = {
    "mbe": DigitScheme.mbe,
    "bit-serial-c": DigitScheme.twos_complement,
    "bit-serial-m": DigitScheme.sign_magnitude,
    "twos-complement": DigitScheme.twos_complement,
    "sign-magnitude": DigitScheme.sign_magnitude,
}

SCHEME_CHOICES = tuple(SCHEME_FACTORIES) + ("pluggable",)


def parse_scheme(name: str, digit_table=None) -> DigitScheme:
    """Resolve a scheme name as used on the wire into a DigitScheme."""
    if name == "pluggable":
        if digit_table is None:
            raise ValueError("scheme 'pluggable' needs a digit_table")
        return DigitScheme.pluggable(digit_table)
    try:
        factory = SCHEME_FACTORIES[name]
    except KeyError:
        raise ValueError(
            f"unknown scheme {name!r}; choose from {sorted(SCHEME_CHOICES)}"
        ) from None
    if digit_table is not None:
        raise ValueError("digit_table is only accepted with scheme 'pluggable'")
    return factory()


# ---------------------------------------------------------------------------
# request / response models


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Manifest(StrictModel):
    command: str
    config: dict
    seeds: list[int]
    tool_version: str
    created_at: str


def _manifest(command: str, config: dict, seeds: list[int]) -> Manifest:
    return Manifest(
        command=command,
        config=config,
        seeds=seeds,
        tool_version=__version__,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


class HealthResponse(StrictModel):
    status: str
    version: str


class PresetList(StrictModel):
    presets: list[str]


class EncodeStatsRequest(StrictModel):
    scheme: str = "mbe"
    digit_table: list[list[int]] | None = None
    sigma: list[float] = Field(default_factory=list)
    rows: int = Field(default=1024, ge=1)
    cols: int = Field(default=1024, ge=1)
    mean: float = 0.0
    quantization: str = "symmetric-max"
    scale: float | None = None
    seed: int = Field(default=0, ge=0)
    jobs: int = Field(default=1, ge=1, le=64)


class Histogram(StrictModel):
    counts: dict[int, int]
    total: int
    average: float


class SampleAverage(StrictModel):
    sigma: float
    rows: int
    cols: int
    seed: int
    average: float


class EncodeStatsResponse(StrictModel):
    manifest: Manifest
    scheme: str
    table: Histogram
    samples: list[SampleAverage]


class TsyncRequest(StrictModel):
    k: int = Field(ge=1)
    s: float = Field(ge=0.0, le=1.0)
    m_p: int = Field(ge=1)
    mc_trials: int = Field(default=0, ge=0)
    seed: int = Field(default=0, ge=0)


class MonteCarlo(StrictModel):
    trials: int
    mean: float
    stderr: float
    seed: int


class TsyncResponse(StrictModel):
    manifest: Manifest
    k: int
    s: float
    m_p: int
    dense_cycles: int
    expected_cycles: float
    saving_fraction: float
    per_column_mean: float
    per_column_std: float
    monte_carlo: MonteCarlo | None


class ArrayConfigModel(StrictModel):
    """Wire form of an array configuration.

    ``k_p`` is routed by context: the opt2 variant takes it as the operand
    pack width, the cube-3d dataflow as its spatial K lanes, and opt4e pins
    its four group lanes regardless.
    """

    variant: str = "baseline-mac"
    scheme: str = "mbe"
    m_p: int = Field(default=32, ge=1)
    n_p: int = Field(default=32, ge=1)
    k_p: int = Field(default=1, ge=1)
    dataflow: str = "os-2d"
    dk: int = Field(default=1, ge=1)
    acc_width: int = Field(default=32, ge=2, le=64)
    min_cycles_per_operand: int = Field(default=0, ge=0, le=1)

    def build(self) -> ArrayConfig:
        scheme = parse_scheme(self.scheme)
        try:
            kind = PEKind(self.variant)
        except ValueError:
            raise ValueError(
                f"unknown variant {self.variant!r}; choose from "
                f"{sorted(k.value for k in PEKind)}"
            ) from None
        try:
            dataflow = Dataflow(self.dataflow)
        except ValueError:
            raise ValueError(
                f"unknown dataflow {self.dataflow!r}; choose from "
                f"{sorted(d.value for d in Dataflow)}"
            ) from None
        variant_kp = 1
        if kind is PEKind.OPT2:
            variant_kp = self.k_p
        elif kind is PEKind.OPT4E:
            variant_kp = 4
        variant = PEVariant(
            kind=kind,
            scheme=scheme,
            k_p=variant_kp,
            acc_width=self.acc_width,
            min_cycles_per_operand=self.min_cycles_per_operand,
        )
        array_kp = self.k_p if dataflow is Dataflow.CUBE_3D else 1
        return ArrayConfig(
            m_p=self.m_p,
            n_p=self.n_p,
            variant=variant,
            k_p=array_kp,
            dataflow=dataflow,
            dk=self.dk,
        )


class ScheduleModel(StrictModel):
    m_t: int = Field(ge=1)
    n_t: int = Field(ge=1)
    k_t: int = Field(ge=1)
    loop_order: str = "zigzag"


class SimulateRequest(StrictModel):
    preset: str | None = None
    workload: dict | None = None
    config: ArrayConfigModel = Field(default_factory=ArrayConfigModel)
    schedule: ScheduleModel | None = None
    layer_indices: list[int] | None = None
    seed: int | None = Field(default=None, ge=0)
    jobs: int = Field(default=1, ge=1, le=64)


class GemmModel(StrictModel):
    m: int
    k: int
    n: int


class ColumnModel(StrictModel):
    busy: int
    idle: int


class CyclesModel(StrictModel):
    total_cycles: int
    sync_events: int
    per_column: list[ColumnModel]
    busy_min: int
    busy_max: int
    busy_avg: float
    idle_fraction: float


class DiffEntry(StrictModel):
    row: int
    col: int
    got: int
    expected: int


class DiffSummary(StrictModel):
    mismatch_count: int
    first: list[DiffEntry]


class LayerResult(StrictModel):
    index: int
    kind: str
    gemm: GemmModel
    seeds: list[int]
    cycles: CyclesModel
    oracle_match: bool
    diff: DiffSummary | None


class SimulateResponse(StrictModel):
    manifest: Manifest
    workload: str
    layers: list[LayerResult]
    total_cycles: int
    oracle_match: bool


class CostRequest(StrictModel):
    config: ArrayConfigModel = Field(default_factory=ArrayConfigModel)
    nominal_k: int = Field(default=1024, ge=1)


class CostResponse(StrictModel):
    manifest: Manifest
    variant: str
    dataflow: str
    pe_count: int
    nominal_k: int
    components: dict[str, int]


class ValidateRequest(StrictModel):
    workload: dict


class ValidatedLayer(StrictModel):
    index: int
    kind: str
    gemm: GemmModel


class ValidateResponse(StrictModel):
    manifest: Manifest
    name: str
    valid: bool
    layer_count: int
    layers: list[ValidatedLayer]
    matrix: dict | None


# ---------------------------------------------------------------------------
# handlers


def _sample_average(req: EncodeStatsRequest, scheme: DigitScheme, i: int) -> SampleAverage:
    spec = MatrixSpec(
        rows=req.rows,
        cols=req.cols,
        mean=req.mean,
        sigma=req.sigma[i],
        quantization=req.quantization,
        scale=req.scale,
        seed=req.seed + i,
    )
    return SampleAverage(
        sigma=spec.sigma,
        rows=spec.rows,
        cols=spec.cols,
        seed=spec.seed,
        average=avg_numpp(gen_matrix(spec), scheme),
    )


def _encode_stats(req: EncodeStatsRequest) -> EncodeStatsResponse:
    scheme = parse_scheme(req.scheme, req.digit_table)
    hist = numpp_distribution(scheme)
    indices = range(len(req.sigma))
    if req.jobs > 1 and len(req.sigma) > 1:
        with ThreadPoolExecutor(max_workers=req.jobs) as pool:
            samples = list(pool.map(lambda i: _sample_average(req, scheme, i), indices))
    else:
        samples = [_sample_average(req, scheme, i) for i in indices]
    # The manifest snapshot keeps every result-determining field (including a
    # pluggable digit table) and drops scheduling-only knobs, so reports from
    # different --jobs values are byte-identical apart from the timestamp.
    config = req.model_dump(exclude={"jobs"})
    if config.get("digit_table") is None:
        config.pop("digit_table", None)
    return EncodeStatsResponse(
        manifest=_manifest(
            "encode-stats",
            config,
            [req.seed + i for i in indices],
        ),
        scheme=req.scheme,
        table=Histogram(counts=hist.counts, total=hist.total, average=hist.average()),
        samples=samples,
    )


def _tsync(req: TsyncRequest) -> TsyncResponse:
    model = TsyncModel(k=req.k, s=req.s, m_p=req.m_p)
    mc = None
    if req.mc_trials:
        mean, stderr = tsync_monte_carlo(model, req.mc_trials, seed=req.seed)
        mc = MonteCarlo(trials=req.mc_trials, mean=mean, stderr=stderr, seed=req.seed)
    return TsyncResponse(
        manifest=_manifest(
            "tsync", req.model_dump(), [req.seed] if req.mc_trials else []
        ),
        k=req.k,
        s=req.s,
        m_p=req.m_p,
        dense_cycles=req.k,
        expected_cycles=tsync_expectation(model),
        saving_fraction=tsync_saving(model),
        per_column_mean=model.mu,
        per_column_std=model.sigma,
        monte_carlo=mc,
    )


def _layer_seed(base: int, layer_index: int, operand: int) -> int:
    # Distinct stream per (layer, operand side); shifting keeps user bases
    # from ever colliding with a neighbouring layer's streams.
    return (base << 12) + 2 * layer_index + operand


def _run_layer(
    wl: Workload, index: int, cfg: ArrayConfig, sched: TileSchedule | None, seed_base: int
) -> LayerResult:
    layer = wl[index]
    shape: GemmShape = img2col_gemm(layer)
    base = wl.matrix or MatrixSpec(rows=1, cols=1)
    seed_a = _layer_seed(seed_base, index, 0)
    seed_b = _layer_seed(seed_base, index, 1)
    a = gen_matrix(
        MatrixSpec(
            rows=shape.m,
            cols=shape.k,
            mean=base.mean,
            sigma=base.sigma,
            quantization=base.quantization,
            scale=base.scale,
            seed=seed_a,
        )
    )
    b = gen_matrix(
        MatrixSpec(
            rows=shape.k,
            cols=shape.n,
            mean=base.mean,
            sigma=base.sigma,
            quantization=base.quantization,
            scale=base.scale,
            seed=seed_b,
        )
    )
    c, stats = simulate_gemm(a, b, cfg, sched)
    # Independent check: plain product route, no digit planes involved.
    # float64 accumulation is exact here (|sum| <= K * 127^2 << 2^53).
    want = _wrap_to_int32((a.astype(np.float64) @ b.astype(np.float64)).astype(np.int64))
    bad = np.argwhere(c != want)
    diff = None
    if bad.size:
        diff = DiffSummary(
            mismatch_count=int(bad.shape[0]),
            first=[
                DiffEntry(
                    row=int(i), col=int(j), got=int(c[i, j]), expected=int(want[i, j])
                )
                for i, j in bad[:5]
            ],
        )
    kind = layer.kind.value if hasattr(layer, "kind") else "gemm"
    return LayerResult(
        index=index,
        kind=kind,
        gemm=GemmModel(m=shape.m, k=shape.k, n=shape.n),
        seeds=[seed_a, seed_b],
        cycles=CyclesModel(
            total_cycles=stats.total_cycles,
            sync_events=stats.sync_events,
            per_column=[ColumnModel(busy=col.busy, idle=col.idle) for col in stats.per_column],
            busy_min=stats.busy_min,
            busy_max=stats.busy_max,
            busy_avg=stats.busy_avg,
            idle_fraction=stats.idle_fraction,
        ),
        oracle_match=diff is None,
        diff=diff,
    )


def _load_request_workload(preset: str | None, doc: dict | None) -> Workload:
    if (preset is None) == (doc is None):
        raise ValueError("provide exactly one of 'preset' or 'workload'")
    if preset is not None:
        return load_preset(preset)
    return parse_workload(doc, source="request.workload")


def _simulate(req: SimulateRequest) -> SimulateResponse:
    wl = _load_request_workload(req.preset, req.workload)
    cfg = req.config.build()
    sched = None
    if req.schedule is not None:
        sched = TileSchedule(
            m_t=req.schedule.m_t,
            n_t=req.schedule.n_t,
            k_t=req.schedule.k_t,
            loop_order=req.schedule.loop_order,
        )
    indices = req.layer_indices
    if indices is None:
        indices = list(range(len(wl)))
    for i in indices:
        if not 0 <= i < len(wl):
            raise ValueError(f"layer index {i} outside [0, {len(wl)})")
    seed_base = req.seed
    if seed_base is None:
        seed_base = wl.matrix.seed if wl.matrix else 0

    def run(i: int) -> LayerResult:
        return _run_layer(wl, i, cfg, sched, seed_base)

    if req.jobs > 1 and len(indices) > 1:
        with ThreadPoolExecutor(max_workers=req.jobs) as pool:
            layers = list(pool.map(run, indices))
    else:
        layers = [run(i) for i in indices]
    return SimulateResponse(
        manifest=_manifest(
            "simulate",
            req.model_dump(exclude={"jobs"})
            | {"workload_name": wl.name, "layer_indices": list(indices)},
            sorted({s for lr in layers for s in lr.seeds}),
        ),
        workload=wl.name,
        layers=layers,
        total_cycles=sum(lr.cycles.total_cycles for lr in layers),
        oracle_match=all(lr.oracle_match for lr in layers),
    )


def _cost(req: CostRequest) -> CostResponse:
    cfg = req.config.build()
    report = cost_report(cfg, req.nominal_k)
    return CostResponse(
        manifest=_manifest("cost", req.model_dump(), []),
        variant=cfg.variant.kind.value,
        dataflow=cfg.dataflow.value,
        pe_count=cfg.m_p * cfg.n_p * cfg.k_p,
        nominal_k=req.nominal_k,
        components=vars(report).copy(),
    )


def _validate(req: ValidateRequest) -> ValidateResponse:
    wl = parse_workload(req.workload, source="request.workload")
    layers = []
    for i, layer in enumerate(wl):
        shape = img2col_gemm(layer)
        kind = layer.kind.value if hasattr(layer, "kind") else "gemm"
        layers.append(
            ValidatedLayer(
                index=i, kind=kind, gemm=GemmModel(m=shape.m, k=shape.k, n=shape.n)
            )
        )
    matrix = None
    if wl.matrix is not None:
        matrix = {
            "rows": wl.matrix.rows,
            "cols": wl.matrix.cols,
            "mean": wl.matrix.mean,
            "sigma": wl.matrix.sigma,
            "quantization": wl.matrix.quantization,
            "scale": wl.matrix.scale,
            "seed": wl.matrix.seed,
        }
    return ValidateResponse(
        manifest=_manifest("workload-validate", {"name": wl.name}, []),
        name=wl.name,
        valid=True,
        layer_count=len(wl),
        layers=layers,
        matrix=matrix,
    )


# ---------------------------------------------------------------------------
# app factory


def create_app() -> FastAPI:
    app = FastAPI(title="bwsim", version=__version__)

    @app.exception_handler(ValueError)
    async def _value_error(request, exc):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(IndexError)
    async def _index_error(request, exc):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/presets", response_model=PresetList)
    def presets() -> PresetList:
        return PresetList(presets=preset_names())

    @app.post("/encode-stats", response_model=EncodeStatsResponse)
    def encode_stats(req: EncodeStatsRequest) -> EncodeStatsResponse:
        return _encode_stats(req)

    @app.post("/tsync", response_model=TsyncResponse)
    def tsync(req: TsyncRequest) -> TsyncResponse:
        return _tsync(req)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest) -> SimulateResponse:
        return _simulate(req)

    @app.post("/cost", response_model=CostResponse)
    def cost(req: CostRequest) -> CostResponse:
        return _cost(req)

    @app.post("/workload/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest) -> ValidateResponse:
        return _validate(req)

    return app
