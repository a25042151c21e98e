"""Command-line front end.

Every subcommand is a thin client: it assembles a request, posts it to the
HTTP service (an in-process app by default, or a remote one via --server),
and prints the JSON report — or writes a flat CSV for plotting.  Exit codes:
0 success, 1 verification failure (simulated result disagrees with the
independent product oracle), 2 usage or configuration errors.
"""

from __future__ import annotations

import asyncio
import csv
import json
import sys
from pathlib import Path

import click
import httpx

from .array_sim import Dataflow
from .encoding import load_digit_table
from .pe import PEKind
from .service import SCHEME_CHOICES, create_app

VARIANT_CHOICES = tuple(k.value for k in PEKind)
DATAFLOW_CHOICES = tuple(d.value for d in Dataflow)
# Array commands have no digit-table flag, so the pluggable scheme is
# encode-stats-only.
ARRAY_SCHEME_CHOICES = tuple(c for c in SCHEME_CHOICES if c != "pluggable")


# ---------------------------------------------------------------------------
# transport


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    try:
        if server:
            with httpx.Client(base_url=server, timeout=300.0) as client:
                return client.post(path, json=payload)

        async def go() -> httpx.Response:
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://bwsim", timeout=300.0
            ) as client:
                return await client.post(path, json=payload)

        return asyncio.run(go())
    except httpx.HTTPError as exc:
        click.echo(f"error: cannot reach service: {exc}", err=True)
        sys.exit(2)


def _error_text(resp: httpx.Response) -> str:
    try:
        detail = resp.json().get("detail")
    except (ValueError, AttributeError):
        return resp.text
    if isinstance(detail, list):  # pydantic validation report
        return "; ".join(
            "%s: %s" % (".".join(str(p) for p in item.get("loc", [])), item.get("msg"))
            for item in detail
        )
    return str(detail)


def _deliver(resp: httpx.Response, csv_path: str | None, rows_fn) -> dict:
    """Print or save the report; exit 2 on a rejected request."""
    if resp.status_code != 200:
        click.echo(f"error: {_error_text(resp)}", err=True)
        sys.exit(2)
    report = resp.json()
    if csv_path:
        header, rows = rows_fn(report)
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    else:
        click.echo(json.dumps(report, indent=2, sort_keys=True))
    return report


# ---------------------------------------------------------------------------
# CSV flattenings


def _encode_stats_rows(report: dict):
    rows = [("table", key, count) for key, count in sorted(report["table"]["counts"].items())]
    rows.append(("table", "average", report["table"]["average"]))
    rows.extend(("sample", s["sigma"], s["average"]) for s in report["samples"])
    return ("kind", "key", "value"), rows


def _tsync_rows(report: dict):
    mc = report.get("monte_carlo") or {}
    row = (
        report["k"],
        report["s"],
        report["m_p"],
        report["dense_cycles"],
        report["expected_cycles"],
        report["saving_fraction"],
        mc.get("trials", ""),
        mc.get("mean", ""),
        mc.get("stderr", ""),
    )
    header = (
        "k", "s", "m_p", "dense_cycles", "expected_cycles",
        "saving_fraction", "mc_trials", "mc_mean", "mc_stderr",
    )
    return header, [row]


def _simulate_rows(report: dict):
    header = (
        "index", "kind", "m", "k", "n", "total_cycles", "busy_min",
        "busy_max", "busy_avg", "idle_fraction", "sync_events", "oracle_match",
    )
    rows = [
        (
            layer["index"],
            layer["kind"],
            layer["gemm"]["m"],
            layer["gemm"]["k"],
            layer["gemm"]["n"],
            layer["cycles"]["total_cycles"],
            layer["cycles"]["busy_min"],
            layer["cycles"]["busy_max"],
            layer["cycles"]["busy_avg"],
            layer["cycles"]["idle_fraction"],
            layer["cycles"]["sync_events"],
            layer["oracle_match"],
        )
        for layer in report["layers"]
    ]
    return header, rows


def _cost_rows(report: dict):
    rows = [(name, count) for name, count in sorted(report["components"].items())]
    rows.append(("pe_count", report["pe_count"]))
    return ("component", "count"), rows


def _validate_rows(report: dict):
    header = ("index", "kind", "m", "k", "n")
    rows = [
        (l["index"], l["kind"], l["gemm"]["m"], l["gemm"]["k"], l["gemm"]["n"])
        for l in report["layers"]
    ]
    return header, rows


# ---------------------------------------------------------------------------
# commands


@click.group()
@click.version_option(package_name="bwsim")
def main() -> None:
    """Bit-weight-dimension MAC/TPE simulator and analytics."""


_server_option = click.option(
    "--server", default=None, metavar="URL",
    help="Remote service base URL; default runs the service in-process.",
)
_csv_option = click.option(
    "--csv", "csv_path", default=None, metavar="PATH",
    help="Write a flat CSV to PATH instead of printing JSON.",
)


@main.command("encode-stats")
@click.option("--scheme", default="mbe", type=click.Choice(sorted(SCHEME_CHOICES)))
@click.option("--digit-table", default=None, metavar="FILE",
              help="JSON array of 256 {value, digits} records for --scheme pluggable.")
@click.option("--sigma", multiple=True, type=float,
              help="Sample a quantized normal matrix at this spread (repeatable).")
@click.option("--rows", default=1024, type=int, show_default=True)
@click.option("--cols", default=1024, type=int, show_default=True)
@click.option("--mean", default=0.0, type=float, show_default=True)
@click.option("--quantization", default="symmetric-max",
              type=click.Choice(["symmetric-max", "fixed-scale"]), show_default=True)
@click.option("--scale", default=None, type=float,
              help="Quantizer scale for fixed-scale mode.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--jobs", default=1, type=int, show_default=True,
              help="Sample the sigma grid with this many worker threads.")
@_csv_option
@_server_option
def encode_stats(scheme, digit_table, sigma, rows, cols, mean, quantization,
                 scale, seed, jobs, csv_path, server) -> None:
    """Nonzero-digit histogram of a scheme, plus sampled matrix averages."""
    payload = {
        "scheme": scheme,
        "sigma": list(sigma),
        "rows": rows,
        "cols": cols,
        "mean": mean,
        "quantization": quantization,
        "scale": scale,
        "seed": seed,
        "jobs": jobs,
    }
    if digit_table is not None:
        try:
            table_scheme = load_digit_table(digit_table)
        except (OSError, ValueError) as exc:
            click.echo(f"error: cannot load digit table: {exc}", err=True)
            sys.exit(2)
        payload["digit_table"] = [list(row) for row in table_scheme.digit_table]
    _deliver(_post(server, "/encode-stats", payload), csv_path, _encode_stats_rows)


@main.command()
@click.argument("k", type=int)
@click.argument("s", type=float)
@click.argument("m_p", type=int)
@click.option("--mc", default=0, type=int, show_default=True,
              help="Add a Monte-Carlo column with this many trials.")
@click.option("--seed", default=0, type=int, show_default=True)
@_csv_option
@_server_option
def tsync(k, s, m_p, mc, seed, csv_path, server) -> None:
    """Expected barrier time for M_P columns reducing K sparse operands."""
    payload = {"k": k, "s": s, "m_p": m_p, "mc_trials": mc, "seed": seed}
    _deliver(_post(server, "/tsync", payload), csv_path, _tsync_rows)


def _config_payload(variant, scheme, mp, np_, kp, dataflow, dk, acc_width,
                    min_cycles) -> dict:
    return {
        "variant": variant,
        "scheme": scheme,
        "m_p": mp,
        "n_p": np_,
        "k_p": kp,
        "dataflow": dataflow,
        "dk": dk,
        "acc_width": acc_width,
        "min_cycles_per_operand": min_cycles,
    }


_array_options = [
    click.option("--variant", default="baseline-mac",
                 type=click.Choice(VARIANT_CHOICES), show_default=True),
    click.option("--scheme", default="mbe",
                 type=click.Choice(sorted(ARRAY_SCHEME_CHOICES)), show_default=True),
    click.option("--mp", default=32, type=int, show_default=True,
                 help="Array rows (columns of the sync barrier)."),
    click.option("--np", "np_", default=32, type=int, show_default=True,
                 help="Array columns."),
    click.option("--kp", default=1, type=int, show_default=True,
                 help="Operand pack width (opt2) or spatial K lanes (cube-3d)."),
    click.option("--dataflow", default="os-2d",
                 type=click.Choice(DATAFLOW_CHOICES), show_default=True),
    click.option("--dk", default=1, type=int, show_default=True,
                 help="Bank-rotation stride; must be coprime with --mp."),
    click.option("--acc-width", default=32, type=int, show_default=True),
    click.option("--min-cycles-per-operand", "min_cycles", default=0,
                 type=click.IntRange(0, 1), show_default=True,
                 help="1 charges even all-zero operands one drain cycle."),
]


def _with_array_options(fn):
    for option in reversed(_array_options):
        fn = option(fn)
    return fn


@main.command()
@click.argument("workload_file", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--preset", default=None,
              help="Packaged workload name (see `bwsim workload presets`).")
@_with_array_options
@click.option("--mt", default=None, type=int, help="Tile count along M (with --nt/--kt).")
@click.option("--nt", default=None, type=int, help="Tile count along N.")
@click.option("--kt", default=None, type=int, help="Tile count along K.")
@click.option("--layer", "layers", multiple=True, type=int,
              help="Simulate only these layer indices (repeatable).")
@click.option("--seed", default=None, type=int,
              help="Override the workload's matrix seed.")
@click.option("--jobs", default=1, type=int, show_default=True,
              help="Run layers with this many worker threads.")
@_csv_option
@_server_option
def simulate(workload_file, preset, variant, scheme, mp, np_, kp, dataflow, dk,
             acc_width, min_cycles, mt, nt, kt, layers, seed, jobs, csv_path,
             server) -> None:
    """Run a workload's GEMMs through the array model; verify against oracle."""
    if (workload_file is None) == (preset is None):
        click.echo("error: give a workload file or --preset (not both)", err=True)
        sys.exit(2)
    tiles = (mt, nt, kt)
    if any(t is not None for t in tiles) and None in tiles:
        click.echo("error: --mt/--nt/--kt must be given together", err=True)
        sys.exit(2)
    payload = {
        "preset": preset,
        "config": _config_payload(variant, scheme, mp, np_, kp, dataflow, dk,
                                  acc_width, min_cycles),
        "layer_indices": list(layers) or None,
        "seed": seed,
        "jobs": jobs,
    }
    if workload_file is not None:
        try:
            payload["workload"] = json.loads(Path(workload_file).read_text())
        except ValueError as exc:
            click.echo(f"error: {workload_file}: {exc}", err=True)
            sys.exit(2)
    if mt is not None:
        payload["schedule"] = {"m_t": mt, "n_t": nt, "k_t": kt}
    report = _deliver(_post(server, "/simulate", payload), csv_path, _simulate_rows)
    if not report["oracle_match"]:
        for layer in report["layers"]:
            if layer["oracle_match"]:
                continue
            diff = layer["diff"]
            click.echo(
                f"oracle mismatch: layer {layer['index']} has "
                f"{diff['mismatch_count']} wrong entries; first: {diff['first']}",
                err=True,
            )
        sys.exit(1)


@main.command()
@_with_array_options
@click.option("--nominal-k", default=1024, type=int, show_default=True,
              help="Reduction length the shared external hardware is amortized over.")
@_csv_option
@_server_option
def cost(variant, scheme, mp, np_, kp, dataflow, dk, acc_width, min_cycles,
         nominal_k, csv_path, server) -> None:
    """Component counts for one array configuration."""
    payload = {
        "config": _config_payload(variant, scheme, mp, np_, kp, dataflow, dk,
                                  acc_width, min_cycles),
        "nominal_k": nominal_k,
    }
    _deliver(_post(server, "/cost", payload), csv_path, _cost_rows)


@main.group()
def workload() -> None:
    """Workload file utilities."""


@workload.command()
@click.argument("workload_file", type=click.Path(exists=True, dir_okay=False))
@_csv_option
@_server_option
def validate(workload_file, csv_path, server) -> None:
    """Parse a workload file and report its lowered GEMM shapes."""
    try:
        doc = json.loads(Path(workload_file).read_text())
    except ValueError as exc:
        click.echo(f"error: {workload_file}: {exc}", err=True)
        sys.exit(2)
    _deliver(_post(server, "/workload/validate", {"workload": doc}), csv_path,
             _validate_rows)


@workload.command()
@_server_option
def presets(server) -> None:
    """List the packaged workload presets."""
    if server:
        try:
            with httpx.Client(base_url=server, timeout=60.0) as client:
                resp = client.get("/presets")
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach service: {exc}", err=True)
            sys.exit(2)
    else:
        async def go() -> httpx.Response:
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(transport=transport, base_url="http://bwsim") as client:
                return await client.get("/presets")

        resp = asyncio.run(go())
    if resp.status_code != 200:
        click.echo(f"error: {_error_text(resp)}", err=True)
        sys.exit(2)
    click.echo(json.dumps(resp.json(), indent=2, sort_keys=True))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, type=int, show_default=True)
def serve(host, port) -> None:
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
