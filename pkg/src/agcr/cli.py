"""Command-line surface: compress, decompress, inspect, extract-bin,
export-obj, stats.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import json
import os
import sys
import time

import click
import numpy as np

from . import __version__
from .codec import EncodeConfig, decode, encode
from .container import (
    FLAG_LOSSY,
    GEOMETRY_SHAPES,
    STRATEGY_INPLACE,
    ContainerFile,
)
from .backends import backend_name
from .decoder import _decompress_shape_stream, extract_bin
from .errors import AgcrError
from .raster import compute_stats, load_raster, save_raster
from .regions import deserialize_regions

_MODE_NAMES = {0: "binned", 1: "cropped", 2: "mean", 3: "lossy"}


def _default_threads() -> int:
    return os.cpu_count() or 1


def _read_container(path: str) -> ContainerFile:
    with open(path, "rb") as fh:
        return ContainerFile.from_bytes(fh.read())


def _parse_loss(entries: tuple[str, ...]) -> dict[int, object]:
    loss_map: dict[int, object] = {}
    for entry in entries:
        label_s, _, spec = entry.partition(":")
        if not spec:
            raise click.UsageError(f"--loss expects LABEL:SPEC, got {entry!r}")
        try:
            label = int(label_s)
        except ValueError:
            raise click.UsageError(f"--loss label must be an integer: {entry!r}")
        if spec in ("lossless", "mean"):
            loss_map[label] = spec
        else:
            try:
                loss_map[label] = float(spec)
            except ValueError:
                raise click.UsageError(
                    f"--loss spec must be 'lossless', 'mean' or a ratio: {entry!r}"
                )
    return loss_map


@click.group()
@click.version_option(__version__, prog_name="agcr")
def cli() -> None:
    """Region-based lossless and near-lossless raster compression."""


@cli.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_path", type=click.Path(dir_okay=False))
@click.option("--strategy", type=click.Choice(["auto", "inplace", "binned", "mixed"]),
              default="auto", show_default=True)
@click.option("--bins", type=click.IntRange(1, 255), default=None,
              help="Fix the number of intensity bins.")
@click.option("--sigma", type=click.FloatRange(0.0), default=None,
              help="Fix the Gaussian blur width used for region shaping.")
@click.option("--floor", type=click.IntRange(0, 65535), default=None,
              help="Background threshold; intensities below it share one bin.")
@click.option("--reduce", "reduce_", type=click.IntRange(1), default=None,
              help="Cap contour vertices per 100 region pixels (lossy shapes).")
@click.option("--no-reduce", is_flag=True, help="Keep contours exact (default).")
@click.option("--slowest", is_flag=True, help="Exhaustive search over codecs and shape elimination.")
@click.option("--novis", is_flag=True,
              help="Waive shape visualization; store whichever geometry encoding is smaller.")
@click.option("--template", "template_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="8-bit label mask that replaces automatic binning.")
@click.option("--loss", "loss_entries", multiple=True, metavar="LABEL:SPEC",
              help="Per-template-label loss: 'lossless', 'mean', or a wavelet ratio.")
@click.option("--threads", type=click.IntRange(1), default=None,
              help="Worker budget (default: available parallelism).")
@click.option("--json", "as_json", is_flag=True, help="Emit machine-readable stats.")
def compress(input_path, output_path, strategy, bins, sigma, floor, reduce_,
             no_reduce, slowest, novis, template_path, loss_entries, threads,
             as_json) -> None:
    """Compress a raster into an .agcr container."""
    if no_reduce:
        reduce_ = None
    template = None
    loss_map = None
    if template_path is not None:
        t = load_raster(template_path)
        if int(t.pixels.max(initial=0)) > 255:
            raise AgcrError("template labels must fit in 8 bits")
        template = t.pixels.astype(np.uint8)
        loss_map = _parse_loss(loss_entries) if loss_entries else None
    elif loss_entries:
        raise click.UsageError("--loss requires --template")

    raster = load_raster(input_path)
    cfg = EncodeConfig(
        strategy=strategy,
        bins=bins,
        sigma=sigma,
        floor=floor,
        reduce=reduce_,
        slowest=slowest,
        novis=novis,
        threads=threads or _default_threads(),
        template=template,
        loss_map=loss_map,
    )
    start = time.perf_counter()
    container = encode(raster, cfg)
    wall_ms = (time.perf_counter() - start) * 1000.0
    blob = container.to_bytes()
    with open(output_path, "wb") as fh:
        fh.write(blob)

    bytes_in = raster.width * raster.height * 2
    ratio = bytes_in / len(blob) if blob else 0.0
    bin_rows = [
        {
            "tolerance": b.tolerance,
            "mode": _MODE_NAMES.get(b.mode, "?"),
            "codec": backend_name(b.codec) if b.payload else "-",
            "pixels": b.pixel_count,
            "payload_bytes": len(b.payload),
        }
        for b in container.bins
    ]
    if as_json:
        click.echo(json.dumps({
            "input": input_path,
            "output": output_path,
            "width": raster.width,
            "height": raster.height,
            "bytes_in": bytes_in,
            "bytes_out": len(blob),
            "ratio": ratio,
            "strategy": container.strategy_name,
            "bins": bin_rows,
            "wall_ms": wall_ms,
        }))
        return
    click.echo(f"{input_path} -> {output_path}")
    click.echo(f"  {bytes_in} -> {len(blob)} bytes (ratio {ratio:.2f}x), "
               f"strategy {container.strategy_name}, k={container.k}")
    for row in bin_rows:
        click.echo(f"  bin {row['tolerance']:3d}  {row['mode']:<7} "
                   f"{row['codec']:<10} {row['pixels']:>9} px  "
                   f"{row['payload_bytes']:>9} B")


@cli.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_path", type=click.Path(dir_okay=False))
@click.option("--verify", is_flag=True,
              help="Recompute the checksum of the decoded raster and compare.")
@click.option("--threads", type=click.IntRange(1), default=None)
def decompress(input_path, output_path, verify, threads) -> None:
    """Restore a raster from an .agcr container."""
    container = _read_container(input_path)
    raster = decode(container, threads=threads or _default_threads())
    # decode_container already enforces the stored checksum for lossless
    # containers; --verify re-states the result explicitly.
    save_raster(raster, output_path)
    if verify:
        import zlib

        if container.flags & FLAG_LOSSY:
            click.echo("verify: container is lossy; checksum not applicable")
        elif zlib.crc32(raster.tobytes()) & 0xFFFFFFFF == container.crc32:
            click.echo("verify: OK")
        else:  # pragma: no cover - decode would have raised already
            raise AgcrError("checksum mismatch")
    click.echo(f"{input_path} -> {output_path} ({raster.width}x{raster.height})")


@cli.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def inspect(input_path, as_json) -> None:
    """Print container header and bin table without decoding payloads."""
    container = _read_container(input_path)
    info = {
        "file": input_path,
        "size_bytes": os.path.getsize(input_path),
        "strategy": container.strategy_name,
        "flags": container.flags,
        "width": container.width,
        "height": container.height,
        "bit_depth": container.bit_depth,
        "k": container.k,
        "geometry": "shapes" if container.geometry_kind == GEOMETRY_SHAPES
        else ("raster" if container.raster_geometry else "none"),
        "regions": container.shape_stream.region_count if container.shape_stream else 0,
        "crc32": container.crc32,
        "bins": [
            {
                "tolerance": b.tolerance,
                "mode": _MODE_NAMES.get(b.mode, "?"),
                "packed": b.packed,
                "codec": backend_name(b.codec) if b.payload else "-",
                "pixels": b.pixel_count,
                "payload_bytes": len(b.payload),
            }
            for b in container.bins
        ],
    }
    if as_json:
        click.echo(json.dumps(info))
        return
    for key in ("file", "size_bytes", "strategy", "flags", "width", "height",
                "bit_depth", "k", "geometry", "regions"):
        click.echo(f"{key}: {info[key]}")
    for row in info["bins"]:
        click.echo(f"  bin {row['tolerance']:3d}  {row['mode']:<7} "
                   f"{row['codec']:<10} {row['pixels']:>9} px  "
                   f"{row['payload_bytes']:>9} B")


@cli.command("extract-bin")
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("bin_label", type=int)
@click.argument("output_path", type=click.Path(dir_okay=False))
@click.option("--threads", type=click.IntRange(1), default=None)
def extract_bin_cmd(input_path, bin_label, output_path, threads) -> None:
    """Restore one bin's pixels (all others zero) without touching the
    other bins' payloads."""
    container = _read_container(input_path)
    if container.strategy == STRATEGY_INPLACE:
        raise AgcrError(
            "this container uses the in-place strategy; bins are not "
            "independently retrievable"
        )
    raster = extract_bin(container, bin_label, threads=threads or _default_threads())
    save_raster(raster, output_path)
    click.echo(f"bin {bin_label} -> {output_path}")


@cli.command("export-obj")
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_path", type=click.Path(dir_okay=False))
def export_obj(input_path, output_path) -> None:
    """Write region contours as a Wavefront OBJ: one object per region,
    vertex z = bin label, one closed polyline per ring."""
    container = _read_container(input_path)
    if container.geometry_kind != GEOMETRY_SHAPES or container.shape_stream is None:
        raise AgcrError("container carries no shape geometry to export")
    records = deserialize_regions(_decompress_shape_stream(container))
    lines = [f"# exported from {os.path.basename(input_path)}"]
    index = 1
    for i, rec in enumerate(records):
        lines.append(f"o region_{i}")
        rings = [rec.contour.outer] + [h.outer for h in rec.contour.holes]
        for ring in rings:
            first = index
            for x, y in ring:
                lines.append(f"v {x} {y} {rec.tolerance}")
                index += 1
            loop = " ".join(str(j) for j in range(first, index))
            lines.append(f"l {loop} {first}")
    with open(output_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    click.echo(f"{len(records)} regions -> {output_path}")


@cli.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def stats(input_path, as_json) -> None:
    """Print image statistics used by the automatic tuner."""
    raster = load_raster(input_path)
    s = compute_stats(raster)
    info = {
        "file": input_path,
        "width": raster.width,
        "height": raster.height,
        "bit_depth": raster.bit_depth,
        "gini": s.gini,
        "shannon_entropy": s.shannon_entropy,
        "std_dev": s.std_dev,
        "dynamic_range": s.dynamic_range,
        "background_fraction": s.background_fraction,
        "contrast": s.contrast,
    }
    if as_json:
        click.echo(json.dumps(info))
        return
    for key, value in info.items():
        click.echo(f"{key}: {value:.6g}" if isinstance(value, float) else f"{key}: {value}")


def main(argv: list[str] | None = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    # Accept the historical single-dash spelling of --novis.
    args = ["--novis" if a == "-NOVIS" else a for a in args]
    try:
        cli.main(args=args, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except (AgcrError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
