"""Benchmark harness: container sizes versus baseline byte compressors.

The harness drives the ``agcr`` command-line tool as a subprocess and reads
only its ``--json`` output, so it stays decoupled from the codec's internals.
Baselines compress the same raw little-endian 16-bit pixel stream that the
codec accounts against, making the per-method ratios directly comparable.
"""

from __future__ import annotations

import bz2
import csv
import json
import lzma
import subprocess
import tempfile
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

PD_FORMULA = "PD = 100 * (CR_agcr - CR_other) / CR_other"

IMAGE_SUFFIXES = (".tif", ".tiff")

_BASELINES = {
    "bz2": lambda raw: bz2.compress(raw, 9),
    "lzma": lambda raw: lzma.compress(raw, preset=6),
}


def _pixel_bytes(image: Path) -> bytes:
    """The image's pixels as little-endian 16-bit words, row-major."""
    with Image.open(image) as img:
        arr = np.asarray(img)
    return arr.astype("<u2").tobytes()


def _run_agcr(image: Path, agcr_cmd: str) -> dict:
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / (image.stem + ".agcr")
        try:
            proc = subprocess.run(
                [agcr_cmd, "compress", str(image), str(out), "--json"],
                capture_output=True,
                text=True,
                check=True,
            )
        except FileNotFoundError:
            raise FileNotFoundError(
                f"codec CLI {agcr_cmd!r} not found on PATH"
            ) from None
        return json.loads(proc.stdout)


def _measure(image: Path, method: str, agcr_cmd: str) -> dict:
    if method == "agcr":
        stats = _run_agcr(image, agcr_cmd)
        return {
            "image": image.name,
            "method": "agcr",
            "bytes_in": stats["bytes_in"],
            "bytes_out": stats["bytes_out"],
            "ratio": stats["ratio"],
            "wall_ms": stats["wall_ms"],
        }
    if method not in _BASELINES:
        raise ValueError(f"unknown benchmark method {method!r}")
    raw = _pixel_bytes(image)
    start = time.perf_counter()
    out = _BASELINES[method](raw)
    wall_ms = round((time.perf_counter() - start) * 1000.0, 3)
    return {
        "image": image.name,
        "method": method,
        "bytes_in": len(raw),
        "bytes_out": len(out),
        "ratio": len(raw) / len(out),
        "wall_ms": wall_ms,
    }


def _plot(rows: list[dict], out_dir: Path) -> list[Path]:
    ratios: dict[str, dict[str, float]] = {}
    for r in rows:
        ratios.setdefault(r["image"], {})[r["method"]] = r["ratio"]
    images = sorted(ratios)
    others = sorted({r["method"] for r in rows} - {"agcr"})
    if not others or any("agcr" not in ratios[i] for i in images):
        return []

    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(images)), 4.5))
    width = 0.8 / len(others)
    xs = np.arange(len(images))
    for j, method in enumerate(others):
        pd = [
            100.0 * (ratios[i]["agcr"] - ratios[i][method]) / ratios[i][method]
            for i in images
        ]
        ax.bar(xs + j * width, pd, width, label=f"vs {method}")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels(images, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("percent difference in compression ratio")
    ax.set_title("agcr compression ratio versus baselines")
    ax.legend()
    fig.text(0.01, 0.01, PD_FORMULA, fontsize=8, family="monospace")
    fig.tight_layout(rect=(0, 0.04, 1, 1))

    paths = [out_dir / "bench_report.png", out_dir / "bench_report.svg"]
    for p in paths:
        fig.savefig(p, metadata={"Date": None} if p.suffix == ".svg" else None)
    plt.close(fig)
    return paths


def bench_report(
    corpus_dir: str | Path,
    codecs: tuple[str, ...] = ("agcr", "bz2", "lzma"),
    out_dir: str | Path = ".",
    *,
    repeatable: bool = False,
    agcr_cmd: str = "agcr",
    plots: bool = True,
) -> Path:
    """Benchmark every raster in ``corpus_dir`` with every named method.

    Writes ``bench_report.csv`` (one row per image/method pair) plus
    percent-difference plots into ``out_dir`` and returns the CSV path.
    ``repeatable`` zeroes the wall-clock column so reruns over the same
    corpus produce byte-identical output.
    """
    corpus_dir = Path(corpus_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = sorted(
        p for p in corpus_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not images:
        raise FileNotFoundError(f"no rasters found in {corpus_dir}")

    rows = [
        _measure(image, method, agcr_cmd)
        for image in images
        for method in sorted(set(codecs))
    ]
    if repeatable:
        for r in rows:
            r["wall_ms"] = 0
    rows.sort(key=lambda r: (r["image"], r["method"]))

    csv_path = out_dir / "bench_report.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["image", "method", "bytes_in", "bytes_out", "ratio", "wall_ms"]
        )
        writer.writeheader()
        writer.writerows(rows)

    if plots:
        _plot(rows, out_dir)
    return csv_path
