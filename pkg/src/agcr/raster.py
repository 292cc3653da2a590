"""16-bit grayscale raster I/O and the image statistics that drive configuration.

Supported inputs: single-channel TIFF (8/16-bit) and the trivial ``AGRW``
raw fixture format (magic + width + height + depth + little-endian u16
samples). Anything else is rejected rather than silently converted.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import UnsupportedFormatError

_RAW_MAGIC = b"AGRW"

# Pillow modes we accept and their sample depth.
_MODE_DEPTH = {"L": 8, "I;16": 16, "I;16L": 16, "I;16B": 16}


@dataclass(frozen=True)
class Raster:
    """A single-channel image: row-major unsigned samples of <= 16 bits."""

    width: int
    height: int
    bit_depth: int
    pixels: np.ndarray  # shape (height, width), dtype uint16

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("raster dimensions must be >= 1")
        if not 1 <= self.bit_depth <= 16:
            raise ValueError("bit depth must be in 1..16")
        px = np.ascontiguousarray(self.pixels, dtype=np.uint16)
        if px.shape != (self.height, self.width):
            raise ValueError("pixel array shape does not match dimensions")
        if px.size and int(px.max()) >= (1 << self.bit_depth):
            raise ValueError("pixel value exceeds declared bit depth")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.bit_depth == other.bit_depth
            and np.array_equal(self.pixels, other.pixels)
        )

    def tobytes(self) -> bytes:
        """Row-major little-endian u16 sample bytes."""
        return self.pixels.astype("<u2").tobytes()


@dataclass(frozen=True)
class ImageStats:
    gini: float
    shannon_entropy: float
    std_dev: float
    dynamic_range: tuple[int, int]
    background_fraction: float
    # Contrast normalized by dynamic range; reported alongside the raw
    # std_dev because the exact normalization used elsewhere is not fixed.
    contrast: float


def load_raster(path) -> Raster:
    path = Path(path)
    if not path.exists():
        raise UnsupportedFormatError(f"no such file: {path}")
    head = path.open("rb").read(4)
    if head == _RAW_MAGIC:
        return _load_raw(path)
    try:
        im = Image.open(path)
        im.load()
    except Exception as exc:
        raise UnsupportedFormatError(f"cannot read image {path}: {exc}") from exc
    if im.mode not in _MODE_DEPTH:
        raise UnsupportedFormatError(
            f"unsupported image mode {im.mode!r}; expected single-channel 8/16-bit"
        )
    depth = _MODE_DEPTH[im.mode]
    arr = np.asarray(im)
    if arr.ndim != 2:
        raise UnsupportedFormatError("multi-channel images are not supported")
    return Raster(im.width, im.height, depth, arr.astype(np.uint16))


def save_raster(r: Raster, path) -> None:
    path = Path(path)
    if path.suffix.lower() in (".agrw", ".raw"):
        _save_raw(r, path)
        return
    if r.bit_depth <= 8:
        im = Image.fromarray(r.pixels.astype(np.uint8), mode="L")
    else:
        im = Image.fromarray(r.pixels.astype(np.uint16))
    im.save(path, format="TIFF")


def _load_raw(path: Path) -> Raster:
    data = path.read_bytes()
    if len(data) < 13:
        raise UnsupportedFormatError(f"truncated raw raster: {path}")
    w, h = struct.unpack_from("<II", data, 4)
    depth = data[12]
    n = w * h
    if depth < 1 or depth > 16:
        raise UnsupportedFormatError(f"unsupported raw bit depth {depth}")
    if len(data) != 13 + 2 * n:
        raise UnsupportedFormatError(f"raw raster payload length mismatch: {path}")
    px = np.frombuffer(data, dtype="<u2", count=n, offset=13).reshape(h, w)
    return Raster(w, h, depth, px.astype(np.uint16))


def _save_raw(r: Raster, path: Path) -> None:
    blob = _RAW_MAGIC + struct.pack("<IIB", r.width, r.height, r.bit_depth)
    path.write_bytes(blob + r.tobytes())


def _histogram(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(values, counts) of the intensity histogram, values ascending."""
    return np.unique(pixels, return_counts=True)


def gini_coefficient(pixels: np.ndarray) -> float:
    """Population Gini of the pixel intensity multiset.

    Computed through the sorted-values identity; an all-zero (or any
    constant) image has no inequality and yields 0.
    """
    values, counts = _histogram(np.asarray(pixels).ravel())
    n = int(counts.sum())
    total = float(np.dot(values.astype(np.float64), counts))
    if total == 0.0 or len(values) == 1:
        return 0.0
    # Sum of rank*value over the (implicitly expanded) sorted samples.
    ends = np.cumsum(counts).astype(np.float64)
    starts = ends - counts
    rank_sums = (ends * (ends + 1) - starts * (starts + 1)) / 2.0
    s = float(np.dot(values.astype(np.float64), rank_sums))
    return 2.0 * s / (n * total) - (n + 1) / n


def shannon_entropy(pixels: np.ndarray) -> float:
    """Histogram entropy in bits per symbol."""
    _, counts = _histogram(np.asarray(pixels).ravel())
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def compute_stats(r: Raster) -> ImageStats:
    from .threshold import otsu_floor  # local import to avoid a module cycle

    px = r.pixels
    lo, hi = int(px.min()), int(px.max())
    std = float(px.astype(np.float64).std())
    contrast = std / (hi - lo) if hi > lo else 0.0
    if hi > lo:
        values, counts = _histogram(px.ravel())
        hist = np.zeros(hi + 1, dtype=np.int64)
        hist[values] = counts
        floor = otsu_floor(hist)
        background = float((px < floor).mean())
    else:
        background = 0.0
    return ImageStats(
        gini=gini_coefficient(px),
        shannon_entropy=shannon_entropy(px),
        std_dev=std,
        dynamic_range=(lo, hi),
        background_fraction=background,
        contrast=contrast,
    )
