"""Container decoding: rebuild the tolerance raster from shapes, restore
intensities per bin, reverse packing. Deterministic for any thread budget.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import backends
from .container import (
    BIN_BINNED,
    BIN_CROPPED,
    BIN_LOSSY,
    BIN_MEAN,
    FLAG_LOSSY,
    GEOMETRY_RASTER,
    GEOMETRY_SHAPES,
    STRATEGY_INPLACE,
    ContainerFile,
)
from .errors import CorruptContainerError
from .fill import fill_rings_mask, ring_bbox
from .raster import Raster
from .regions import RegionRecord, ShapeStream, deserialize_regions
from .threshold import PackingTransform, ToleranceRaster

# Shape stream blocks may not blow up beyond a generous per-pixel budget.
_SHAPE_BLOCK_LIMIT_PER_PIXEL = 64


@dataclass(frozen=True)
class FillSegmentPlan:
    """Partition of region indices into at most T contiguous segments."""

    segments: tuple[tuple[int, int], ...]  # half-open [start, stop) ranges

    @classmethod
    def build(cls, region_count: int, threads: int) -> "FillSegmentPlan":
        threads = max(1, threads)
        if region_count == 0:
            return cls(())
        n = min(threads, region_count)
        bounds = np.linspace(0, region_count, n + 1).astype(int)
        return cls(tuple((int(bounds[i]), int(bounds[i + 1])) for i in range(n)))


def _decompress_shape_stream(c: ContainerFile) -> ShapeStream:
    limit = _SHAPE_BLOCK_LIMIT_PER_PIXEL * c.width * c.height
    blocks = []
    for codec, blob in c.shape_stream.compressed_blocks:
        blocks.append(backends.decompress_bytes(codec, blob, limit))
    return ShapeStream(
        sizes=blocks[0],
        tolerances=blocks[1],
        xs=blocks[2],
        ys=blocks[3],
        region_count=c.shape_stream.region_count,
    )


def _region_fill(rec: RegionRecord, width: int, height: int):
    outer = list(rec.contour.outer)
    holes = [list(h.outer) for h in rec.contour.holes]
    x0, y0, w, h = ring_bbox(outer)
    cx0, cy0 = max(x0, 0), max(y0, 0)
    cx1, cy1 = min(x0 + w, width), min(y0 + h, height)
    if cx0 >= cx1 or cy0 >= cy1:
        return None
    mask = fill_rings_mask(outer, holes, cx0, cy0, cx1 - cx0, cy1 - cy0)
    return (cx0, cy0, mask)


def reconstruct_tolerance(
    stream: ShapeStream, width: int, height: int, k: int, *, threads: int = 1
) -> ToleranceRaster:
    """Paint stored regions in stream order onto a tolerance-0 canvas.

    Fills are computed per segment (possibly in parallel) but always
    applied in stored order, so the output is independent of the thread
    budget.
    """
    records = deserialize_regions(stream)
    for rec in records:
        if rec.tolerance >= max(k, 1) and rec.tolerance > 255:
            raise CorruptContainerError("region tolerance out of range")
        for ring in [rec.contour.outer] + [h.outer for h in rec.contour.holes]:
            for x, y in ring:
                if not (0 <= x < width and 0 <= y < height):
                    raise CorruptContainerError("shape vertex out of bounds")

    plan = FillSegmentPlan.build(len(records), threads)
    fills: list = [None] * len(records)

    def run_segment(seg):
        start, stop = seg
        for i in range(start, stop):
            fills[i] = _region_fill(records[i], width, height)

    if threads > 1 and len(plan.segments) > 1:
        with ThreadPoolExecutor(max_workers=len(plan.segments)) as pool:
            list(pool.map(run_segment, plan.segments))
    else:
        for seg in plan.segments:
            run_segment(seg)

    canvas = np.zeros((height, width), dtype=np.uint8)
    for rec, f in zip(records, fills):
        if f is None:
            continue
        x0, y0, mask = f
        view = canvas[y0 : y0 + mask.shape[0], x0 : x0 + mask.shape[1]]
        view[mask] = rec.tolerance
    return ToleranceRaster(width, height, canvas)


def decode_geometry(c: ContainerFile, *, threads: int = 1) -> ToleranceRaster:
    if c.geometry_kind == GEOMETRY_SHAPES and c.shape_stream is not None:
        stream = _decompress_shape_stream(c)
        return reconstruct_tolerance(stream, c.width, c.height, c.k, threads=threads)
    if c.geometry_kind == GEOMETRY_RASTER and c.raster_geometry is not None:
        codec, blob = c.raster_geometry
        arr = backends.decode_raster_payload(codec, blob, c.width, c.height)
        if arr.size and int(arr.max()) > 255:
            raise CorruptContainerError("tolerance raster value out of range")
        return ToleranceRaster(c.width, c.height, arr.astype(np.uint8))
    raise CorruptContainerError("container carries no geometry channel")


def _transform(c: ContainerFile) -> PackingTransform | None:
    if c.packing is None:
        return None
    vals = np.asarray(c.packing)
    if len(vals) and (np.diff(vals) <= 0).any():
        raise CorruptContainerError("packing table is not strictly increasing")
    return PackingTransform(vals.astype(np.uint16))


def _decode_bin_values(
    c: ContainerFile, b, mask: np.ndarray
) -> np.ndarray:
    """Values (packed or raw, per descriptor) for the bin's member pixels,
    in raster order."""
    count = int(mask.sum())
    if count != b.pixel_count:
        raise CorruptContainerError(
            f"bin {b.tolerance}: geometry selects {count} pixels, "
            f"descriptor says {b.pixel_count}"
        )
    if b.mode == BIN_MEAN:
        return np.full(count, b.value_offset, dtype=np.int64)
    if b.mode == BIN_BINNED:
        raw = backends.decompress_bytes(b.codec, b.payload, 2 * count)
        if len(raw) != 2 * count:
            raise CorruptContainerError("bin payload has the wrong size")
        offs = np.frombuffer(raw, dtype="<u2").astype(np.int64)
        return offs + b.value_offset
    if b.mode in (BIN_CROPPED, BIN_LOSSY):
        bx, by, bw, bh = b.bbox
        if bw < 1 or bh < 1:
            raise CorruptContainerError("degenerate bin bounding box")
        if b.mode == BIN_LOSSY:
            arr = backends.wavelet_lossy_decode(b.payload, bw, bh)
        else:
            arr = backends.decode_raster_payload(b.codec, b.payload, bw, bh)
        sub = mask[by : by + bh, bx : bx + bw]
        if int(sub.sum()) != count:
            raise CorruptContainerError("bin bbox does not cover its pixels")
        vals = arr[sub].astype(np.int64)
        if b.mode == BIN_CROPPED:
            vals += b.value_offset
        return vals
    raise CorruptContainerError(f"unknown bin mode {b.mode}")


def decode_container(c: ContainerFile, *, threads: int = 1) -> Raster:
    tol = decode_geometry(c, threads=threads)
    transform = _transform(c)
    cells = tol.cells
    out = np.zeros((c.height, c.width), dtype=np.int64)

    if c.strategy == STRATEGY_INPLACE:
        if c.inplace_payload is None:
            raise CorruptContainerError("in-place container without payload")
        codec, blob = c.inplace_payload
        norm = backends.decode_raster_payload(codec, blob, c.width, c.height).astype(np.int64)
        offsets = np.zeros(256, dtype=np.int64)
        packed_flags = np.zeros(256, dtype=bool)
        seen = set()
        for b in c.bins:
            offsets[b.tolerance] = b.value_offset
            packed_flags[b.tolerance] = b.packed
            seen.add(b.tolerance)
        present = set(int(v) for v in np.unique(cells))
        if not present <= seen:
            raise CorruptContainerError("geometry labels missing a bin descriptor")
        out = norm + offsets[cells]
        packed_mask = packed_flags[cells]
    else:
        packed_mask = np.zeros((c.height, c.width), dtype=bool)
        seen = set()
        for b in c.bins:
            mask = cells == b.tolerance
            seen.add(b.tolerance)
            vals = _decode_bin_values(c, b, mask)
            out[mask] = vals
            if b.packed:
                packed_mask |= mask
        present = set(int(v) for v in np.unique(cells))
        if not present <= seen:
            raise CorruptContainerError("geometry labels missing a bin descriptor")

    result = np.empty((c.height, c.width), dtype=np.int64)
    if transform is not None and packed_mask.any():
        packed_vals = out[packed_mask]
        if packed_vals.size and (
            packed_vals.min() < 0 or packed_vals.max() >= transform.count
        ):
            raise CorruptContainerError("packed intensity out of range")
        result[packed_mask] = transform.distinct_values[out[packed_mask]]
    elif packed_mask.any():
        raise CorruptContainerError("packed bin without a packing table")
    result[~packed_mask] = out[~packed_mask]

    limit = (1 << c.bit_depth) - 1
    if c.flags & FLAG_LOSSY:
        np.clip(result, 0, limit, out=result)
    elif result.size and (result.min() < 0 or result.max() > limit):
        raise CorruptContainerError("decoded sample exceeds declared bit depth")

    raster = Raster(c.width, c.height, c.bit_depth, result.astype(np.uint16))
    if not c.flags & FLAG_LOSSY:
        if zlib.crc32(raster.tobytes()) & 0xFFFFFFFF != c.crc32:
            raise CorruptContainerError("post-decode checksum mismatch")
    return raster


def extract_bin(c: ContainerFile, tolerance: int, *, threads: int = 1) -> Raster:
    """Restore one bin's pixels without decoding the other bins' payloads."""
    if c.strategy == STRATEGY_INPLACE:
        raise CorruptContainerError(
            "in-place containers do not support independent bin extraction"
        )
    match = [b for b in c.bins if b.tolerance == tolerance]
    if not match:
        raise CorruptContainerError(f"no bin with tolerance {tolerance}")
    b = match[0]
    tol = decode_geometry(c, threads=threads)
    mask = tol.cells == tolerance
    vals = _decode_bin_values(c, b, mask)
    out = np.zeros((c.height, c.width), dtype=np.int64)
    out[mask] = vals
    if b.packed:
        transform = _transform(c)
        if transform is None:
            raise CorruptContainerError("packed bin without a packing table")
        pv = out[mask]
        if pv.size and (pv.min() < 0 or pv.max() >= transform.count):
            raise CorruptContainerError("packed intensity out of range")
        out[mask] = transform.distinct_values[pv]
    limit = (1 << c.bit_depth) - 1
    np.clip(out, 0, limit, out=out)
    return Raster(c.width, c.height, c.bit_depth, out.astype(np.uint16))
