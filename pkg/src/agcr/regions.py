"""Ordering, pruning, deduplication and serialization of region records.

The shape stream keeps four parallel byte sequences (sizes, tolerances,
x data, y data). Ring corners are delta-coded against the previous ring's
corner with a sign-bit trick on top of unsigned varints; duplicate rings
(identical local vertex offsets) are stored once and referenced by index,
marked by a vertex count of zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contour import GeometricContour, PixelRegion
from .errors import CorruptContainerError
from .fill import Point, fill_rings_mask, ring_bbox


@dataclass(frozen=True)
class RegionRecord:
    contour: GeometricContour
    tolerance: int
    area: int

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        return ring_bbox(list(self.contour.outer))


@dataclass(frozen=True)
class ShapeStream:
    sizes: bytes
    tolerances: bytes
    xs: bytes
    ys: bytes
    region_count: int


# --- integer codecs ---------------------------------------------------------

def signbit_encode(delta: int) -> int:
    """Map a signed delta to unsigned: |d|*2 with the LSB flagging sign."""
    return (-delta) * 2 + 1 if delta < 0 else delta * 2


def signbit_decode(value: int) -> int:
    if value < 0:
        raise CorruptContainerError("sign-bit value must be unsigned")
    return -(value >> 1) if value & 1 else value >> 1


def write_varint(buf: bytearray, value: int) -> None:
    if value < 0:
        raise ValueError("varints are unsigned")
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.append(byte | 0x80)
        else:
            buf.append(byte)
            return


class VarintReader:
    """Bounds-checked LEB128 reader over a bytes object."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def read(self) -> int:
        shift = 0
        value = 0
        while True:
            if self.pos >= len(self.data):
                raise CorruptContainerError("truncated varint stream")
            if shift > 63:
                raise CorruptContainerError("varint too large")
            byte = self.data[self.pos]
            self.pos += 1
            value |= (byte & 0x7F) << shift
            if not byte & 0x80:
                return value
            shift += 7

    def exhausted(self) -> bool:
        return self.pos >= len(self.data)


# --- sorting, pruning, tolerance-0 elimination ------------------------------

def min_region_size(width: int, height: int) -> int:
    """m = max(32, w*h*0.4e-5), floored."""
    return max(32, int(width * height * 0.4e-5))


def paint_regions(records: list[RegionRecord], width: int, height: int) -> np.ndarray:
    """Decode records in order onto a tolerance-0 canvas (later wins)."""
    canvas = np.zeros((height, width), dtype=np.uint8)
    for rec in records:
        paint_one(canvas, rec)
    return canvas


def paint_one(canvas: np.ndarray, rec: RegionRecord) -> None:
    height, width = canvas.shape
    outer = list(rec.contour.outer)
    holes = [list(h.outer) for h in rec.contour.holes]
    x0, y0, w, h = ring_bbox(outer)
    # Clip the fill window to the canvas.
    cx0, cy0 = max(x0, 0), max(y0, 0)
    cx1, cy1 = min(x0 + w, width), min(y0 + h, height)
    if cx0 >= cx1 or cy0 >= cy1:
        return
    mask = fill_rings_mask(outer, holes, cx0, cy0, cx1 - cx0, cy1 - cy0)
    view = canvas[cy0:cy1, cx0:cx1]
    view[mask] = rec.tolerance


def _sort_key(rec: RegionRecord):
    x0, y0, _, _ = rec.bbox
    return (-rec.area, y0, x0)


def sort_and_prune(
    records: list[RegionRecord],
    width: int,
    height: int,
    k: int,
    *,
    slowest: bool = False,
) -> list[RegionRecord]:
    """Minimum-size pruning, area-descending sort, and shape elimination.

    Tolerance-0 regions whose absence does not change the decoded raster
    are dropped (every tolerance range is tried in ``slowest`` mode); any
    removal that would corrupt the decode is pushed back.
    """
    m = min_region_size(width, height)
    kept = sorted((r for r in records if r.area >= m), key=_sort_key)
    reference = paint_regions(kept, width, height)

    tolerances = range(k) if slowest else (0,)
    for t in tolerances:
        kept = _eliminate_tolerance(kept, t, reference, width, height)
    return kept


def _eliminate_tolerance(
    kept: list[RegionRecord],
    t: int,
    reference: np.ndarray,
    width: int,
    height: int,
) -> list[RegionRecord]:
    removed = [r for r in kept if r.tolerance == t]
    if not removed:
        return kept
    remaining = [r for r in kept if r.tolerance != t]
    while True:
        decoded = paint_regions(remaining, width, height)
        if np.array_equal(decoded, reference):
            return remaining
        # Push back removed regions whose pixels decode inconsistently.
        readd = []
        for rec in removed:
            if _region_inconsistent(rec, decoded, reference):
                readd.append(rec)
        if not readd:
            # Inconsistency not attributable to a single region; restore all.
            return sorted(remaining + removed, key=_sort_key)
        remaining = sorted(remaining + readd, key=_sort_key)
        removed = [r for r in removed if r not in readd]
        if not removed:
            return remaining


def _region_inconsistent(
    rec: RegionRecord, decoded: np.ndarray, reference: np.ndarray
) -> bool:
    height, width = decoded.shape
    outer = list(rec.contour.outer)
    holes = [list(h.outer) for h in rec.contour.holes]
    x0, y0, w, h = ring_bbox(outer)
    cx0, cy0 = max(x0, 0), max(y0, 0)
    cx1, cy1 = min(x0 + w, width), min(y0 + h, height)
    if cx0 >= cx1 or cy0 >= cy1:
        return False
    mask = fill_rings_mask(outer, holes, cx0, cy0, cx1 - cx0, cy1 - cy0)
    d = decoded[cy0:cy1, cx0:cx1][mask]
    r = reference[cy0:cy1, cx0:cx1][mask]
    return not np.array_equal(d, r)


# --- serialization ----------------------------------------------------------

def _ring_local(ring: tuple[Point, ...]) -> tuple[tuple[int, int], tuple[int, ...], tuple[int, ...]]:
    xs = [p[0] for p in ring]
    ys = [p[1] for p in ring]
    cx, cy = min(xs), min(ys)
    return (cx, cy), tuple(x - cx for x in xs), tuple(y - cy for y in ys)


def serialize_regions(records: list[RegionRecord]) -> ShapeStream:
    sizes = bytearray()
    tols = bytearray()
    xs = bytearray()
    ys = bytearray()
    dictionary: dict[tuple, int] = {}
    ring_serial = 0
    prev_cx = prev_cy = 0

    for rec in records:
        rings = [rec.contour.outer] + [h.outer for h in rec.contour.holes]
        write_varint(sizes, rec.area)
        write_varint(sizes, len(rings) - 1)  # hole count
        write_varint(tols, rec.tolerance)
        for ring in rings:
            (cx, cy), off_x, off_y = _ring_local(ring)
            write_varint(xs, signbit_encode(cx - prev_cx))
            write_varint(ys, signbit_encode(cy - prev_cy))
            prev_cx, prev_cy = cx, cy
            key = (off_x, off_y)
            hit = dictionary.get(key)
            if hit is not None:
                write_varint(sizes, 0)  # zero size marks a back-reference
                write_varint(sizes, hit)
            else:
                dictionary[key] = ring_serial
                write_varint(sizes, len(ring))
                for ox in off_x:
                    write_varint(xs, ox)
                for oy in off_y:
                    write_varint(ys, oy)
            ring_serial += 1

    return ShapeStream(bytes(sizes), bytes(tols), bytes(xs), bytes(ys), len(records))


def deserialize_regions(stream: ShapeStream) -> list[RegionRecord]:
    sizes = VarintReader(stream.sizes)
    tols = VarintReader(stream.tolerances)
    xs = VarintReader(stream.xs)
    ys = VarintReader(stream.ys)
    offsets_by_serial: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    records: list[RegionRecord] = []
    prev_cx = prev_cy = 0

    for _ in range(stream.region_count):
        area = sizes.read()
        hole_count = sizes.read()
        if hole_count > 1 << 20:
            raise CorruptContainerError("implausible hole count")
        tolerance = tols.read()
        rings: list[tuple[Point, ...]] = []
        for _ in range(hole_count + 1):
            prev_cx += signbit_decode(xs.read())
            prev_cy += signbit_decode(ys.read())
            vcount = sizes.read()
            if vcount == 0:
                ref = sizes.read()
                if ref >= len(offsets_by_serial):
                    raise CorruptContainerError("forward shape-dictionary reference")
                off_x, off_y = offsets_by_serial[ref]
            else:
                if vcount > 1 << 24:
                    raise CorruptContainerError("implausible ring size")
                off_x = tuple(xs.read() for _ in range(vcount))
                off_y = tuple(ys.read() for _ in range(vcount))
            offsets_by_serial.append((off_x, off_y))
            rings.append(
                tuple((prev_cx + ox, prev_cy + oy) for ox, oy in zip(off_x, off_y))
            )
        records.append(
            RegionRecord(
                contour=GeometricContour(
                    outer=rings[0],
                    holes=tuple(GeometricContour(outer=r) for r in rings[1:]),
                ),
                tolerance=tolerance,
                area=area,
            )
        )
    return records
