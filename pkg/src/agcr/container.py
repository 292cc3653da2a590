"""The `.agcr` container: a self-describing archive of header, packing
table, geometry channel (shape stream or compressed tolerance raster) and
per-bin payloads. All integers are little-endian; every length is checked
against the remaining input before any allocation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptContainerError
from .regions import VarintReader, write_varint

MAGIC = b"AGCR"
VERSION = 1

STRATEGY_INPLACE = 0
STRATEGY_BINNED = 1
STRATEGY_MIXED = 2
STRATEGY_NAMES = {STRATEGY_INPLACE: "inplace", STRATEGY_BINNED: "binned", STRATEGY_MIXED: "mixed"}

FLAG_SLOWEST = 1 << 0
FLAG_TEMPLATE = 1 << 1
FLAG_LOSSY = 1 << 2
FLAG_REDUCED = 1 << 3
FLAG_NO_WAVELET = 1 << 4

GEOMETRY_SHAPES = 0
GEOMETRY_RASTER = 1

BIN_BINNED = 0    # 1D: member values in raster order, offset by the bin minimum
BIN_CROPPED = 1   # 2D: bbox crop, non-members padded with zero
BIN_MEAN = 2      # background stored as its mean intensity, no payload
BIN_LOSSY = 3     # 2D crop through the lossy wavelet backend

MAX_PIXELS = 1 << 26  # allocation guard for hostile headers


@dataclass(frozen=True)
class BinDescriptor:
    tolerance: int
    mode: int
    packed: bool          # payload values went through histogram packing
    codec: int
    value_offset: int     # bin minimum (or the stored mean for BIN_MEAN)
    pixel_count: int
    bbox: tuple[int, int, int, int] | None = None
    ratio: float = 0.0
    payload: bytes = b""


@dataclass(frozen=True)
class ContainerFile:
    strategy: int
    flags: int
    width: int
    height: int
    bit_depth: int
    crc32: int
    packing: np.ndarray | None            # distinct values, ascending
    geometry_kind: int
    shape_stream: CompressedShapeStream | None
    raster_geometry: tuple[int, bytes] | None  # (codec, payload)
    bins: tuple[BinDescriptor, ...]
    inplace_payload: tuple[int, bytes] | None

    @property
    def k(self) -> int:
        return len(self.bins)

    @property
    def strategy_name(self) -> str:
        return STRATEGY_NAMES.get(self.strategy, "?")

    def size(self) -> int:
        return len(self.to_bytes())

    def to_bytes(self) -> bytes:
        out = bytearray()
        out += MAGIC
        out += struct.pack(
            "<BBBIIBBI",
            VERSION,
            self.strategy,
            self.flags,
            self.width,
            self.height,
            self.bit_depth,
            self.k,
            self.crc32,
        )
        if self.packing is not None:
            out.append(1)
            vals = np.asarray(self.packing, dtype=np.int64)
            write_varint(out, len(vals))
            prev = 0
            for v in vals:
                write_varint(out, int(v) - prev)
                prev = int(v)
        else:
            out.append(0)

        out.append(self.geometry_kind if (self.shape_stream or self.raster_geometry) else 2)
        if self.geometry_kind == GEOMETRY_SHAPES and self.shape_stream is not None:
            ss = self.shape_stream
            write_varint(out, ss.region_count)
            for codec, blob in self._shape_blocks():
                out.append(codec)
                write_varint(out, len(blob))
                out += blob
        elif self.geometry_kind == GEOMETRY_RASTER and self.raster_geometry is not None:
            codec, blob = self.raster_geometry
            out.append(codec)
            write_varint(out, len(blob))
            out += blob

        for b in self.bins:
            out += struct.pack("<BBBB", b.tolerance, b.mode, 1 if b.packed else 0, b.codec)
            write_varint(out, b.value_offset)
            write_varint(out, b.pixel_count)
            if b.mode in (BIN_CROPPED, BIN_LOSSY):
                for v in b.bbox:
                    write_varint(out, v)
            if b.mode == BIN_LOSSY:
                out += struct.pack("<f", b.ratio)
            if b.mode != BIN_MEAN:
                write_varint(out, len(b.payload))
                out += b.payload

        if self.inplace_payload is not None:
            codec, blob = self.inplace_payload
            out.append(codec)
            write_varint(out, len(blob))
            out += blob
        return bytes(out)

    def _shape_blocks(self):
        # The four blocks are stored pre-compressed with their codec ids.
        return self.shape_stream.compressed_blocks

    @classmethod
    def from_bytes(cls, data: bytes) -> "ContainerFile":
        rd = _Reader(data)
        if rd.take(4) != MAGIC:
            raise CorruptContainerError("bad magic; not an AGCR container")
        version, strategy, flags, width, height, bit_depth, k, crc = struct.unpack(
            "<BBBIIBBI", rd.take(17)
        )
        if version != VERSION:
            raise CorruptContainerError(f"unsupported container version {version}")
        if strategy not in STRATEGY_NAMES:
            raise CorruptContainerError(f"unknown strategy {strategy}")
        if width < 1 or height < 1 or width * height > MAX_PIXELS:
            raise CorruptContainerError("implausible image dimensions")
        if not 1 <= bit_depth <= 16:
            raise CorruptContainerError("bad bit depth")

        packing = None
        if rd.byte():
            vr = VarintReader(data)
            vr.pos = rd.pos
            count = vr.read()
            if count > 1 << 17:
                raise CorruptContainerError("implausible packing table size")
            vals = np.empty(count, dtype=np.int64)
            prev = 0
            for i in range(count):
                prev += vr.read()
                if prev > 0xFFFF:
                    raise CorruptContainerError("packing table value out of range")
                vals[i] = prev
            rd.pos = vr.pos
            packing = vals

        geometry_kind = rd.byte()
        shape_stream = None
        raster_geometry = None
        if geometry_kind == GEOMETRY_SHAPES:
            region_count = rd.varint()
            if region_count > width * height:
                raise CorruptContainerError("more regions than pixels")
            blocks = []
            for _ in range(4):
                codec = rd.byte()
                blob = rd.take(rd.length())
                blocks.append((codec, blob))
            shape_stream = CompressedShapeStream(region_count, tuple(blocks))
        elif geometry_kind == GEOMETRY_RASTER:
            codec = rd.byte()
            raster_geometry = (codec, rd.take(rd.length()))
        elif geometry_kind != 2:
            raise CorruptContainerError(f"unknown geometry kind {geometry_kind}")

        bins = []
        for _ in range(k):
            tol, mode, packed_flag, codec = struct.unpack("<BBBB", rd.take(4))
            if mode not in (BIN_BINNED, BIN_CROPPED, BIN_MEAN, BIN_LOSSY):
                raise CorruptContainerError(f"unknown bin mode {mode}")
            value_offset = rd.varint()
            pixel_count = rd.varint()
            if pixel_count > width * height:
                raise CorruptContainerError("bin pixel count exceeds image")
            bbox = None
            ratio = 0.0
            if mode in (BIN_CROPPED, BIN_LOSSY):
                bbox = tuple(rd.varint() for _ in range(4))
                if bbox[0] + bbox[2] > width or bbox[1] + bbox[3] > height:
                    raise CorruptContainerError("bin bbox exceeds image bounds")
            if mode == BIN_LOSSY:
                (ratio,) = struct.unpack("<f", rd.take(4))
            payload = b""
            if mode != BIN_MEAN:
                payload = rd.take(rd.length())
            bins.append(
                BinDescriptor(tol, mode, bool(packed_flag), codec, value_offset,
                              pixel_count, bbox, ratio, payload)
            )

        inplace_payload = None
        if strategy == STRATEGY_INPLACE:
            codec = rd.byte()
            inplace_payload = (codec, rd.take(rd.length()))

        return cls(
            strategy=strategy,
            flags=flags,
            width=width,
            height=height,
            bit_depth=bit_depth,
            crc32=crc,
            packing=packing,
            geometry_kind=geometry_kind if (shape_stream or raster_geometry) else 2,
            shape_stream=shape_stream,
            raster_geometry=raster_geometry,
            bins=tuple(bins),
            inplace_payload=inplace_payload,
        )


@dataclass(frozen=True)
class CompressedShapeStream:
    """Shape stream as stored: four compressed blocks with codec ids."""

    region_count: int
    compressed_blocks: tuple[tuple[int, bytes], ...]  # sizes, tolerances, xs, ys


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise CorruptContainerError(
                f"truncated container at byte {self.pos} (need {n} more)"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def byte(self) -> int:
        return self.take(1)[0]

    def length(self) -> int:
        v = self.varint()
        if v > len(self.data):
            raise CorruptContainerError("declared payload length exceeds file size")
        return v

    def varint(self) -> int:
        vr = VarintReader(self.data)
        vr.pos = self.pos
        v = vr.read()
        self.pos = vr.pos
        return v
