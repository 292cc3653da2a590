"""Pluggable compression backends.

Two general-purpose byte codecs (BWT-class via bzip2, LZ-class via xz) are
always available. The predictive image backend pairs a median-edge
predictor with zigzag residual mapping and an xz entropy stage; it is
2D-aware and lossless. The lossy wavelet backend wraps JPEG 2000 when the
imaging runtime provides it, with a target compression-ratio parameter.

Every decode path takes an explicit output-size limit so hostile payloads
cannot trigger unbounded allocation.
"""

from __future__ import annotations

import bz2
import io
import lzma
from dataclasses import dataclass

import numpy as np

from .errors import CorruptContainerError

GENERAL_BWT = 1
GENERAL_LZ = 2
PREDICTIVE_IMAGE = 3
LOSSY_WAVELET = 4

_NAMES = {
    GENERAL_BWT: "bwt",
    GENERAL_LZ: "lz",
    PREDICTIVE_IMAGE: "predictive",
    LOSSY_WAVELET: "lossy-wavelet",
}


def backend_name(codec_id: int) -> str:
    return _NAMES.get(codec_id, f"unknown({codec_id})")


def _bounded_decompress(decompressor, data: bytes, limit: int) -> bytes:
    try:
        out = decompressor.decompress(data, max_length=limit + 1)
    except Exception as exc:
        raise CorruptContainerError(f"payload decompression failed: {exc}") from exc
    if len(out) > limit or not decompressor.eof:
        raise CorruptContainerError("decompressed payload exceeds declared size")
    return out


def compress_bytes(codec_id: int, data: bytes) -> bytes:
    if not data:
        return b""  # empty streams are stored as zero bytes
    if codec_id == GENERAL_BWT:
        return bz2.compress(data, 9)
    if codec_id == GENERAL_LZ:
        return lzma.compress(data, format=lzma.FORMAT_XZ, preset=6)
    raise CorruptContainerError(f"codec {codec_id} is not a byte codec")


def decompress_bytes(codec_id: int, data: bytes, limit: int) -> bytes:
    if not data:
        return b""
    if codec_id == GENERAL_BWT:
        return _bounded_decompress(bz2.BZ2Decompressor(), data, limit)
    if codec_id == GENERAL_LZ:
        return _bounded_decompress(lzma.LZMADecompressor(), data, limit)
    raise CorruptContainerError(f"codec {codec_id} is not a byte codec")


# --- predictive image backend ------------------------------------------------

def _med_predict(arr: np.ndarray) -> np.ndarray:
    """Median edge detector prediction from the W, N and NW neighbors."""
    a = np.zeros_like(arr)  # west
    b = np.zeros_like(arr)  # north
    c = np.zeros_like(arr)  # northwest
    a[:, 1:] = arr[:, :-1]
    b[1:, :] = arr[:-1, :]
    c[1:, 1:] = arr[:-1, :-1]
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    pred = a + b - c
    pred = np.where(c >= hi, lo, pred)
    pred = np.where(c <= lo, hi, pred)
    return pred


def predictive_encode(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=np.int64)
    pred = _med_predict(arr)
    res = arr - pred  # signed
    zig = np.where(res < 0, -res * 2 - 1, res * 2).astype("<u4")
    # Residuals of 16-bit data fit 17 bits; split into low/high byte planes
    # so the entropy stage sees long zero runs in the high plane.
    lo = (zig & 0xFFFF).astype("<u2").tobytes()
    hi = (zig >> 16).astype(np.uint8).tobytes()
    return lzma.compress(lo + hi, format=lzma.FORMAT_XZ, preset=6)


def predictive_decode(data: bytes, width: int, height: int) -> np.ndarray:
    n = width * height
    raw = _bounded_decompress(lzma.LZMADecompressor(), data, 3 * n)
    if len(raw) != 3 * n:
        raise CorruptContainerError("predictive payload has the wrong size")
    lo = np.frombuffer(raw, dtype="<u2", count=n).astype(np.int64)
    hi = np.frombuffer(raw, dtype=np.uint8, count=n, offset=2 * n).astype(np.int64)
    zig = lo | (hi << 16)
    res = np.where(zig & 1, -((zig + 1) >> 1), zig >> 1).reshape(height, width)
    out = np.zeros((height, width), dtype=np.int64)
    for y in range(height):
        row_pred_n = out[y - 1] if y > 0 else np.zeros(width, dtype=np.int64)
        for x in range(width):
            a = out[y, x - 1] if x > 0 else 0
            b = row_pred_n[x]
            c = row_pred_n[x - 1] if (x > 0 and y > 0) else 0
            lo_ = min(a, b)
            hi_ = max(a, b)
            if c >= hi_:
                p = lo_
            elif c <= lo_:
                p = hi_
            else:
                p = a + b - c
            out[y, x] = p + res[y, x]
    if out.size and (out.min() < 0 or out.max() > 0xFFFF):
        raise CorruptContainerError("predictive payload decodes out of range")
    return out.astype(np.uint16)


# --- lossy wavelet backend ---------------------------------------------------

def _wavelet_available() -> bool:
    try:
        from PIL import features

        return bool(features.check("jpg_2000"))
    except Exception:
        return False


LOSSY_AVAILABLE = _wavelet_available()


def wavelet_lossy_encode(arr: np.ndarray, ratio: float) -> bytes:
    from PIL import Image

    arr = np.ascontiguousarray(arr, dtype=np.uint16)
    im = Image.fromarray(arr)
    buf = io.BytesIO()
    im.save(
        buf,
        format="JPEG2000",
        irreversible=True,
        quality_mode="rates",
        quality_layers=[float(ratio)],
    )
    return buf.getvalue()


def wavelet_lossy_decode(data: bytes, width: int, height: int) -> np.ndarray:
    from PIL import Image

    try:
        im = Image.open(io.BytesIO(data))
        im.load()
    except Exception as exc:
        raise CorruptContainerError(f"wavelet payload failed to decode: {exc}") from exc
    arr = np.asarray(im)
    if arr.shape != (height, width):
        raise CorruptContainerError("wavelet payload has the wrong dimensions")
    return arr.astype(np.uint16)


@dataclass(frozen=True)
class BackendInfo:
    codec_id: int
    name: str
    lossless: bool
    twod: bool


def available_backends() -> list[BackendInfo]:
    out = [
        BackendInfo(GENERAL_BWT, "bwt", True, False),
        BackendInfo(GENERAL_LZ, "lz", True, False),
        BackendInfo(PREDICTIVE_IMAGE, "predictive", True, True),
    ]
    if LOSSY_AVAILABLE:
        out.append(BackendInfo(LOSSY_WAVELET, "lossy-wavelet", False, True))
    return out


def encode_raster_payload(codec_id: int, arr: np.ndarray) -> bytes:
    """Compress a 2D uint16 array losslessly with the given backend."""
    if codec_id == PREDICTIVE_IMAGE:
        return predictive_encode(arr)
    data = np.ascontiguousarray(arr, dtype="<u2").tobytes()
    return compress_bytes(codec_id, data)


def decode_raster_payload(
    codec_id: int, data: bytes, width: int, height: int
) -> np.ndarray:
    if codec_id == PREDICTIVE_IMAGE:
        return predictive_decode(data, width, height)
    raw = decompress_bytes(codec_id, data, 2 * width * height)
    if len(raw) != 2 * width * height:
        raise CorruptContainerError("raster payload has the wrong size")
    return np.frombuffer(raw, dtype="<u2").reshape(height, width).astype(np.uint16)
