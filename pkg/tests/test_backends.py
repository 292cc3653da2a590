import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from agcr import backends
from agcr.errors import CorruptContainerError

arrays = hnp.arrays(
    dtype=np.uint16,
    shape=st.tuples(st.integers(1, 12), st.integers(1, 12)),
    elements=st.integers(0, 65535),
)


@pytest.mark.parametrize("codec", [backends.GENERAL_BWT, backends.GENERAL_LZ])
def test_byte_codecs_roundtrip(codec):
    rng = np.random.default_rng(31)
    for size in (0, 1, 7, 1000):
        data = rng.integers(0, 256, size).astype(np.uint8).tobytes()
        blob = backends.compress_bytes(codec, data)
        assert backends.decompress_bytes(codec, blob, len(data)) == data


def test_decompress_respects_limit():
    data = bytes(10_000)
    blob = backends.compress_bytes(backends.GENERAL_LZ, data)
    with pytest.raises(CorruptContainerError):
        backends.decompress_bytes(backends.GENERAL_LZ, blob, 100)


def test_decompress_rejects_garbage():
    for codec in (backends.GENERAL_BWT, backends.GENERAL_LZ):
        with pytest.raises(CorruptContainerError):
            backends.decompress_bytes(codec, b"\x00\x01\x02garbage", 100)


@settings(max_examples=40)
@given(arrays)
def test_predictive_roundtrip(arr):
    blob = backends.predictive_encode(arr)
    back = backends.predictive_decode(blob, arr.shape[1], arr.shape[0])
    assert np.array_equal(back, arr)


def test_predictive_compresses_smooth_images():
    yy, xx = np.mgrid[0:64, 0:64]
    smooth = ((xx + yy) * 100).astype(np.uint16)
    blob = backends.predictive_encode(smooth)
    raw_lz = backends.compress_bytes(backends.GENERAL_LZ, smooth.tobytes())
    assert len(blob) < len(raw_lz)


def test_predictive_rejects_bad_payload():
    with pytest.raises(CorruptContainerError):
        backends.predictive_decode(b"junk", 4, 4)
    good = backends.predictive_encode(np.zeros((4, 4), dtype=np.uint16))
    with pytest.raises(CorruptContainerError):
        backends.predictive_decode(good, 5, 5)  # wrong dimensions


@pytest.mark.parametrize(
    "codec", [backends.GENERAL_BWT, backends.GENERAL_LZ, backends.PREDICTIVE_IMAGE]
)
def test_raster_payload_roundtrip(codec):
    rng = np.random.default_rng(32)
    arr = rng.integers(0, 65536, (9, 14)).astype(np.uint16)
    blob = backends.encode_raster_payload(codec, arr)
    back = backends.decode_raster_payload(codec, blob, 14, 9)
    assert np.array_equal(back, arr)


@pytest.mark.skipif(not backends.LOSSY_AVAILABLE, reason="no wavelet runtime")
def test_wavelet_lossy_roundtrip_quality():
    rng = np.random.default_rng(33)
    base = np.linspace(1000, 30000, 64 * 64).reshape(64, 64)
    arr = (base + rng.normal(0, 50, (64, 64))).clip(0, 65535).astype(np.uint16)
    blob = backends.wavelet_lossy_encode(arr, 20.0)
    assert len(blob) < arr.nbytes
    back = backends.wavelet_lossy_decode(blob, 64, 64)
    err = np.abs(back.astype(np.int64) - arr.astype(np.int64))
    assert err.mean() < 500  # near the signal, nowhere near random


@pytest.mark.skipif(not backends.LOSSY_AVAILABLE, reason="no wavelet runtime")
def test_wavelet_deterministic():
    arr = np.arange(256, dtype=np.uint16).reshape(16, 16) * 100
    assert backends.wavelet_lossy_encode(arr, 10.0) == backends.wavelet_lossy_encode(arr, 10.0)


@pytest.mark.skipif(not backends.LOSSY_AVAILABLE, reason="no wavelet runtime")
def test_wavelet_rejects_garbage():
    with pytest.raises(CorruptContainerError):
        backends.wavelet_lossy_decode(b"notjp2", 8, 8)


def test_available_backends_listing():
    infos = backends.available_backends()
    ids = {i.codec_id for i in infos}
    assert {backends.GENERAL_BWT, backends.GENERAL_LZ, backends.PREDICTIVE_IMAGE} <= ids
    assert all(i.lossless for i in infos if i.codec_id != backends.LOSSY_WAVELET)


def test_backend_name():
    assert backends.backend_name(backends.GENERAL_BWT) == "bwt"
    assert "unknown" in backends.backend_name(99)
