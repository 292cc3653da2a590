import numpy as np
import pytest

from agcr import EncodeConfig, Raster, encode
from agcr.container import (
    MAGIC,
    MAX_PIXELS,
    ContainerFile,
    STRATEGY_NAMES,
)
from agcr.errors import CorruptContainerError


def _sample_container(strategy="binned"):
    rng = np.random.default_rng(41)
    img = np.zeros((40, 40), dtype=np.uint16)
    img[4:20, 4:20] = 300 + rng.integers(0, 5, (16, 16))
    img[24:38, 24:38] = 50000 + rng.integers(0, 5, (14, 14))
    return encode(Raster(40, 40, 16, img), EncodeConfig(strategy=strategy))


@pytest.mark.parametrize("strategy", ["inplace", "binned", "mixed"])
def test_container_bytes_roundtrip(strategy):
    c = _sample_container(strategy)
    back = ContainerFile.from_bytes(c.to_bytes())
    assert back.to_bytes() == c.to_bytes()
    assert back.strategy == c.strategy
    assert back.width == c.width and back.height == c.height
    assert back.crc32 == c.crc32
    assert len(back.bins) == len(c.bins)
    if c.packing is not None:
        assert np.array_equal(back.packing, c.packing)


def test_magic_and_version_checked():
    c = _sample_container()
    blob = bytearray(c.to_bytes())
    blob[0:4] = b"NOPE"
    with pytest.raises(CorruptContainerError):
        ContainerFile.from_bytes(bytes(blob))
    blob = bytearray(c.to_bytes())
    blob[4] = 99  # version
    with pytest.raises(CorruptContainerError):
        ContainerFile.from_bytes(bytes(blob))


def test_truncation_rejected_everywhere():
    blob = _sample_container().to_bytes()
    for cut in range(0, len(blob) - 1, max(1, len(blob) // 100)):
        with pytest.raises(CorruptContainerError):
            ContainerFile.from_bytes(blob[:cut])


def test_implausible_dimensions_rejected():
    blob = bytearray(_sample_container().to_bytes())
    # width/height live at offsets 7..14 in the fixed header.
    blob[7:11] = (2**32 - 1).to_bytes(4, "little")
    with pytest.raises(CorruptContainerError):
        ContainerFile.from_bytes(bytes(blob))
    assert MAX_PIXELS <= 1 << 26


def test_declared_length_beyond_file_rejected():
    from agcr.regions import write_varint

    c = _sample_container("inplace")
    blob = c.to_bytes()
    payload = c.inplace_payload[1]
    real_len = bytearray()
    write_varint(real_len, len(payload))
    prefix = blob[: len(blob) - len(payload) - len(real_len)]
    huge = bytearray()
    write_varint(huge, 2**62)  # declared length far beyond the file size
    with pytest.raises(CorruptContainerError):
        ContainerFile.from_bytes(prefix + bytes(huge))


def test_strategy_names_complete():
    assert set(STRATEGY_NAMES.values()) == {"inplace", "binned", "mixed"}
    assert _sample_container("mixed").strategy_name == "mixed"


def test_header_starts_with_magic():
    assert _sample_container().to_bytes()[:4] == MAGIC
