"""Adaptive geometric contouring and region-binned raster compression."""

from .codec import EncodeConfig, decode, encode, encode_agcr_plus
from .container import ContainerFile
from .decoder import decode_container, extract_bin
from .errors import (
    AgcrError,
    CorruptContainerError,
    EncodeError,
    MalformedShapeError,
    UnsupportedFormatError,
)
from .raster import Raster, load_raster, save_raster

__version__ = "1.0.0"

__all__ = [
    "AgcrError",
    "ContainerFile",
    "CorruptContainerError",
    "EncodeConfig",
    "EncodeError",
    "MalformedShapeError",
    "Raster",
    "UnsupportedFormatError",
    "decode",
    "decode_container",
    "encode",
    "encode_agcr_plus",
    "extract_bin",
    "load_raster",
    "save_raster",
    "__version__",
]
