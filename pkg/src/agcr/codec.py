"""Encode orchestration: strategy candidates, per-bin payload routing,
lossy/ROI configurations, and container assembly.

Every lossless candidate is round-trip verified before it may win the size
comparison, so a bug can cost compression but never correctness.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, replace

import numpy as np

from . import backends
from .backends import GENERAL_BWT, GENERAL_LZ, LOSSY_WAVELET, PREDICTIVE_IMAGE
from .container import (
    BIN_BINNED,
    BIN_CROPPED,
    BIN_LOSSY,
    BIN_MEAN,
    FLAG_LOSSY,
    FLAG_NO_WAVELET,
    FLAG_REDUCED,
    FLAG_SLOWEST,
    FLAG_TEMPLATE,
    GEOMETRY_RASTER,
    GEOMETRY_SHAPES,
    STRATEGY_BINNED,
    STRATEGY_INPLACE,
    STRATEGY_MIXED,
    BinDescriptor,
    CompressedShapeStream,
    ContainerFile,
)
from .contour import extract_regions, optimize_contour, reduce_contour, trace_contour
from .decoder import decode_container
from .errors import AgcrError, EncodeError
from .raster import Raster
from .regions import (
    RegionRecord,
    min_region_size,
    paint_regions,
    serialize_regions,
    sort_and_prune,
)
from .threshold import (
    PackingTransform,
    auto_tune,
    histogram_pack,
    tolerance_raster,
)

log = logging.getLogger(__name__)

# Bins whose offset-value entropy exceeds this go to a general-purpose
# backend in mixed mode; the rest go to the 2D predictive backend.
MIXED_ENTROPY_THRESHOLD = 4.0

LOSSLESS = "lossless"
MEAN = "mean"


@dataclass(frozen=True)
class EncodeConfig:
    strategy: str = "auto"  # auto | inplace | binned | mixed
    bins: int | None = None
    sigma: float | None = None
    floor: int | None = None
    reduce: int | None = None  # max vertices per 100 pixels; None = exact
    slowest: bool = False
    novis: bool = False
    threads: int | None = None
    template: np.ndarray | None = None
    loss_map: dict[int, object] | None = None  # label -> "lossless"|"mean"|ratio


@dataclass(frozen=True)
class PipelineState:
    """Everything the strategy encoders need, computed once."""

    raster: Raster
    packed: Raster
    transform: PackingTransform
    records: list[RegionRecord]
    effective: np.ndarray  # authoritative tolerance raster (uint8)
    labels: np.ndarray     # tolerance labels present, ascending
    flags: int


def _entropy_bits(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    _, counts = np.unique(values, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def _run_pipeline(r: Raster, cfg: EncodeConfig) -> PipelineState:
    packed, transform = histogram_pack(r)
    flags = 0
    if cfg.slowest:
        flags |= FLAG_SLOWEST
    if not backends.LOSSY_AVAILABLE:
        flags |= FLAG_NO_WAVELET

    if cfg.template is not None:
        tol = tolerance_raster(packed, None, template=cfg.template)
        flags |= FLAG_TEMPLATE
    else:
        tune = auto_tune(
            r,
            floor=cfg.floor,
            bins_override=cfg.bins,
            sigma_override=cfg.sigma,
        )
        tol = tune.raster

    regions = extract_regions(tol)
    # Regions below the minimum size are pruned unconditionally, so skip
    # tracing them at all.
    m = min_region_size(r.width, r.height)
    records = []
    for reg in regions:
        if reg.area < m:
            continue
        c = trace_contour(reg)
        c = optimize_contour(c, reg)
        if cfg.reduce is not None:
            c = reduce_contour(c, cfg.reduce)
            flags |= FLAG_REDUCED
        records.append(RegionRecord(contour=c, tolerance=reg.tolerance, area=reg.area))

    k = int(tol.cells.max()) + 1
    records = sort_and_prune(records, r.width, r.height, k, slowest=cfg.slowest)
    effective = paint_regions(records, r.width, r.height)
    labels = np.unique(effective)
    return PipelineState(r, packed, transform, records, effective, labels, flags)


def _best_bytes(data: bytes, codecs: list[int]) -> tuple[int, bytes]:
    best = None
    for codec in codecs:
        blob = backends.compress_bytes(codec, data)
        if best is None or len(blob) < len(best[1]):
            best = (codec, blob)
    return best


def _best_raster(arr: np.ndarray, codecs: list[int]) -> tuple[int, bytes]:
    best = None
    for codec in codecs:
        blob = backends.encode_raster_payload(codec, arr)
        if best is None or len(blob) < len(best[1]):
            best = (codec, blob)
    return best


def _geometry_parts(state: PipelineState, cfg: EncodeConfig):
    """Shape-stream geometry, or the smaller of shapes and a compressed
    tolerance raster when visualization is waived (--novis)."""
    stream = serialize_regions(state.records)
    codecs = [GENERAL_LZ, GENERAL_BWT] if cfg.slowest else [GENERAL_LZ]
    blocks = tuple(
        _best_bytes(blob, codecs)
        for blob in (stream.sizes, stream.tolerances, stream.xs, stream.ys)
    )
    shapes = CompressedShapeStream(stream.region_count, blocks)
    shapes_size = sum(len(b) for _, b in blocks)

    if cfg.novis:
        codec, blob = _best_raster(state.effective.astype(np.uint16), [PREDICTIVE_IMAGE])
        if len(blob) < shapes_size:
            return GEOMETRY_RASTER, None, (codec, blob)
    return GEOMETRY_SHAPES, shapes, None


def _bin_values(state: PipelineState, label: int) -> tuple[np.ndarray, np.ndarray]:
    mask = state.effective == label
    return mask, state.packed.pixels[mask].astype(np.int64)


def _payload_codecs(cfg: EncodeConfig) -> list[int]:
    # Both general codecs are cheap enough to always race; the paper-style
    # fast path (bwt only) is not worth the compression loss.
    return [GENERAL_BWT, GENERAL_LZ]


def _encode_bin_binned(
    state: PipelineState, label: int, cfg: EncodeConfig
) -> BinDescriptor:
    mask, values = _bin_values(state, label)
    if values.size and int(values.min()) == int(values.max()):
        return _encode_bin_mean(state, label)  # constant bin: losslessly payload-free
    offset = int(values.min()) if values.size else 0
    offs = (values - offset).astype("<u2").tobytes()
    codec, blob = _best_bytes(offs, _payload_codecs(cfg))
    return BinDescriptor(
        tolerance=int(label),
        mode=BIN_BINNED,
        packed=True,
        codec=codec,
        value_offset=offset,
        pixel_count=int(mask.sum()),
        payload=blob,
    )


def _mask_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(mask)
    x0, y0 = int(xs.min()), int(ys.min())
    return x0, y0, int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1


def _encode_bin_cropped(
    state: PipelineState, label: int, cfg: EncodeConfig
) -> BinDescriptor:
    mask, values = _bin_values(state, label)
    if values.size and int(values.min()) == int(values.max()):
        return _encode_bin_mean(state, label)  # constant bin: losslessly payload-free
    offset = int(values.min()) if values.size else 0
    bx, by, bw, bh = _mask_bbox(mask)
    sub = np.zeros((bh, bw), dtype=np.uint16)
    local = mask[by : by + bh, bx : bx + bw]
    sub[local] = (values - offset).astype(np.uint16)
    blob = backends.encode_raster_payload(PREDICTIVE_IMAGE, sub)
    return BinDescriptor(
        tolerance=int(label),
        mode=BIN_CROPPED,
        packed=True,
        codec=PREDICTIVE_IMAGE,
        value_offset=offset,
        pixel_count=int(mask.sum()),
        bbox=(bx, by, bw, bh),
        payload=blob,
    )


def _encode_bin_lossy(
    state: PipelineState, label: int, ratio: float
) -> BinDescriptor:
    if not backends.LOSSY_AVAILABLE:
        raise AgcrError("lossy compression requested but no wavelet backend is present")
    mask = state.effective == label
    bx, by, bw, bh = _mask_bbox(mask)
    sub = np.zeros((bh, bw), dtype=np.uint16)
    local = mask[by : by + bh, bx : bx + bw]
    sub[local] = state.raster.pixels[mask]
    blob = backends.wavelet_lossy_encode(sub, ratio)
    return BinDescriptor(
        tolerance=int(label),
        mode=BIN_LOSSY,
        packed=False,
        codec=LOSSY_WAVELET,
        value_offset=0,
        pixel_count=int(mask.sum()),
        bbox=(bx, by, bw, bh),
        ratio=float(ratio),
        payload=blob,
    )


def _encode_bin_mean(state: PipelineState, label: int) -> BinDescriptor:
    mask = state.effective == label
    mean = int(round(float(state.raster.pixels[mask].mean()))) if mask.any() else 0
    return BinDescriptor(
        tolerance=int(label),
        mode=BIN_MEAN,
        packed=False,
        codec=0,
        value_offset=mean,
        pixel_count=int(mask.sum()),
    )


def _container(
    state: PipelineState,
    cfg: EncodeConfig,
    strategy: int,
    bins: list[BinDescriptor],
    inplace_payload=None,
    extra_flags: int = 0,
    include_packing: bool = True,
) -> ContainerFile:
    kind, shapes, raster_geo = _geometry_parts(state, cfg)
    return ContainerFile(
        strategy=strategy,
        flags=state.flags | extra_flags,
        width=state.raster.width,
        height=state.raster.height,
        bit_depth=state.raster.bit_depth,
        crc32=zlib.crc32(state.raster.tobytes()) & 0xFFFFFFFF,
        packing=state.transform.distinct_values.astype(np.int64) if include_packing else None,
        geometry_kind=kind,
        shape_stream=shapes,
        raster_geometry=raster_geo,
        bins=tuple(bins),
        inplace_payload=inplace_payload,
    )


def encode_binned(state: PipelineState, cfg: EncodeConfig) -> ContainerFile:
    bins = [_encode_bin_binned(state, int(v), cfg) for v in state.labels]
    return _container(
        state, cfg, STRATEGY_BINNED, bins,
        include_packing=any(b.packed for b in bins),
    )


def encode_mixed(state: PipelineState, cfg: EncodeConfig) -> ContainerFile:
    bins = []
    for v in state.labels:
        mask, values = _bin_values(state, int(v))
        offset = int(values.min()) if values.size else 0
        if _entropy_bits(values - offset) > MIXED_ENTROPY_THRESHOLD:
            bins.append(_encode_bin_binned(state, int(v), cfg))
        else:
            bins.append(_encode_bin_cropped(state, int(v), cfg))
    return _container(
        state, cfg, STRATEGY_MIXED, bins,
        include_packing=any(b.packed for b in bins),
    )


def encode_inplace(
    state: PipelineState, cfg: EncodeConfig, *, packed: bool = True
) -> ContainerFile:
    """Global normalized payload. With ``packed=False`` the raw intensities
    are stored and the packing table is dropped — worthwhile whenever the
    table costs more than the rank transform saves."""
    source = state.packed.pixels if packed else state.raster.pixels
    offsets = np.zeros(256, dtype=np.int64)
    bins = []
    for v in state.labels:
        mask = state.effective == int(v)
        values = source[mask].astype(np.int64)
        offset = int(values.min()) if values.size else 0
        offsets[int(v)] = offset
        bins.append(
            BinDescriptor(
                tolerance=int(v),
                mode=BIN_BINNED,
                packed=packed,
                codec=0,
                value_offset=offset,
                pixel_count=int(mask.sum()),
            )
        )
    norm = (source.astype(np.int64) - offsets[state.effective]).astype(np.uint16)
    codecs = [PREDICTIVE_IMAGE, GENERAL_BWT, GENERAL_LZ]
    codec, blob = _best_raster(norm, codecs)
    return _container(
        state, cfg, STRATEGY_INPLACE, bins,
        inplace_payload=(codec, blob), include_packing=packed,
    )


def _encode_inplace_raw(state: PipelineState, cfg: EncodeConfig) -> ContainerFile:
    return encode_inplace(state, cfg, packed=False)


def select_strategy(candidates: list[tuple[ContainerFile, str]]) -> ContainerFile:
    """Smallest container wins; ties break by fixed label order."""
    if not candidates:
        raise EncodeError("no encode candidates survived verification")
    order = {"mixed": 0, "binned": 1, "inplace": 2}
    return min(
        candidates,
        key=lambda cl: (cl[0].size(), order.get(cl[1], 9)),
    )[0]


def _verified(container: ContainerFile, r: Raster, label: str) -> bool:
    try:
        round_trip = decode_container(ContainerFile.from_bytes(container.to_bytes()))
    except AgcrError as exc:
        log.warning("candidate %s failed verification: %s", label, exc)
        return False
    if round_trip != r:
        log.warning("candidate %s is not bit-exact; dropped", label)
        return False
    return True


def encode(r: Raster, cfg: EncodeConfig | None = None) -> ContainerFile:
    cfg = cfg or EncodeConfig()
    if cfg.template is not None and cfg.loss_map is not None:
        return encode_agcr_plus(r, cfg.template, cfg.loss_map, cfg)

    state = _run_pipeline(r, cfg)
    builders = {
        "inplace": encode_inplace,
        "binned": encode_binned,
        "mixed": encode_mixed,
    }
    if cfg.strategy in builders:
        container = builders[cfg.strategy](state, cfg)
        if not _verified(container, r, cfg.strategy):
            raise EncodeError(f"{cfg.strategy} encoding failed round-trip verification")
        return container
    if cfg.strategy != "auto":
        raise AgcrError(f"unknown strategy {cfg.strategy!r}")

    candidates = []
    for label, build in (
        ("mixed", encode_mixed),
        ("binned", encode_binned),
        ("inplace", encode_inplace),
        ("inplace", _encode_inplace_raw),
    ):
        container = build(state, cfg)
        if _verified(container, r, label):
            candidates.append((container, label))

    # Degenerate single-bin fallback keeps auto competitive with plain
    # whole-raster compression when region structure does not pay off.
    # Skipped when the caller pinned the bin count or labels explicitly.
    if (
        cfg.bins is None
        and cfg.template is None
        and (len(state.labels) > 1 or cfg.sigma not in (None, 0))
    ):
        flat_cfg = replace(cfg, bins=1, sigma=0.0, template=None)
        flat_state = _run_pipeline(r, flat_cfg)
        for build in (encode_inplace, _encode_inplace_raw):
            container = build(flat_state, flat_cfg)
            if _verified(container, r, "inplace-flat"):
                candidates.append((container, "inplace"))
    return select_strategy(candidates)


def encode_agcr_plus(
    r: Raster,
    template: np.ndarray,
    loss_map: dict[int, object],
    cfg: EncodeConfig | None = None,
) -> ContainerFile:
    """Per-bin lossy/lossless encoding driven by a label template.

    ``loss_map`` values are "lossless", "mean", or a numeric wavelet
    compression ratio. Lossless labels round-trip bit-exactly.
    """
    cfg = cfg or EncodeConfig()
    cfg = replace(cfg, template=np.asarray(template), loss_map=dict(loss_map))
    state = _run_pipeline(r, cfg)

    any_lossy = False
    bins = []
    for v in state.labels:
        label = int(v)
        if label not in cfg.loss_map:
            raise AgcrError(f"template label {label} has no loss entry")
        spec = cfg.loss_map[label]
        if spec == LOSSLESS:
            bins.append(_encode_bin_binned(state, label, cfg))
        elif spec == MEAN:
            bins.append(_encode_bin_mean(state, label))
            any_lossy = True
        else:
            bins.append(_encode_bin_lossy(state, label, float(spec)))
            any_lossy = True

    container = _container(
        state, cfg, STRATEGY_BINNED, bins,
        extra_flags=FLAG_LOSSY if any_lossy else 0,
    )
    # Verify the lossless-labeled pixels survive bit-exactly.
    decoded = decode_container(ContainerFile.from_bytes(container.to_bytes()))
    lossless_labels = [l for l, s in cfg.loss_map.items() if s == LOSSLESS]
    for label in lossless_labels:
        mask = state.effective == label
        if not np.array_equal(decoded.pixels[mask], r.pixels[mask]):
            raise EncodeError(f"lossless label {label} failed verification")
    return container


def decode(c: ContainerFile, *, threads: int = 1) -> Raster:
    """Thin facade over the decode module."""
    return decode_container(c, threads=threads)
