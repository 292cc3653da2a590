import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agcr.contour import GeometricContour, optimize_contour, trace_contour
from agcr.errors import CorruptContainerError
from agcr.regions import (
    RegionRecord,
    ShapeStream,
    VarintReader,
    deserialize_regions,
    min_region_size,
    paint_regions,
    serialize_regions,
    signbit_decode,
    signbit_encode,
    sort_and_prune,
    write_varint,
)
from conftest import mask_region, random_region


def _record(mask, tolerance=1):
    r = mask_region(np.asarray(mask, dtype=bool))
    c = optimize_contour(trace_contour(r), r)
    return RegionRecord(contour=c, tolerance=tolerance, area=r.area)


def test_signbit_examples():
    assert signbit_encode(3) == 6
    assert signbit_encode(-3) == 7
    assert signbit_encode(0) == 0
    assert signbit_decode(6) == 3
    assert signbit_decode(7) == -3
    assert signbit_decode(0) == 0


@given(st.integers(-(10**12), 10**12))
def test_signbit_roundtrip(d):
    e = signbit_encode(d)
    assert e >= 0
    assert signbit_decode(e) == d


@given(st.lists(st.integers(0, 2**60), max_size=20))
def test_varint_roundtrip(values):
    buf = bytearray()
    for v in values:
        write_varint(buf, v)
    rd = VarintReader(bytes(buf))
    assert [rd.read() for _ in values] == values
    assert rd.exhausted()


def test_varint_rejects_negative_truncated_oversized():
    with pytest.raises(ValueError):
        write_varint(bytearray(), -1)
    with pytest.raises(CorruptContainerError):
        VarintReader(b"\x80").read()  # truncated
    with pytest.raises(CorruptContainerError):
        VarintReader(b"\xff" * 12).read()  # shift cap


def test_min_region_size_formula():
    assert min_region_size(1000, 1000) == 32
    assert min_region_size(4096, 4096) == 67
    assert min_region_size(8, 8) == 32


def test_serialize_roundtrip_simple():
    recs = [
        _record(np.ones((4, 6)), tolerance=2),
        _record(np.ones((3, 3)), tolerance=1),
    ]
    stream = serialize_regions(recs)
    back = deserialize_regions(stream)
    assert len(back) == 2
    for a, b in zip(recs, back):
        assert a.tolerance == b.tolerance
        assert a.area == b.area
        assert a.contour.outer == b.contour.outer


def test_serialize_roundtrip_with_holes_and_random_shapes():
    rng = np.random.default_rng(21)
    recs = []
    for i in range(15):
        r = random_region(rng, max_side=24)
        c = optimize_contour(trace_contour(r), r)
        recs.append(RegionRecord(contour=c, tolerance=i % 5, area=r.area))
    back = deserialize_regions(serialize_regions(recs))
    for a, b in zip(recs, back):
        assert a.contour.outer == b.contour.outer
        assert tuple(h.outer for h in a.contour.holes) == tuple(
            h.outer for h in b.contour.holes
        )


def test_duplicate_rings_are_dictionary_coded():
    # Twenty identical squares at different offsets: the x/y blocks must not
    # grow linearly with full vertex data.
    one = _record(np.ones((5, 5)))
    sq = one.contour.outer
    recs = []
    for i in range(20):
        ring = tuple((x + 7 * i, y) for x, y in sq)
        recs.append(RegionRecord(GeometricContour(outer=ring), 1, 25))
    stream = serialize_regions(recs)
    solo = serialize_regions(recs[:1])
    # Back-references: every ring after the first adds only its offset.
    assert len(stream.xs) < len(solo.xs) + 3 * len(recs)
    back = deserialize_regions(stream)
    assert [r.contour.outer for r in back] == [r.contour.outer for r in recs]


def test_forward_reference_rejected():
    # sizes = area 1, hole_count 0, vcount 0 (back-reference), ref 0 -- but
    # no ring has been emitted yet, so the reference points forward.
    with pytest.raises(CorruptContainerError):
        deserialize_regions(
            ShapeStream(bytes([1, 0, 0, 0]), bytes([0]), bytes([0]), bytes([0]), 1)
        )


def test_paint_regions_order_later_wins():
    big = _record(np.ones((6, 6)), tolerance=1)
    small_ring = tuple((x + 1, y + 1) for x, y in _record(np.ones((2, 2))).contour.outer)
    small = RegionRecord(GeometricContour(outer=small_ring), 2, 4)
    canvas = paint_regions([big, small], 8, 8)
    assert canvas[0, 0] == 1
    assert canvas[1, 1] == 2 and canvas[2, 2] == 2
    assert canvas[7, 7] == 0


def test_sort_and_prune_orders_and_drops():
    rng = np.random.default_rng(22)
    recs = []
    # Areas straddle the 8x8 minimum size of 32.
    for side, tol in ((7, 1), (4, 2), (9, 1), (3, 2)):
        m = np.ones((side, side))
        rec = _record(m, tolerance=tol)
        recs.append(rec)
    kept = sort_and_prune(recs, 64, 64, k=3)
    areas = [r.area for r in kept]
    assert areas == sorted(areas, reverse=True)
    assert all(a >= 32 for a in areas)  # 16- and 9-px regions pruned


def test_tolerance_zero_elimination_safe():
    """Tolerance-0 shapes are dropped only when the painted raster says the
    decode stays identical."""
    bg = _record(np.ones((10, 10)), tolerance=0)
    fg_ring = tuple((x + 2, y + 2) for x, y in _record(np.ones((6, 6))).contour.outer)
    fg = RegionRecord(GeometricContour(outer=fg_ring), 1, 36)
    kept = sort_and_prune([bg, fg], 10, 10, k=2)
    # Background = canvas default, safe to drop.
    assert all(r.tolerance != 0 for r in kept)
    ref = paint_regions([bg, fg], 10, 10)
    assert np.array_equal(paint_regions(kept, 10, 10), ref)


def test_tolerance_zero_kept_when_needed():
    # A tolerance-0 square ON TOP of a larger tolerance-1 square must stay,
    # otherwise those pixels decode as 1. Both exceed the 32-px minimum.
    big = _record(np.ones((12, 12)), tolerance=1)
    zero_ring = tuple((x + 3, y + 3) for x, y in _record(np.ones((6, 6))).contour.outer)
    zero = RegionRecord(GeometricContour(outer=zero_ring), 0, 36)
    kept = sort_and_prune([big, zero], 12, 12, k=2)
    ref = paint_regions(sorted([big, zero], key=lambda r: -r.area), 12, 12)
    assert np.array_equal(paint_regions(kept, 12, 12), ref)
    assert any(r.tolerance == 0 for r in kept)
