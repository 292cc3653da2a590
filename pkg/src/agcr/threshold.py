"""Histogram packing, bin construction, Otsu floor, blur and tolerance rasters.

The thresholding pipeline turns a raster into a per-pixel "tolerance index"
(the bin label 0..k-1). Bins are built on the packed histogram by recursive
range halving followed by probability-driven merging; an optional floor
consolidates everything below it into a single background bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import AgcrError
from .raster import Raster, gini_coefficient

MAX_LABELS = 256  # tolerance indices must fit one byte

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class PackingTransform:
    """Reversible rank transform: packed index <-> original intensity."""

    distinct_values: np.ndarray  # strictly increasing, dtype uint16

    def __post_init__(self):
        dv = np.ascontiguousarray(self.distinct_values, dtype=np.uint16)
        dv.setflags(write=False)
        object.__setattr__(self, "distinct_values", dv)

    @property
    def count(self) -> int:
        return len(self.distinct_values)

    def pack_value(self, v: int) -> int:
        idx = int(np.searchsorted(self.distinct_values, v))
        return idx

    def unpack_values(self, packed: np.ndarray) -> np.ndarray:
        packed = np.asarray(packed)
        if packed.size and int(packed.max()) >= self.count:
            raise AgcrError("packed value out of range for transform")
        return self.distinct_values[packed]


@dataclass(frozen=True)
class ThresholdPlan:
    """k contiguous bins over packed intensities [0, N'-1], plus a floor."""

    bins: tuple[tuple[int, int], ...]  # inclusive (lo, hi) ranges, ordered
    floor: int | None = None

    def __post_init__(self):
        prev = 0
        for lo, hi in self.bins:
            if lo != prev or hi < lo:
                raise ValueError("bins must be ordered, disjoint and covering")
            prev = hi + 1

    @property
    def k(self) -> int:
        return len(self.bins)

    @property
    def domain_size(self) -> int:
        return self.bins[-1][1] + 1

    def lookup_table(self) -> np.ndarray:
        """Packed value -> tolerance index."""
        lut = np.empty(self.domain_size, dtype=np.uint8)
        for i, (lo, hi) in enumerate(self.bins):
            lut[lo : hi + 1] = i
        return lut


@dataclass(frozen=True)
class ToleranceRaster:
    width: int
    height: int
    cells: np.ndarray  # dtype uint8, shape (height, width)

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        if cells.shape != (self.height, self.width):
            raise ValueError("cell array shape mismatch")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def __eq__(self, other):
        if not isinstance(other, ToleranceRaster):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.cells, other.cells)
        )


def histogram_pack(r: Raster) -> tuple[Raster, PackingTransform]:
    """Rank transform making the intensity histogram contiguous from zero."""
    values, inverse = np.unique(r.pixels, return_inverse=True)
    packed = inverse.reshape(r.pixels.shape).astype(np.uint16)
    depth = max(1, int(len(values) - 1).bit_length())
    t = PackingTransform(values.astype(np.uint16))
    return Raster(r.width, r.height, depth, packed), t


def histogram_unpack(packed: Raster, t: PackingTransform) -> Raster:
    pixels = t.unpack_values(packed.pixels)
    depth = max(1, int(pixels.max()).bit_length()) if pixels.size else 1
    return Raster(packed.width, packed.height, max(depth, 1), pixels)


def packed_histogram(packed: Raster) -> np.ndarray:
    n = int(packed.pixels.max()) + 1
    return np.bincount(packed.pixels.ravel(), minlength=n).astype(np.int64)


def otsu_floor(hist: np.ndarray) -> int:
    """Smallest value of the foreground class under Otsu's criterion.

    Values strictly below the returned value form the background. Among
    variance-maximizing splits the lowest threshold wins.
    """
    hist = np.asarray(hist, dtype=np.float64)
    nonzero = np.flatnonzero(hist)
    if len(nonzero) < 2:
        raise AgcrError("Otsu threshold needs at least two distinct values")
    total = hist.sum()
    values = np.arange(len(hist), dtype=np.float64)
    w0 = np.cumsum(hist)[:-1]  # class 0 = values <= t, for t = 0..n-2
    w1 = total - w0
    m0 = np.cumsum(hist * values)[:-1]
    mu0 = np.divide(m0, w0, out=np.zeros_like(m0), where=w0 > 0)
    mu1 = np.divide(hist.sum() * 0 + (hist * values).sum() - m0, w1,
                    out=np.zeros_like(m0), where=w1 > 0)
    var = w0 * w1 * (mu0 - mu1) ** 2
    var[(w0 == 0) | (w1 == 0)] = -1.0
    t = int(np.argmax(var))  # argmax takes the first (lowest) maximum
    return t + 1


def build_bins(
    packed_hist: np.ndarray,
    g: float,
    floor: int | None = None,
    *,
    min_bin_bits: int = 2,
    min_prob_cap: float = 0.5,
) -> ThresholdPlan:
    """Recursive range halving, probability merging, then floor merging.

    A range spanning fewer than ``2**min_bin_bits`` packed values is not
    split further. Adjacent bins are merged until every bin holds at least
    ``min(1 - g, min_prob_cap)`` of the pixels; bins starting below the
    floor collapse into one background bin.
    """
    hist = np.asarray(packed_hist, dtype=np.int64)
    if hist.sum() <= 0:
        raise AgcrError("histogram is empty")
    n = len(hist)
    min_span = 1 << min_bin_bits

    leaves: list[tuple[int, int]] = []

    def split(lo: int, hi: int) -> None:
        # Halving a range below twice the minimum span would create bins
        # narrower than the minimum; keep it whole instead.
        if hi - lo + 1 < 2 * min_span:
            leaves.append((lo, hi))
            return
        mid = (lo + hi) // 2
        split(lo, mid)
        split(mid + 1, hi)

    split(0, n - 1)

    total = float(hist.sum())
    min_prob = min(1.0 - g, min_prob_cap)
    bins = _merge_to_min_prob(leaves, hist, total, min_prob)

    if floor is not None and floor > 0:
        merged: list[tuple[int, int]] = []
        background: tuple[int, int] | None = None
        for lo, hi in bins:
            if lo < floor:
                background = (0, hi) if background is None else (0, max(background[1], hi))
            else:
                merged.append((lo, hi))
        if background is not None:
            merged.insert(0, background)
        bins = merged

    if len(bins) > MAX_LABELS:
        bins = _force_bin_count(bins, hist, MAX_LABELS)
    return ThresholdPlan(tuple(bins), floor=floor)


def _merge_to_min_prob(
    bins: list[tuple[int, int]], hist: np.ndarray, total: float, min_prob: float
) -> list[tuple[int, int]]:
    """Left-to-right greedy merge until each bin's pixel fraction >= min_prob."""
    out: list[tuple[int, int]] = []
    acc_lo = None
    acc = 0.0
    for lo, hi in bins:
        if acc_lo is None:
            acc_lo = lo
        acc += float(hist[lo : hi + 1].sum())
        if acc / total >= min_prob:
            out.append((acc_lo, hi))
            acc_lo, acc = None, 0.0
    if acc_lo is not None:
        # Trailing underweight remainder joins the previous bin.
        if out:
            plo, _ = out.pop()
            out.append((plo, bins[-1][1]))
        else:
            out.append((acc_lo, bins[-1][1]))
    return out


def _bin_probs(bins: list[tuple[int, int]], hist: np.ndarray) -> np.ndarray:
    total = float(hist.sum())
    return np.array([hist[lo : hi + 1].sum() / total for lo, hi in bins])


def _force_bin_count(
    bins: list[tuple[int, int]], hist: np.ndarray, k: int
) -> list[tuple[int, int]]:
    """Merge lowest-probability bins into a neighbor until only k remain."""
    bins = list(bins)
    while len(bins) > k:
        probs = _bin_probs(bins, hist)
        i = int(np.argmin(probs))
        j = _smaller_neighbor(probs, i)
        lo = min(bins[i][0], bins[j][0])
        hi = max(bins[i][1], bins[j][1])
        a, b = sorted((i, j))
        bins[a:b + 1] = [(lo, hi)]
    return bins


def _smaller_neighbor(probs: np.ndarray, i: int) -> int:
    if i == 0:
        return 1
    if i == len(probs) - 1:
        return i - 1
    return i - 1 if probs[i - 1] <= probs[i + 1] else i + 1


def gaussian_blur(r: Raster, sigma: float) -> Raster:
    """Separable Gaussian blur, radius ceil(3*sigma), clamp-to-edge borders.

    Output samples are rounded to the nearest integer intensity; sigma 0 is
    the identity.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return r
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()

    data = r.pixels.astype(np.float64)
    padded = np.pad(data, ((0, 0), (radius, radius)), mode="edge")
    cols = np.apply_along_axis(lambda row: np.convolve(row, kernel, "valid"), 1, padded)
    padded = np.pad(cols, ((radius, radius), (0, 0)), mode="edge")
    out = np.apply_along_axis(lambda col: np.convolve(col, kernel, "valid"), 0, padded)

    out = np.rint(out)
    np.clip(out, 0, (1 << r.bit_depth) - 1, out=out)
    return Raster(r.width, r.height, r.bit_depth, out.astype(np.uint16))


def tolerance_raster(
    packed: Raster,
    plan: ThresholdPlan | None,
    template: np.ndarray | None = None,
) -> ToleranceRaster:
    """Per-pixel tolerance index from plan bins, or template labels verbatim."""
    if template is not None:
        template = np.asarray(template)
        if template.shape != packed.pixels.shape:
            raise AgcrError("template dimensions do not match the raster")
        if template.size and int(template.max()) >= MAX_LABELS:
            raise AgcrError(f"template labels must be < {MAX_LABELS}")
        return ToleranceRaster(packed.width, packed.height, template.astype(np.uint8))
    if plan is None:
        raise AgcrError("either a plan or a template is required")
    lut = plan.lookup_table()
    if int(packed.pixels.max()) >= len(lut):
        raise AgcrError("packed value outside the plan's domain")
    return ToleranceRaster(packed.width, packed.height, lut[packed.pixels])


def count_regions(t: ToleranceRaster) -> int:
    """Number of 4-connected constant-tolerance components."""
    total = 0
    for v in np.unique(t.cells):
        _, n = ndimage.label(t.cells == v, structure=_FOUR_CONNECTED)
        total += n
    return total


@dataclass(frozen=True)
class AutoTuneResult:
    plan: ThresholdPlan
    sigma: float
    raster: ToleranceRaster  # tolerance raster at the chosen sigma
    floor: int | None


def _coverage_reduce(
    plan: ThresholdPlan, hist: np.ndarray, g: float
) -> ThresholdPlan:
    """Drop k while any bin's probability is below its Gini-based coverage."""
    bins = list(plan.bins)
    n = float(len(hist))
    total = float(hist.sum())
    while len(bins) > 1:
        probs = _bin_probs(bins, hist)
        spans = np.array([(hi - lo + 1) / n for lo, hi in bins])
        coverage = (1.0 - g) * spans
        bound = np.minimum(coverage, 1.0 - g)
        bad = np.flatnonzero(probs < bound)
        if len(bad) == 0:
            break
        i = int(bad[np.argmin(probs[bad])])
        j = _smaller_neighbor(probs, i)
        a, b = sorted((i, j))
        bins[a:b + 1] = [(bins[a][0], bins[b][1])]
    return ThresholdPlan(tuple(bins), floor=plan.floor)


def auto_tune(
    r: Raster,
    *,
    floor: int | None = None,
    bins_override: int | None = None,
    sigma_override: float | None = None,
    sigma_step: float = 5.0,
    max_sigma_steps: int = 10,
    min_bin_bits: int = 2,
    otsu_range_limit: int = 256,
    otsu_gini_limit: float = 0.95,
) -> AutoTuneResult:
    """Pick the bin plan and blur strength for a raster.

    Bin count falls until every bin meets its Gini coverage bound; the blur
    standard deviation then walks 0, 5, 10, ... until the 4-connected region
    count of the tolerance raster drops to 10*k (or the step budget runs
    out, in which case the sigma with the fewest regions wins).
    """
    packed, transform = histogram_pack(r)
    hist = packed_histogram(packed)
    g = gini_coefficient(r.pixels)

    packed_floor: int | None = None
    if floor is not None:
        packed_floor = transform.pack_value(floor)
    else:
        lo, hi = int(r.pixels.min()), int(r.pixels.max())
        if transform.count >= 2 and (hi - lo < otsu_range_limit or g > otsu_gini_limit):
            packed_floor = otsu_floor(hist)

    if bins_override is not None:
        # A pinned bin count bypasses probability merging entirely: start
        # from the raw halving leaves (g=1 -> no merge) and force the count,
        # refining the leaf granularity when the pinned count needs it.
        mb = min_bin_bits
        plan = build_bins(hist, 1.0, packed_floor, min_bin_bits=mb)
        while plan.k < bins_override and mb > 0:
            mb -= 1
            plan = build_bins(hist, 1.0, packed_floor, min_bin_bits=mb)
        if bins_override < plan.k:
            plan = ThresholdPlan(
                tuple(_force_bin_count(list(plan.bins), hist, bins_override)),
                floor=plan.floor,
            )
    else:
        plan = build_bins(hist, g, packed_floor, min_bin_bits=min_bin_bits)
        plan = _coverage_reduce(plan, hist, g)
    k = plan.k

    def raster_for(sigma: float) -> tuple[ToleranceRaster, ThresholdPlan]:
        if sigma == 0:
            return tolerance_raster(packed, plan), plan
        blurred = gaussian_blur(r, sigma)
        b_packed, b_transform = histogram_pack(blurred)
        b_hist = packed_histogram(b_packed)
        b_floor = None
        if floor is not None:
            b_floor = b_transform.pack_value(floor)
        elif packed_floor is not None:
            b_floor = b_transform.pack_value(int(transform.distinct_values[min(packed_floor, transform.count - 1)]))
        b_plan = build_bins(b_hist, g, b_floor, min_bin_bits=min_bin_bits)
        if b_plan.k > k:
            b_plan = ThresholdPlan(
                tuple(_force_bin_count(list(b_plan.bins), b_hist, k)),
                floor=b_plan.floor,
            )
        return tolerance_raster(b_packed, b_plan), b_plan

    if sigma_override is not None:
        t, used_plan = raster_for(sigma_override)
        return AutoTuneResult(used_plan, sigma_override, t, packed_floor)

    best: tuple[int, float, ToleranceRaster, ThresholdPlan] | None = None
    sigma = 0.0
    for _ in range(max_sigma_steps + 1):
        t, used_plan = raster_for(sigma)
        n = count_regions(t)
        if best is None or n < best[0]:
            best = (n, sigma, t, used_plan)
        if n <= 10 * k:
            return AutoTuneResult(used_plan, sigma, t, packed_floor)
        sigma += sigma_step
    _, sigma, t, used_plan = best
    return AutoTuneResult(used_plan, sigma, t, packed_floor)
