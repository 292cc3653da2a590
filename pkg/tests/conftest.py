from __future__ import annotations

import numpy as np
import pytest
from scipy import ndimage

from agcr.contour import PixelRegion
from agcr.raster import Raster

_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def random_region(rng: np.random.Generator, max_side: int = 64) -> PixelRegion:
    """A random 4-connected region from thresholded smoothed noise."""
    while True:
        h = int(rng.integers(3, max_side + 1))
        w = int(rng.integers(3, max_side + 1))
        smooth = ndimage.gaussian_filter(rng.random((h, w)), rng.uniform(0.8, 4.0))
        mask = smooth > np.quantile(smooth, rng.uniform(0.3, 0.75))
        labeled, n = ndimage.label(mask, structure=_FOUR)
        if n == 0:
            continue
        sizes = ndimage.sum(mask, labeled, range(1, n + 1))
        i = int(rng.integers(0, n)) + 1
        if rng.random() < 0.5:  # half the time take the largest (more holes)
            i = int(np.argmax(sizes)) + 1
        sl = ndimage.find_objects(labeled, max_label=i)[i - 1]
        sub = (labeled == i)[sl]
        return PixelRegion(1, sl[1].start, sl[0].start, sub, int(sub.sum()))


def mask_region(mask: np.ndarray) -> PixelRegion:
    mask = np.asarray(mask, dtype=bool)
    return PixelRegion(1, 0, 0, mask, int(mask.sum()))


def staircase_region(steps: int) -> PixelRegion:
    """Diagonal staircase: 2-px-wide steps, 4-connected, many axis corners."""
    side = steps + 1
    mask = np.zeros((side, side), dtype=bool)
    for i in range(steps):
        mask[i, i] = True
        mask[i, i + 1] = True
        mask[i + 1, i + 1] = True
    return mask_region(mask)


def spiral_mask(side: int) -> np.ndarray:
    """A single 4-connected rectangular spiral arm with 1-px gaps."""
    mask = np.zeros((side, side), dtype=bool)
    lo = 0
    while lo <= side - 1 - lo:
        hi = side - 1 - lo
        mask[lo, max(lo - 2, 0) : hi + 1] = True  # east along the bottom
        mask[lo : hi + 1, hi] = True  # north along the right
        mask[hi, lo : hi + 1] = True  # west along the top
        if hi >= lo + 2:
            mask[lo + 2 : hi + 1, lo] = True  # south, stop short of the arm below
        lo += 2
    return mask


def adversarial_region_masks() -> dict[str, np.ndarray]:
    plus = np.zeros((5, 5), dtype=bool)
    plus[2, :] = True
    plus[:, 2] = True

    donut = np.ones((7, 9), dtype=bool)
    donut[2:5, 3:6] = False

    nested = np.ones((11, 11), dtype=bool)
    nested[2:9, 2:9] = False
    nested[4:7, 4:7] = True  # island inside the hole: separate region
    # The outer ring alone (the island is its own 4-connected region).
    nested_outer = nested.copy()
    nested_outer[4:7, 4:7] = False

    bridge = np.zeros((5, 11), dtype=bool)
    bridge[:, 0:3] = True
    bridge[:, 8:11] = True
    bridge[2, 3:8] = True  # 1-px bridge

    two_holes = np.ones((7, 13), dtype=bool)
    two_holes[2:5, 2:5] = False
    two_holes[2:5, 8:11] = False

    comb = np.zeros((7, 11), dtype=bool)
    comb[6, :] = True
    comb[:, 0::2] = True

    return {
        "single_pixel": np.ones((1, 1), dtype=bool),
        "row": np.ones((1, 8), dtype=bool),
        "column": np.ones((8, 1), dtype=bool),
        "square": np.ones((4, 4), dtype=bool),
        "plus": plus,
        "donut": donut,
        "nested_ring": nested_outer,
        "bridge": bridge,
        "two_holes": two_holes,
        "comb": comb,
        "spiral": spiral_mask(15),
        "staircase": np.asarray(staircase_region(6).mask),
    }


def random_raster(rng: np.random.Generator, width: int, height: int) -> Raster:
    """Seeded synthetic 16-bit raster with varied content."""
    kind = int(rng.integers(0, 6))
    img = np.zeros((height, width), dtype=np.int64)
    if kind == 0:  # flat background + noisy blobs
        for _ in range(int(rng.integers(1, 4))):
            bw = int(rng.integers(2, max(3, width // 2 + 1)))
            bh = int(rng.integers(2, max(3, height // 2 + 1)))
            x = int(rng.integers(0, width - bw + 1))
            y = int(rng.integers(0, height - bh + 1))
            base = int(rng.integers(0, 60000))
            img[y : y + bh, x : x + bw] = base + rng.integers(0, 9, (bh, bw))
    elif kind == 1:  # banded gradient
        img += (np.arange(width) * int(rng.integers(1, 512)) // max(1, width)).astype(np.int64)
        img += rng.integers(0, 3, (height, width))
    elif kind == 2:  # few flat levels
        levels = rng.integers(0, 65536, int(rng.integers(2, 6)))
        img = levels[rng.integers(0, len(levels), (height, width))]
    elif kind == 3:  # full-range noise
        img = rng.integers(0, 65536, (height, width))
    elif kind == 4:  # smooth hill
        yy, xx = np.mgrid[0:height, 0:width]
        cx, cy = rng.integers(0, width), rng.integers(0, height)
        img = (60000 * np.exp(-(((xx - cx) / max(4, width / 3)) ** 2
                                + ((yy - cy) / max(4, height / 3)) ** 2))).astype(np.int64)
    else:  # sparse speckle on zero
        n = int(rng.integers(1, max(2, width * height // 16)))
        ys = rng.integers(0, height, n)
        xs = rng.integers(0, width, n)
        img[ys, xs] = rng.integers(1, 65536, n)
    img = np.clip(img, 0, 65535)
    return Raster(width, height, 16, img.astype(np.uint16))


def adversarial_rasters() -> dict[str, Raster]:
    rng = np.random.default_rng(1234)
    out: dict[str, Raster] = {}
    out["constant_zero"] = Raster(16, 16, 16, np.zeros((16, 16), dtype=np.uint16))
    out["constant_max"] = Raster(16, 16, 16, np.full((16, 16), 65535, dtype=np.uint16))
    cb = np.indices((32, 32)).sum(axis=0) % 2
    out["checkerboard"] = Raster(32, 32, 16, (cb * 65535).astype(np.uint16))
    sp = spiral_mask(31).astype(np.uint16) * 40000
    out["spiral"] = Raster(31, 31, 16, sp)
    holes = np.full((24, 24), 1000, dtype=np.uint16)
    holes[4:9, 4:9] = 0
    holes[12:20, 10:22] = 0
    holes[14:18, 14:18] = 30000
    out["holes"] = Raster(24, 24, 16, holes)
    bridge = np.zeros((16, 33), dtype=np.uint16)
    bridge[:, :12] = 5
    bridge[:, 21:] = 65535
    bridge[8, 12:21] = 5
    out["one_px_bridges"] = Raster(33, 16, 16, bridge)
    out["extreme_mix"] = Raster(
        8, 8, 16, rng.choice([0, 1, 65534, 65535], size=(8, 8)).astype(np.uint16)
    )
    tall = np.tile(rng.integers(0, 65536, (1, 3)).astype(np.uint16), (40, 1))
    out["tall_narrow"] = Raster(3, 40, 16, tall)
    return out


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
