"""Multi-level Otsu thresholding and template-mask generation.

Thresholds are chosen by maximizing the between-class variance of the
histogram, which for a fixed class count is equivalent to minimizing the
total within-class sum of squared deviations. The search is an exact
dynamic program over split points using rational arithmetic, so results are
deterministic and free of floating-point ties; when several splits achieve
the optimum, the lexicographically smallest threshold tuple wins.
"""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

MAX_HISTOGRAM_BINS = 1024


def _class_costs(hist: np.ndarray) -> callable:
    """Within-class SSE for the inclusive bin range [a, b], as a Fraction."""
    counts = np.asarray(hist, dtype=np.int64)
    idx = np.arange(len(counts), dtype=np.int64)
    w = np.concatenate(([0], np.cumsum(counts)))
    s = np.concatenate(([0], np.cumsum(counts * idx)))
    s2 = np.concatenate(([0], np.cumsum(counts * idx * idx)))

    def cost(a: int, b: int) -> Fraction:
        cw = int(w[b + 1] - w[a])
        if cw == 0:
            return Fraction(0)
        cs = int(s[b + 1] - s[a])
        cs2 = int(s2[b + 1] - s2[a])
        return Fraction(cs2 * cw - cs * cs, cw)

    return cost


def multi_otsu_thresholds(hist, classes: int) -> tuple[int, ...]:
    """Optimal ``classes - 1`` split indices for a histogram.

    A threshold ``t`` assigns every bin index ``<= t`` to the class below the
    split and every index ``> t`` to the class above it. Returns the
    lexicographically smallest optimal tuple; empty for ``classes == 1``.
    """
    counts = np.asarray(hist, dtype=np.int64)
    n = len(counts)
    if classes < 1:
        raise ValueError("class count must be at least 1")
    if classes > n:
        raise ValueError(f"cannot split {n} histogram bins into {classes} classes")
    if (counts < 0).any():
        raise ValueError("histogram counts must be non-negative")
    if classes == 1:
        return ()

    cost = _class_costs(counts)

    # best[c][a] = minimal within-class SSE of bins a.. split into c classes.
    best = [[Fraction(0)] * (n + 1) for _ in range(classes + 1)]
    best[1] = [cost(a, n - 1) for a in range(n)] + [Fraction(0)]
    for c in range(2, classes + 1):
        row = best[c]
        prev = best[c - 1]
        for a in range(n - c, -1, -1):
            row[a] = min(cost(a, t) + prev[t + 1] for t in range(a, n - c + 1))

    thresholds = []
    a = 0
    for c in range(classes, 1, -1):
        for t in range(a, n - c + 1):
            if cost(a, t) + best[c - 1][t + 1] == best[c][a]:
                thresholds.append(t)
                a = t + 1
                break
    return tuple(thresholds)


def _histogram(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Histogram over distinct values, quantized to equal-width buckets when
    the image has more distinct intensities than the search can afford.
    Returns (counts, upper-value of each bucket)."""
    uniques, counts = np.unique(values, return_counts=True)
    if len(uniques) <= MAX_HISTOGRAM_BINS:
        return counts, uniques
    lo, hi = float(uniques[0]), float(uniques[-1])
    edges = np.linspace(lo, hi, MAX_HISTOGRAM_BINS + 1)
    counts, _ = np.histogram(values, bins=edges)
    return counts, edges[1:]


def _load_grayscale(image_path: str | Path) -> np.ndarray:
    with Image.open(image_path) as img:
        if img.mode not in ("L", "I", "I;16", "F", "1"):
            img = img.convert("L")
        return np.asarray(img)


def make_otsu_template(image_path: str | Path, levels: int, out_path: str | Path) -> Path:
    """Threshold an image into ``levels`` classes and write the label mask.

    The mask is an 8-bit single-channel TIFF whose pixel values are class
    labels ``0 .. levels - 1``, directly usable as a compression template.
    ``levels == 1`` (and any constant image) yields a single all-zero label.
    """
    if not 1 <= levels <= 255:
        raise ValueError("levels must be between 1 and 255")
    pixels = _load_grayscale(image_path)
    out_path = Path(out_path)

    mask = np.zeros(pixels.shape, dtype=np.uint8)
    counts, uppers = _histogram(pixels.reshape(-1))
    classes = min(levels, len(uppers))
    if classes > 1:
        splits = multi_otsu_thresholds(counts, classes)
        bounds = np.asarray([uppers[t] for t in splits])
        mask = np.searchsorted(bounds, pixels, side="left").astype(np.uint8)

    Image.fromarray(mask, mode="L").save(out_path, format="TIFF")
    return out_path
