"""Release acceptance gates, exercised end to end against the public API.

Each gate prints exactly one PASS/FAIL verdict line. The shared corpora are
session-scoped so the expensive tracing/encoding work happens once.
"""

from __future__ import annotations

import bz2
import lzma

import numpy as np
import pytest
from scipy import ndimage

from agcr import EncodeConfig, Raster, decode, encode, encode_agcr_plus, extract_bin
from agcr.backends import LOSSY_AVAILABLE
from agcr.container import ContainerFile
from agcr.contour import optimize_contour, trace_contour
from agcr.decoder import decode_geometry
from agcr.errors import AgcrError
from agcr.fill import fill_region
from agcr.regions import min_region_size, signbit_decode, signbit_encode
from conftest import (
    adversarial_rasters,
    adversarial_region_masks,
    mask_region,
    random_raster,
    random_region,
    staircase_region,
)
from oracles import axis_vertex_count

STRATEGIES = ("auto", "inplace", "binned", "mixed")


def _verdict(name: str, ok: bool, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"\n[GATE] {name}: {'PASS' if ok else 'FAIL'}{suffix}")
    assert ok, f"{name}{suffix}"


# --- shared corpora ----------------------------------------------------------

@pytest.fixture(scope="session")
def region_corpus():
    """1000 random 4-connected regions (<= 64x64) plus the adversarial set,
    each with its traced and optimized contour."""
    rng = np.random.default_rng(20240823)
    regions = [random_region(rng, 64) for _ in range(1000)]
    regions += [mask_region(m) for m in adversarial_region_masks().values()]
    out = []
    for reg in regions:
        c = trace_contour(reg)
        out.append((reg, c, optimize_contour(c, reg)))
    return out


@pytest.fixture(scope="session")
def raster_corpus():
    rng = np.random.default_rng(20240824)
    out = []
    for _ in range(500):
        w = int(rng.integers(8, 129))
        h = int(rng.integers(8, 129))
        out.append(random_raster(rng, w, h))
    return out


@pytest.fixture(scope="session")
def encoded_corpus(raster_corpus):
    return [(r, encode(r)) for r in raster_corpus]


def _sparse_corpus():
    """30 seeded sparse-foreground images: noisy blocks on a zero ground."""
    rng = np.random.default_rng(4242)
    out = []
    for _ in range(30):
        w = h = 128
        img = np.zeros((h, w), dtype=np.int64)
        for _ in range(int(rng.integers(2, 7))):
            bw, bh = int(rng.integers(16, 56)), int(rng.integers(16, 56))
            x, y = int(rng.integers(0, w - bw)), int(rng.integers(0, h - bh))
            img[y : y + bh, x : x + bw] = int(rng.integers(10000, 60000)) + rng.integers(
                0, 1 << 9, (bh, bw)
            )
        out.append(Raster(w, h, 16, np.clip(img, 0, 65535).astype(np.uint16)))
    return out


def _two_region_family():
    """High-contrast pair: zero ground plus one smooth high-intensity ramp."""
    out = []
    for side in (64, 96, 128):
        yy, xx = np.mgrid[0:side, 0:side]
        img = np.zeros((side, side), dtype=np.uint16)
        s = slice(side // 8, side - side // 8)
        img[s, s] = (40000 + 80 * xx + 40 * yy)[s, s].astype(np.uint16)
        out.append(Raster(side, side, 16, img))
    return out


def _best_single_backend(r: Raster) -> int:
    """Smallest whole-raster size over the general-purpose byte codecs."""
    raw = r.tobytes()
    return min(len(bz2.compress(raw, 9)), len(lzma.compress(raw, preset=6)))


# --- gates -------------------------------------------------------------------

def test_acceptance_lossless_round_trip(encoded_corpus):
    failures = 0
    total = 0
    for r, c in encoded_corpus:
        total += 1
        failures += decode(ContainerFile.from_bytes(c.to_bytes())) != r
    fixtures = list(adversarial_rasters().values()) + [
        r for r, _ in encoded_corpus[:25]
    ]
    for r in fixtures:
        for strategy in STRATEGIES:
            total += 1
            try:
                c = encode(r, EncodeConfig(strategy=strategy))
                failures += decode(ContainerFile.from_bytes(c.to_bytes())) != r
            except AgcrError:
                failures += 1
    _verdict(
        "lossless round trip",
        failures == 0,
        f"{total - failures}/{total} bit-exact",
    )


def test_acceptance_pixel_perfect_contouring(region_corpus):
    bad = sum(fill_region(oc) != reg.pixels() for reg, _, oc in region_corpus)
    _verdict(
        "pixel-perfect contouring",
        bad == 0,
        f"{len(region_corpus) - bad}/{len(region_corpus)} exact",
    )


def test_acceptance_vertex_economy(region_corpus):
    wins = sum(
        oc.vertex_count <= axis_vertex_count(np.asarray(reg.mask))
        for reg, _, oc in region_corpus
    )
    share = wins / len(region_corpus)

    stair_ok = all(
        optimize_contour(trace_contour(r), r).vertex_count
        < axis_vertex_count(np.asarray(r.mask))
        for r in (staircase_region(s) for s in (3, 5, 9, 14, 20))
    )

    rng = np.random.default_rng(20240825)
    smooth = ndimage.gaussian_filter(rng.random((256, 256)), 6.0)
    mask = smooth > np.quantile(smooth, 0.6)
    labeled, n = ndimage.label(
        mask, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    )
    sizes = ndimage.sum(mask, labeled, range(1, n + 1))
    blob = mask_region(labeled == (int(np.argmax(sizes)) + 1))
    oc = optimize_contour(trace_contour(blob), blob)
    blob_share = oc.vertex_count / blob.area

    _verdict(
        "vertex economy",
        share >= 0.95 and stair_ok and blob_share <= 0.05,
        f"beats axis trace on {share:.1%}; staircases strict: {stair_ok}; "
        f"blob vertices {blob_share:.2%} of pixels",
    )


def test_acceptance_optimizer_monotone_idempotent(region_corpus):
    bad = 0
    for reg, c, oc in region_corpus:
        if oc.vertex_count > c.vertex_count:
            bad += 1
            continue
        oc2 = optimize_contour(oc, reg)
        if (
            oc2.outer != oc.outer
            or [h.outer for h in oc2.holes] != [h.outer for h in oc.holes]
        ):
            bad += 1
    _verdict(
        "shortcut optimizer monotone + idempotent",
        bad == 0,
        f"{len(region_corpus) - bad}/{len(region_corpus)} regions",
    )


def test_acceptance_signbit_codec():
    ok = (
        signbit_encode(3) == 6
        and signbit_encode(-3) == 7
        and signbit_encode(0) == 0
    )
    ok = ok and all(
        signbit_decode(signbit_encode(d)) == d for d in range(-(10**6), 10**6 + 1)
    )
    _verdict("sign-bit delta codec", ok, "exhaustive over [-1e6, 1e6]")


def test_acceptance_min_region_size_formula():
    ok = min_region_size(1000, 1000) == 32 and min_region_size(4096, 4096) == 67
    _verdict(
        "minimum region size",
        ok,
        f"m(1000x1000)={min_region_size(1000, 1000)}, "
        f"m(4096x4096)={min_region_size(4096, 4096)}",
    )


def test_acceptance_thread_invariance(encoded_corpus):
    bad = 0
    for _, c in encoded_corpus:
        outs = {decode(c, threads=t).tobytes() for t in (1, 2, 8)}
        bad += len(outs) != 1
    _verdict(
        "thread-invariant decode",
        bad == 0,
        f"{len(encoded_corpus) - bad}/{len(encoded_corpus)} byte-identical",
    )


def test_acceptance_competitiveness():
    corpus = _sparse_corpus()
    within = sum(
        encode(r).size() <= 1.05 * _best_single_backend(r) for r in corpus
    )
    strict = all(
        encode(r).size() < _best_single_backend(r) for r in _two_region_family()
    )
    _verdict(
        "auto-mode competitiveness",
        within / len(corpus) >= 0.90 and strict,
        f"within 1.05x on {within}/{len(corpus)}; "
        f"strictly smaller on the two-region family: {strict}",
    )


def test_acceptance_roi_integrity():
    rng = np.random.default_rng(20240826)
    bad = 0
    for _ in range(10):
        r = random_raster(rng, 64, 64)
        tmpl = np.zeros((64, 64), dtype=np.uint8)
        tmpl[8:40, 8:40] = 1
        loss = {0: 30.0 if LOSSY_AVAILABLE else "mean", 1: "lossless"}
        c = encode_agcr_plus(r, tmpl, loss)
        d = decode(ContainerFile.from_bytes(c.to_bytes()))
        bad += not np.array_equal(d.pixels[tmpl == 1], r.pixels[tmpl == 1])
    _verdict(
        "region-of-interest integrity",
        bad == 0,
        f"{10 - bad}/10 label-1 regions bit-exact "
        f"({'wavelet' if LOSSY_AVAILABLE else 'mean'} background)",
    )


def test_acceptance_bin_extraction():
    rng = np.random.default_rng(20240827)
    fixtures = []
    for _ in range(5):
        img = np.zeros((64, 64), dtype=np.int64)
        img[4:30, 4:30] = 200 + rng.integers(0, 9, (26, 26))
        img[34:60, 34:60] = int(rng.integers(30000, 60000)) + rng.integers(0, 9, (26, 26))
        fixtures.append(Raster(64, 64, 16, img.astype(np.uint16)))
    bad = 0
    checked = 0
    for r in fixtures:
        for strategy in ("binned", "mixed"):
            c = encode(r, EncodeConfig(strategy=strategy, bins=3))
            full = decode(c).pixels
            tol = decode_geometry(c).cells
            for b in c.bins:
                checked += 1
                one = extract_bin(c, b.tolerance)
                mask = tol == b.tolerance
                if not (
                    np.array_equal(one.pixels[mask], full[mask])
                    and (one.pixels[~mask] == 0).all()
                ):
                    bad += 1
    _verdict(
        "independent bin extraction",
        bad == 0,
        f"{checked - bad}/{checked} bins match the full decode",
    )


def test_acceptance_fuzz_robustness():
    rng = np.random.default_rng(20240828)
    bases = []
    for strategy in ("inplace", "binned", "mixed"):
        img = np.zeros((40, 40), dtype=np.int64)
        img[4:20, 4:20] = 300 + rng.integers(0, 5, (16, 16))
        img[24:38, 24:38] = 50000 + rng.integers(0, 5, (14, 14))
        r = Raster(40, 40, 16, img.astype(np.uint16))
        bases.append(bytearray(encode(r, EncodeConfig(strategy=strategy)).to_bytes()))

    crashes = 0
    for i in range(10_000):
        data = bytearray(bases[i % len(bases)])
        kind = int(rng.integers(0, 4))
        if kind == 0:  # flip a few bytes
            for _ in range(int(rng.integers(1, 9))):
                data[int(rng.integers(0, len(data)))] ^= int(rng.integers(1, 256))
        elif kind == 1:  # truncate
            data = data[: int(rng.integers(0, len(data)))]
        elif kind == 2:  # insert garbage
            pos = int(rng.integers(0, len(data)))
            data[pos:pos] = rng.integers(0, 256, int(rng.integers(1, 64))).astype(
                np.uint8
            ).tobytes()
        else:  # splice a random window elsewhere
            a = int(rng.integers(0, len(data)))
            b = int(rng.integers(0, len(data)))
            a, b = min(a, b), min(max(a, b), a + 256)
            pos = int(rng.integers(0, len(data)))
            data[pos : pos + (b - a)] = data[a:b]
        try:
            decode(ContainerFile.from_bytes(bytes(data)))
        except AgcrError:
            pass  # clean, typed rejection
        except Exception:
            crashes += 1
    _verdict(
        "fuzzed container robustness",
        crashes == 0,
        f"10000 mutants, {crashes} uncontrolled failures",
    )
