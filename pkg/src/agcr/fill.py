"""Edge rasterization and even-odd scanline fill for lattice contours.

Vertices are pixel centers. A contour's pixel set is the rasterization of
its edges plus every pixel whose center passes the node-crossing even-odd
test, minus the same fill of each hole ring. Edges are drawn first so that
boundary membership never depends on parity edge cases; crossings use
half-open vertex handling (each vertex counts for exactly one of its two
incident edges, by y direction).
"""

from __future__ import annotations

import numpy as np

from .errors import MalformedShapeError

Point = tuple[int, int]


def _round_div(p: int, q: int) -> int:
    """round(p / q) with ties toward +inf (floor(p/q + 1/2)); q > 0.

    Shifting p by a whole multiple of q shifts the result equally, which is
    exactly what makes the line rasterization symmetric under endpoint swap.
    """
    return (2 * p + q) // (2 * q)


def _round_div_arr(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Vectorized _round_div; q > 0 elementwise."""
    return (2 * p + q) // (2 * q)


def line_points(a: Point, b: Point) -> tuple[np.ndarray, np.ndarray]:
    """Integer line rasterization as (xs, ys) arrays, endpoint order a->b."""
    (x1, y1), (x2, y2) = a, b
    dx, dy = x2 - x1, y2 - y1
    n = max(abs(dx), abs(dy))
    if n == 0:
        return np.array([x1]), np.array([y1])
    i = np.arange(n + 1)
    return x1 + _round_div_arr(i * dx, np.int64(n)), y1 + _round_div_arr(
        i * dy, np.int64(n)
    )


def bresenham(a: Point, b: Point) -> list[Point]:
    """Integer line rasterization; raster(a->b) == reversed(raster(b->a))."""
    xs, ys = line_points(a, b)
    return [(int(x), int(y)) for x, y in zip(xs, ys)]


def _ring_edge_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(xs, ys) of every pixel on the closed polyline, all edges at once."""
    nxt = np.roll(pts, -1, axis=0)
    dx = nxt[:, 0] - pts[:, 0]
    dy = nxt[:, 1] - pts[:, 1]
    n = np.maximum(np.abs(dx), np.abs(dy))
    counts = n + 1
    total = int(counts.sum())
    # Per-point step index 0..n_e within each edge.
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    step = np.arange(total) - np.repeat(starts, counts)
    ne = np.repeat(np.maximum(n, 1), counts)
    xs = np.repeat(pts[:, 0], counts) + _round_div_arr(step * np.repeat(dx, counts), ne)
    ys = np.repeat(pts[:, 1], counts) + _round_div_arr(step * np.repeat(dy, counts), ne)
    return xs, ys


def rasterize_ring_edges(ring: list[Point]) -> set[Point]:
    """All pixels on the closed polyline through the ring's vertices."""
    if len(ring) == 1:
        return {ring[0]}
    xs, ys = _ring_edge_points(np.asarray(ring, dtype=np.int64))
    return {(int(x), int(y)) for x, y in zip(xs, ys)}


def ring_bbox(ring: list[Point]) -> tuple[int, int, int, int]:
    xs = [p[0] for p in ring]
    ys = [p[1] for p in ring]
    return min(xs), min(ys), max(xs) - min(xs) + 1, max(ys) - min(ys) + 1


def ring_fill_mask(
    ring: list[Point], x0: int, y0: int, w: int, h: int
) -> np.ndarray:
    """Boolean (h, w) mask of edges + even-odd interior, in bbox-local coords.

    Pixels outside the window are silently clipped.
    """
    mask = np.zeros((h, w), dtype=bool)
    if not ring:
        return mask
    pts = np.asarray(ring, dtype=np.int64)
    exs, eys = _ring_edge_points(pts)
    lx, ly = exs - x0, eys - y0
    keep = (lx >= 0) & (lx < w) & (ly >= 0) & (ly < h)
    mask[ly[keep], lx[keep]] = True
    if len(ring) < 3:
        return mask

    # Even-odd interior: for each non-horizontal edge, mark a crossing at
    # ceil(x_cross) for scanlines y in [ymin, ymax); pixel (x, y) is inside
    # when an odd number of crossings lie at positions <= x.
    nxt = np.roll(pts, -1, axis=0)
    a = pts.copy()
    b = nxt.copy()
    swap = a[:, 1] > b[:, 1]
    a[swap], b[swap] = nxt[swap], pts[swap]
    sel = a[:, 1] != b[:, 1]
    a, b = a[sel], b[sel]
    lo = np.maximum(a[:, 1], y0)
    hi = np.minimum(b[:, 1], y0 + h)  # half-open at the edge's upper vertex
    counts = np.maximum(hi - lo, 0)
    if counts.sum() == 0:
        return mask
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    step = np.arange(int(counts.sum())) - np.repeat(starts, counts)
    rows = np.repeat(lo, counts) + step
    xa = np.repeat(a[:, 0], counts)
    ya = np.repeat(a[:, 1], counts)
    # x_cross = xa + (y - ya) * (xb - xa) / (yb - ya); exact integer ceil
    num = (rows - ya) * np.repeat(b[:, 0] - a[:, 0], counts)
    den = np.repeat(b[:, 1] - a[:, 1], counts)
    xc = xa + -((-num) // den)
    cols = np.clip(xc - x0, 0, w)
    marks = np.zeros((h, w + 1), dtype=np.int64)
    np.add.at(marks, (rows - y0, cols), 1)
    parity = np.cumsum(marks[:, :w], axis=1) % 2
    mask |= parity.astype(bool)
    return mask


def _orient(ax, ay, bx, by, cx, cy) -> int:
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (v > 0) - (v < 0)


def _edges_properly_cross(a: Point, b: Point, c: Point, d: Point) -> bool:
    o1 = _orient(*a, *b, *c)
    o2 = _orient(*a, *b, *d)
    o3 = _orient(*c, *d, *a)
    o4 = _orient(*c, *d, *b)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def check_ring_simple(ring: list[Point]) -> None:
    """Reject rings whose edges properly cross (touching is allowed)."""
    n = len(ring)
    if n < 4:
        return
    edges = [(ring[i], ring[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        a, b = edges[i]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            c, d = edges[j]
            if _edges_properly_cross(a, b, c, d):
                raise MalformedShapeError(
                    f"contour edges {i} and {j} cross; polygon is not simple"
                )


def fill_rings_mask(
    outer: list[Point],
    holes: list[list[Point]],
    x0: int,
    y0: int,
    w: int,
    h: int,
) -> np.ndarray:
    """Outer fill minus hole fills, over the given window."""
    mask = ring_fill_mask(outer, x0, y0, w, h)
    for hole in holes:
        mask &= ~ring_fill_mask(hole, x0, y0, w, h)
    return mask


def fill_region(contour, *, validate: bool = True) -> set[Point]:
    """Pixel set of a contour (outer ring minus holes).

    ``contour`` is anything with ``outer`` (vertex list) and ``holes``
    (contours) attributes. With ``validate`` the rings are checked for
    proper self-intersections first.
    """
    outer = list(contour.outer)
    holes = [list(hc.outer) for hc in contour.holes]
    if validate:
        check_ring_simple(outer)
        for hole in holes:
            check_ring_simple(hole)
    x0, y0, w, h = ring_bbox(outer)
    mask = fill_rings_mask(outer, holes, x0, y0, w, h)
    ys, xs = np.nonzero(mask)
    return {(int(x) + x0, int(y) + y0) for x, y in zip(xs, ys)}
