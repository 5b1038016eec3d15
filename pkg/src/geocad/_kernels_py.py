"""Pure-Python implementations of the hot kernels (fallback for ``_kernels``)."""
import numpy as np


def _orient(ax, ay, bx, by, cx, cy):
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (v > 0) - (v < 0)


def _on_segment(ax, ay, bx, by, px, py):
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def segments_intersect(ax, ay, bx, by, cx, cy, dx, dy):
    """Closed-segment intersection test; touching counts."""
    o1 = _orient(ax, ay, bx, by, cx, cy)
    o2 = _orient(ax, ay, bx, by, dx, dy)
    o3 = _orient(cx, cy, dx, dy, ax, ay)
    o4 = _orient(cx, cy, dx, dy, bx, by)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    return ((o1 == 0 and _on_segment(ax, ay, bx, by, cx, cy))
            or (o2 == 0 and _on_segment(ax, ay, bx, by, dx, dy))
            or (o3 == 0 and _on_segment(cx, cy, dx, dy, ax, ay))
            or (o4 == 0 and _on_segment(cx, cy, dx, dy, bx, by)))


def _fold_back(xs, ys, i, n):
    # segments i and i+1 meet at vertex i+1; they overlap iff they are
    # collinear and leave that vertex in the same direction
    v, a, c = (i + 1) % n, i, (i + 2) % n
    ux, uy = xs[a] - xs[v], ys[a] - ys[v]
    wx, wy = xs[c] - xs[v], ys[c] - ys[v]
    return ux * wy - uy * wx == 0 and ux * wx + uy * wy > 0


def polyline_self_intersects(xs, ys):
    """True iff the closed polyline through ``xs, ys`` is not simple.

    Vertices are listed once (closure implied).  Zero-length segments,
    adjacent segments folding back onto each other and any contact between
    non-adjacent segments all count as intersections.  Candidate pairs come
    from a sweep over x-extents.
    """
    n = len(xs)
    if n < 3:
        return True
    xs = [float(v) for v in xs]
    ys = [float(v) for v in ys]
    for i in range(n):
        j = (i + 1) % n
        if xs[i] == xs[j] and ys[i] == ys[j]:
            return True
        if _fold_back(xs, ys, i, n):
            return True
    order = sorted(range(n), key=lambda i: min(xs[i], xs[(i + 1) % n]))
    active = []
    for i in order:
        j = (i + 1) % n
        ax, ay, bx, by = xs[i], ys[i], xs[j], ys[j]
        lo_x = min(ax, bx)
        lo_y, hi_y = min(ay, by), max(ay, by)
        active = [k for k in active if max(xs[k], xs[(k + 1) % n]) >= lo_x]
        for k in active:
            if k == j or (k + 1) % n == i:
                continue
            l = (k + 1) % n
            if max(ys[k], ys[l]) < lo_y or min(ys[k], ys[l]) > hi_y:
                continue
            if segments_intersect(ax, ay, bx, by, xs[k], ys[k], xs[l], ys[l]):
                return True
        active.append(i)
    return False


def nn_sqdist(a, b, chunk=1024):
    """Squared distance from every row of ``a`` to its nearest row of ``b``."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    out = np.empty(len(a))
    for s in range(0, len(a), chunk):
        d = a[s:s + chunk, None, :] - b[None, :, :]
        out[s:s + chunk] = (d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]).min(axis=1)
    return out
