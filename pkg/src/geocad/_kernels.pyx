# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; semantics match ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline int _orient(double ax, double ay, double bx, double by, double cx, double cy) nogil:
    cdef double v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (v > 0) - (v < 0)


cdef inline bint _on_segment(double ax, double ay, double bx, double by, double px, double py) nogil:
    return (min(ax, bx) <= px <= max(ax, bx)) and (min(ay, by) <= py <= max(ay, by))


cdef bint _intersect(double ax, double ay, double bx, double by,
                     double cx, double cy, double dx, double dy) nogil:
    cdef int o1 = _orient(ax, ay, bx, by, cx, cy)
    cdef int o2 = _orient(ax, ay, bx, by, dx, dy)
    cdef int o3 = _orient(cx, cy, dx, dy, ax, ay)
    cdef int o4 = _orient(cx, cy, dx, dy, bx, by)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    return ((o1 == 0 and _on_segment(ax, ay, bx, by, cx, cy))
            or (o2 == 0 and _on_segment(ax, ay, bx, by, dx, dy))
            or (o3 == 0 and _on_segment(cx, cy, dx, dy, ax, ay))
            or (o4 == 0 and _on_segment(cx, cy, dx, dy, bx, by)))


def segments_intersect(double ax, double ay, double bx, double by,
                       double cx, double cy, double dx, double dy):
    return bool(_intersect(ax, ay, bx, by, cx, cy, dx, dy))


def polyline_self_intersects(xs_in, ys_in):
    # inputs hold at most a few dozen vertices, so plain C buffers beat numpy setup
    cdef Py_ssize_t n = len(xs_in)
    cdef Py_ssize_t i, j, k, l, a, c, t, m, n_active
    cdef double ux, uy, wx, wy, lo_x, lo_y, hi_y, key
    if n < 3:
        return True
    if len(ys_in) != n:
        raise ValueError("xs and ys differ in length")
    cdef double *buf = <double *> malloc(3 * n * sizeof(double))
    cdef Py_ssize_t *idx = <Py_ssize_t *> malloc(2 * n * sizeof(Py_ssize_t))
    if buf == NULL or idx == NULL:
        free(buf)
        free(idx)
        raise MemoryError()
    cdef double *xs = buf
    cdef double *ys = buf + n
    cdef double *xmin = buf + 2 * n
    cdef Py_ssize_t *order = idx
    cdef Py_ssize_t *active = idx + n
    try:
        for i in range(n):
            xs[i] = xs_in[i]
            ys[i] = ys_in[i]
        for i in range(n):
            j = (i + 1) % n
            if xs[i] == xs[j] and ys[i] == ys[j]:
                return True
            a = i
            c = (i + 2) % n
            ux = xs[a] - xs[j]
            uy = ys[a] - ys[j]
            wx = xs[c] - xs[j]
            wy = ys[c] - ys[j]
            if ux * wy - uy * wx == 0 and ux * wx + uy * wy > 0:
                return True
        # stable insertion sort of segments by their left x
        for i in range(n):
            xmin[i] = min(xs[i], xs[(i + 1) % n])
            key = xmin[i]
            t = i
            while t > 0 and xmin[order[t - 1]] > key:
                order[t] = order[t - 1]
                t -= 1
            order[t] = i
        n_active = 0
        for t in range(n):
            i = order[t]
            j = (i + 1) % n
            lo_x = xmin[i]
            lo_y = min(ys[i], ys[j])
            hi_y = max(ys[i], ys[j])
            m = 0
            for c in range(n_active):
                k = active[c]
                if max(xs[k], xs[(k + 1) % n]) >= lo_x:
                    active[m] = k
                    m += 1
            n_active = m
            for c in range(n_active):
                k = active[c]
                if k == j or (k + 1) % n == i:
                    continue
                l = (k + 1) % n
                if max(ys[k], ys[l]) < lo_y or min(ys[k], ys[l]) > hi_y:
                    continue
                if _intersect(xs[i], ys[i], xs[j], ys[j], xs[k], ys[k], xs[l], ys[l]):
                    return True
            active[n_active] = i
            n_active += 1
    finally:
        free(buf)
        free(idx)
    return False


def nn_sqdist(a_in, b_in):
    cdef double[:, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], i, j
    out_arr = np.empty(na)
    cdef double[::1] out = out_arr
    cdef double best, d, dx, dy, dz
    with nogil:
        for i in range(na):
            best = 1e308
            for j in range(nb):
                dx = a[i, 0] - b[j, 0]
                dy = a[i, 1] - b[j, 1]
                dz = a[i, 2] - b[j, 2]
                d = dx * dx + dy * dy + dz * dz
                if d < best:
                    best = d
            out[i] = best
    return out_arr
