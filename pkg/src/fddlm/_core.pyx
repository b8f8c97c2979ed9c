# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometric kernels (triangle clipping, point location).

Signature-compatible with fddlm._core_py; selected by fddlm.kernels.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef double _shoelace(double* xs, double* ys, int n) noexcept nogil:
    cdef double a = 0.0
    cdef int i, j
    for i in range(n):
        j = i + 1
        if j == n:
            j = 0
        a += xs[i] * ys[j] - xs[j] * ys[i]
    return 0.5 * a


cdef int _clip_buffers(double* sx, double* sy, int ns,
                       double ax, double ay, double bx, double by,
                       double* ox, double* oy) noexcept nogil:
    """Clip polygon (sx, sy) against the half-plane left of a->b into (ox, oy)."""
    cdef double ex = bx - ax
    cdef double ey = by - ay
    cdef int no = 0
    cdef int i, ip
    cdef double px, py, qx, qy, cp, cq, dx, dy, t
    for i in range(ns):
        ip = i - 1
        if ip < 0:
            ip = ns - 1
        px = sx[ip]; py = sy[ip]
        qx = sx[i];  qy = sy[i]
        cp = ex * (py - ay) - ey * (px - ax)
        cq = ex * (qy - ay) - ey * (qx - ax)
        if (cq >= 0.0) != (cp >= 0.0):
            dx = qx - px
            dy = qy - py
            t = (ex * (ay - py) - ey * (ax - px)) / (ex * dy - ey * dx)
            ox[no] = px + t * dx
            oy[no] = py + t * dy
            no += 1
        if cq >= 0.0:
            ox[no] = qx
            oy[no] = qy
            no += 1
    return no


cdef int _clip_tri_tri(double* subx, double* suby,
                       double* clpx, double* clpy,
                       double merge_tol,
                       double* outx, double* outy) noexcept nogil:
    """Clip triangle against triangle; returns deduplicated vertex count."""
    cdef double bufx[16]
    cdef double bufy[16]
    cdef double tmpx[16]
    cdef double tmpy[16]
    cdef int n = 3, i, j, e, m
    for i in range(3):
        bufx[i] = subx[i]
        bufy[i] = suby[i]
    for e in range(3):
        j = e + 1
        if j == 3:
            j = 0
        n = _clip_buffers(bufx, bufy, n, clpx[e], clpy[e], clpx[j], clpy[j],
                          tmpx, tmpy)
        for i in range(n):
            bufx[i] = tmpx[i]
            bufy[i] = tmpy[i]
        if n == 0:
            return 0
    # merge consecutive near-duplicates
    m = 0
    for i in range(n):
        j = i + 1
        if j == n:
            j = 0
        if (bufx[i] - bufx[j] > merge_tol or bufx[j] - bufx[i] > merge_tol or
                bufy[i] - bufy[j] > merge_tol or bufy[j] - bufy[i] > merge_tol):
            outx[m] = bufx[i]
            outy[m] = bufy[i]
            m += 1
    if m < 3:
        return 0
    return m


def polygon_area(pts):
    """Signed area of a polygon given as an (k, 2) vertex array (ccw > 0)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef int n = p.shape[0]
    if n < 3:
        return 0.0
    cdef double a = 0.0
    cdef int i, j
    for i in range(n):
        j = i + 1
        if j == n:
            j = 0
        a += p[i, 0] * p[j, 1] - p[j, 0] * p[i, 1]
    return 0.5 * a


def clip_triangle(subject, clip_tri, double merge_tol=1e-12):
    """Clip triangle `subject` against triangle `clip_tri` (both ccw)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] s = np.ascontiguousarray(subject, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c = np.ascontiguousarray(clip_tri, dtype=np.float64)
    cdef double sx[3]
    cdef double sy[3]
    cdef double cx[3]
    cdef double cy[3]
    cdef double ox[16]
    cdef double oy[16]
    cdef int i, m
    for i in range(3):
        sx[i] = s[i, 0]; sy[i] = s[i, 1]
        cx[i] = c[i, 0]; cy[i] = c[i, 1]
    m = _clip_tri_tri(sx, sy, cx, cy, merge_tol, ox, oy)
    out = np.empty((m, 2), dtype=np.float64)
    for i in range(m):
        out[i, 0] = ox[i]
        out[i, 1] = oy[i]
    return out


def clip_against_candidates(subject, candidates, double merge_tol=1e-12,
                            double min_area=0.0):
    """Clip one triangle against many candidate triangles.

    Returns (kept candidate indices, list of vertex arrays, areas); polygons
    with area <= min_area are dropped.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] s = np.ascontiguousarray(subject, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] c = np.ascontiguousarray(candidates, dtype=np.float64)
    cdef int nc = c.shape[0]
    cdef double sx[3]
    cdef double sy[3]
    cdef double cx[3]
    cdef double cy[3]
    cdef double ox[16]
    cdef double oy[16]
    cdef int i, j, m
    cdef double a
    for i in range(3):
        sx[i] = s[i, 0]; sy[i] = s[i, 1]
    kept, polys, areas = [], [], []
    cdef cnp.ndarray[cnp.float64_t, ndim=2] poly
    for j in range(nc):
        for i in range(3):
            cx[i] = c[j, i, 0]; cy[i] = c[j, i, 1]
        m = _clip_tri_tri(sx, sy, cx, cy, merge_tol, ox, oy)
        if m == 0:
            continue
        a = _shoelace(ox, oy, m)
        if a > min_area:
            poly = np.empty((m, 2), dtype=np.float64)
            for i in range(m):
                poly[i, 0] = ox[i]
                poly[i, 1] = oy[i]
            kept.append(j)
            polys.append(poly)
            areas.append(a)
    return (np.asarray(kept, dtype=np.int64), polys,
            np.asarray(areas, dtype=np.float64))


def locate_points(pts, cell_coords, indptr, cand, double tol=1e-12):
    """Per point, the lowest-id candidate triangle containing it (-1 if none)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] cc = np.ascontiguousarray(cell_coords, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cd = np.ascontiguousarray(cand, dtype=np.int64)
    cdef int n = p.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.full(n, -1, dtype=np.int64)
    cdef int i
    cdef cnp.int64_t k, c
    cdef double px, py, x0, y0, x1, y1, x2, y2, det, l1, l2
    for i in range(n):
        px = p[i, 0]
        py = p[i, 1]
        for k in range(ip[i], ip[i + 1]):
            c = cd[k]
            x0 = cc[c, 0, 0]; y0 = cc[c, 0, 1]
            x1 = cc[c, 1, 0]; y1 = cc[c, 1, 1]
            x2 = cc[c, 2, 0]; y2 = cc[c, 2, 1]
            det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            l1 = ((px - x0) * (y2 - y0) - (py - y0) * (x2 - x0)) / det
            l2 = ((x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)) / det
            if l1 >= -tol and l2 >= -tol and 1.0 - l1 - l2 >= -tol:
                out[i] = c
                break
    return out
