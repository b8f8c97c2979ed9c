"""Pure-Python geometric kernels.

Fallback implementations of the hot inner loops (triangle clipping and
candidate-based point location).  `fddlm._core` is the compiled twin with
identical signatures; `fddlm.kernels` picks one at import time.
"""

import numpy as np


def polygon_area(pts):
    """Signed area of a polygon given as an (k, 2) vertex array (ccw > 0)."""
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 3:
        return 0.0
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _dedup(xs, ys, merge_tol):
    """Drop consecutive vertices closer than merge_tol (cyclically)."""
    n = len(xs)
    keep_x, keep_y = [], []
    for i in range(n):
        j = (i + 1) % n
        if abs(xs[i] - xs[j]) > merge_tol or abs(ys[i] - ys[j]) > merge_tol:
            keep_x.append(xs[i])
            keep_y.append(ys[i])
    return keep_x, keep_y


def clip_triangle(subject, clip_tri, merge_tol=1e-12):
    """Clip triangle `subject` against triangle `clip_tri` (both ccw).

    Successive half-plane clipping against the three edges of `clip_tri`.
    Returns an (k, 2) array of ccw vertices, possibly empty.
    """
    sub = np.asarray(subject, dtype=float)
    clp = np.asarray(clip_tri, dtype=float)
    xs = list(sub[:, 0])
    ys = list(sub[:, 1])
    for e in range(3):
        ax, ay = clp[e]
        bx, by = clp[(e + 1) % 3]
        ex, ey = bx - ax, by - ay
        out_x, out_y = [], []
        n = len(xs)
        if n == 0:
            break
        for i in range(n):
            sx, sy = xs[i - 1], ys[i - 1]
            px, py = xs[i], ys[i]
            s_in = ex * (sy - ay) - ey * (sx - ax) >= 0.0
            p_in = ex * (py - ay) - ey * (px - ax) >= 0.0
            if p_in != s_in:
                # segment crosses the clip line: append the intersection
                dx, dy = px - sx, py - sy
                denom = ex * dy - ey * dx
                t = (ex * (ay - sy) - ey * (ax - sx)) / denom
                out_x.append(sx + t * dx)
                out_y.append(sy + t * dy)
            if p_in:
                out_x.append(px)
                out_y.append(py)
        xs, ys = out_x, out_y
    xs, ys = _dedup(xs, ys, merge_tol)
    if len(xs) < 3:
        return np.empty((0, 2))
    return np.column_stack([xs, ys])


def clip_against_candidates(subject, candidates, merge_tol=1e-12, min_area=0.0):
    """Clip one triangle against many candidate triangles.

    Parameters
    ----------
        subject : (3, 2) array, ccw triangle
        candidates : (m, 3, 2) array of ccw triangles
        merge_tol : vertex merge tolerance
        min_area : polygons with area below this are dropped

    Returns
    -------
        kept : int64 array of candidate indices with a nonempty clip
        polys : list of (k, 2) vertex arrays, parallel to `kept`
        areas : float array, parallel to `kept`
    """
    candidates = np.asarray(candidates, dtype=float)
    kept, polys, areas = [], [], []
    for j in range(len(candidates)):
        poly = clip_triangle(subject, candidates[j], merge_tol)
        if len(poly) < 3:
            continue
        a = polygon_area(poly)
        if a > min_area:
            kept.append(j)
            polys.append(poly)
            areas.append(a)
    return np.asarray(kept, dtype=np.int64), polys, np.asarray(areas, dtype=float)


def locate_points(pts, cell_coords, indptr, cand, tol=1e-12):
    """Find, per point, the lowest-id candidate triangle containing it.

    Containment means all barycentric coordinates >= -tol.  Candidate lists
    (CSR layout: cand[indptr[i]:indptr[i+1]] for point i) must be sorted
    ascending so ties on shared edges resolve to the lowest cell id.
    Returns -1 where no candidate contains the point.
    """
    pts = np.asarray(pts, dtype=float)
    cell_coords = np.asarray(cell_coords, dtype=float)
    n = len(pts)
    out = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        px, py = pts[i]
        for k in range(indptr[i], indptr[i + 1]):
            c = cand[k]
            (x0, y0), (x1, y1), (x2, y2) = cell_coords[c]
            det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            l1 = ((px - x0) * (y2 - y0) - (py - y0) * (x2 - x0)) / det
            l2 = ((x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)) / det
            if l1 >= -tol and l2 >= -tol and 1.0 - l1 - l2 >= -tol:
                out[i] = c
                break
    return out
