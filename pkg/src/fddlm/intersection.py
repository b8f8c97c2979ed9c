"""Geometric kernel for non-matching grids.

Builds, for every immersed cell, the list of convex polygons obtained by
clipping it against the background mesh, each tagged with the background
cell that contains it.  A packed R-tree over cell bounding boxes keeps the
candidate search sub-linear.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainViolationError

MERGE_TOL = 1e-12
# polygons below this fraction of the immersed cell area are dropped
REL_AREA_CUTOFF = 1e-14
# relative area defect beyond which the immersed cell is considered outside
DEFECT_LIMIT = 1e-9


class BoxIndex:
    """Packed (sort-tile-recursive) R-tree over per-cell bounding boxes."""

    def __init__(self, mesh, leaf_size=8):
        if mesh.nc == 0:
            raise ValueError("empty mesh")
        p = mesh.cell_coords()
        boxes = np.column_stack([
            p[:, :, 0].min(axis=1), p[:, :, 1].min(axis=1),
            p[:, :, 0].max(axis=1), p[:, :, 1].max(axis=1),
        ])
        n = len(boxes)
        nleaf = -(-n // leaf_size)
        nslab = int(np.ceil(np.sqrt(nleaf)))
        per_slab = leaf_size * int(np.ceil(nleaf / nslab))

        cx = 0.5 * (boxes[:, 0] + boxes[:, 2])
        cy = 0.5 * (boxes[:, 1] + boxes[:, 3])
        order = np.argsort(cx, kind="stable")
        chunks = []
        for s in range(0, n, per_slab):
            slab = order[s:s + per_slab]
            chunks.append(slab[np.argsort(cy[slab], kind="stable")])
        self.order = np.concatenate(chunks)

        self.leaf_size = leaf_size
        self.levels = [boxes[self.order]]
        while len(self.levels[-1]) > 1:
            low = self.levels[-1]
            m = len(low)
            groups = [low[s:s + leaf_size] for s in range(0, m, leaf_size)]
            up = np.array([
                [g[:, 0].min(), g[:, 1].min(), g[:, 2].max(), g[:, 3].max()]
                for g in groups
            ])
            self.levels.append(up)

    def query_box(self, xmin, ymin, xmax, ymax):
        """Ids of cells whose bounding box intersects the query box, sorted."""
        nodes = np.arange(len(self.levels[-1]), dtype=np.int64)
        for lvl in range(len(self.levels) - 1, -1, -1):
            b = self.levels[lvl][nodes]
            hit = ((b[:, 0] <= xmax) & (b[:, 2] >= xmin)
                   & (b[:, 1] <= ymax) & (b[:, 3] >= ymin))
            nodes = nodes[hit]
            if nodes.size == 0:
                return np.empty(0, dtype=np.int64)
            if lvl == 0:
                break
            children = (nodes[:, None] * self.leaf_size
                        + np.arange(self.leaf_size)[None, :]).ravel()
            nodes = children[children < len(self.levels[lvl - 1])]
        out = self.order[nodes]
        out.sort()
        return out

    def query_point(self, x, y):
        return self.query_box(x, y, x, y)


def locate_point(index, mesh, p, tol=1e-12):
    """Background cell whose closed triangle contains p, lowest id first.

    Returns None when p falls outside the mesh hull.
    """
    x, y = float(p[0]), float(p[1])
    cand = index.query_point(x, y)
    if cand.size == 0:
        return None
    indptr = np.array([0, cand.size], dtype=np.int64)
    hit = kernels.locate_points(np.array([[x, y]]), mesh.cell_coords(),
                                indptr, cand, tol)
    return int(hit[0]) if hit[0] >= 0 else None


def clip(tri_subject, tri_clip):
    """Convex intersection polygon of two ccw triangles, possibly empty."""
    return kernels.clip_triangle(np.asarray(tri_subject, dtype=float),
                                 np.asarray(tri_clip, dtype=float), MERGE_TOL)


def fan_triangulate(poly):
    """Partition a convex ccw polygon into triangles.

    A triangle passes through unchanged; larger polygons are fanned from
    their barycenter.  Returns an (t, 3, 2) array.
    """
    poly = np.asarray(poly, dtype=float)
    k = len(poly)
    if k < 3:
        raise ValueError("cannot triangulate an empty polygon")
    if k == 3:
        return poly[None, :, :]
    bary = poly.mean(axis=0)
    tris = np.empty((k, 3, 2))
    tris[:, 0] = bary
    tris[:, 1] = poly
    tris[:, 2] = np.roll(poly, -1, axis=0)
    return tris


def intersect_element(tri, bg_mesh, index):
    """Decompose one immersed triangle against the background mesh.

    Returns a list of (polygon, host cell id) pairs whose areas add back up
    to the triangle area; raises DomainViolationError if the triangle is
    not covered by the background mesh.
    """
    tri = np.asarray(tri, dtype=float)
    area = kernels.polygon_area(tri)
    cand = index.query_box(tri[:, 0].min(), tri[:, 1].min(),
                           tri[:, 0].max(), tri[:, 1].max())
    kept, polys, areas = kernels.clip_against_candidates(
        tri, bg_mesh.cell_coords()[cand], MERGE_TOL, REL_AREA_CUTOFF * area)
    hosts = cand[kept]
    defect = abs(areas.sum() - area) / area
    if defect > DEFECT_LIMIT:
        raise DomainViolationError(
            f"immersed cell not covered by background mesh "
            f"(relative area defect {defect:.3e})")
    return list(zip(polys, hosts))


@dataclass
class CompositeQuad:
    """Quadrature over all intersection polygons; weights absorb areas."""

    points: np.ndarray   # (N, 2) physical coordinates
    weights: np.ndarray  # (N,) such that sum(w * f(x)) integrates f
    host: np.ndarray     # (N,) background cell per point
    e2: np.ndarray       # (N,) immersed cell per point


class IntersectionMap:
    """Per immersed cell: clip polygons and their host background cells."""

    def __init__(self, imm_mesh, bg_mesh, polys, hosts, max_defect):
        self.imm_mesh = imm_mesh
        self.bg_mesh = bg_mesh
        self.polys = polys
        self.hosts = hosts
        self.max_defect = max_defect

    def entries(self, e2):
        return list(zip(self.polys[e2], self.hosts[e2]))

    def total_area(self):
        return sum(kernels.polygon_area(p) for ps in self.polys for p in ps)

    def area_defects(self):
        """Relative defect |sum_j area(P_j) - area(E2)| / area(E2) per cell."""
        cell_area = self.imm_mesh.areas()
        out = np.empty(self.imm_mesh.nc)
        for c in range(self.imm_mesh.nc):
            s = sum(kernels.polygon_area(p) for p in self.polys[c])
            out[c] = abs(s - cell_area[c]) / cell_area[c]
        return out

    def composite_quadrature(self, rule):
        """Map a reference-triangle rule onto every fan triangle at once."""
        by_k = {}
        for c, (ps, hs) in enumerate(zip(self.polys, self.hosts)):
            for p, h in zip(ps, hs):
                by_k.setdefault(len(p), [[], [], []])
                slot = by_k[len(p)]
                slot[0].append(p)
                slot[1].append(h)
                slot[2].append(c)

        xi = rule.points[:, 0]
        eta = rule.points[:, 1]
        pts_out, w_out, host_out, e2_out = [], [], [], []
        for k in sorted(by_k):
            polys, hosts, e2s = by_k[k]
            P = np.asarray(polys)              # (np, k, 2)
            hosts = np.asarray(hosts, dtype=np.int64)
            e2s = np.asarray(e2s, dtype=np.int64)
            if k == 3:
                T = P
                rep = 1
            else:
                bary = P.mean(axis=1)
                T = np.empty((len(P), k, 3, 2))
                T[:, :, 0] = bary[:, None, :]
                T[:, :, 1] = P
                T[:, :, 2] = np.roll(P, -1, axis=1)
                T = T.reshape(-1, 3, 2)
                rep = k
            d1 = T[:, 1] - T[:, 0]
            d2 = T[:, 2] - T[:, 0]
            tri_area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
            pts = (T[:, None, 0, :]
                   + xi[None, :, None] * d1[:, None, :]
                   + eta[None, :, None] * d2[:, None, :])
            w = tri_area[:, None] * rule.weights[None, :]
            pts_out.append(pts.reshape(-1, 2))
            w_out.append(w.ravel())
            host_out.append(np.repeat(hosts, rep * len(xi)))
            e2_out.append(np.repeat(e2s, rep * len(xi)))
        return CompositeQuad(np.concatenate(pts_out), np.concatenate(w_out),
                             np.concatenate(host_out), np.concatenate(e2_out))

    def to_csv(self, path):
        """Debug dump: one row per polygon with its vertex list."""
        with open(path, "w") as f:
            f.write("e2_id,host_id,area,vertices\n")
            for c in range(self.imm_mesh.nc):
                for p, h in zip(self.polys[c], self.hosts[c]):
                    verts = ";".join(f"{x!r}:{y!r}" for x, y in p)
                    f.write(f"{c},{h},{kernels.polygon_area(p)!r},{verts}\n")


def build_intersection_map(imm_mesh, bg_mesh, index=None):
    """Clip every immersed cell against the background mesh."""
    if index is None:
        index = BoxIndex(bg_mesh)
    coords = imm_mesh.cell_coords()
    cell_area = imm_mesh.areas()
    bg_coords = bg_mesh.cell_coords()

    polys, hosts = [], []
    max_defect = 0.0
    for c in range(imm_mesh.nc):
        tri = coords[c]
        cand = index.query_box(tri[:, 0].min(), tri[:, 1].min(),
                               tri[:, 0].max(), tri[:, 1].max())
        kept, ps, areas = kernels.clip_against_candidates(
            tri, bg_coords[cand], MERGE_TOL, REL_AREA_CUTOFF * cell_area[c])
        defect = abs(areas.sum() - cell_area[c]) / cell_area[c]
        if defect > DEFECT_LIMIT:
            raise DomainViolationError(
                f"immersed cell {c} not covered by background mesh "
                f"(relative area defect {defect:.3e})")
        max_defect = max(max_defect, defect)
        polys.append(ps)
        hosts.append(cand[kept])
    return IntersectionMap(imm_mesh, bg_mesh, polys, hosts, max_defect)
