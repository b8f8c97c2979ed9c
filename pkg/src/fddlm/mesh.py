"""Conforming triangle meshes with uniform and adaptive refinement.

Two meshes drive everything downstream: a background triangulation of the
box domain and an independent triangulation of the immersed domain whose
boundary vertices are kept on the exact interface circle.  Meshes are
immutable; refinement operations return new meshes.

Cell convention: vertices are listed ccw and the refinement edge for
newest-vertex bisection is the edge between local vertices 0 and 1 (the
"peak", i.e. the newest vertex, sits at local 2).
"""

from dataclasses import dataclass

import numpy as np

# per-edge boundary markers
INTERIOR = 0
OUTER = 1
INTERFACE = 2


@dataclass(frozen=True)
class Point2:
    """A point of the plane."""

    x: float
    y: float

    def as_array(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class DiskGeometry:
    """Disk immersed in the background box; boundary vertices snap to it."""

    center: Point2
    radius: float

    def __post_init__(self):
        if not (self.radius > 0.0 and np.isfinite(self.radius)):
            raise ValueError("disk radius must be positive")

    def project(self, pts):
        """Radially project points onto the circle."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        c = self.center.as_array()
        d = pts - c
        r = np.linalg.norm(d, axis=1, keepdims=True)
        return c + self.radius * d / r


class Mesh:
    """Conforming triangulation with derived edge data.

    Attributes
    ----------
        vertices : (nv, 2) float array
        cells : (nc, 3) int array, ccw, refinement edge = local edge 0
        edges : (ne, 2) int array of sorted vertex pairs, lexicographic order
        cell_edges : (nc, 3) edge ids; local edge i joins vertices i, i+1
        edge_cells : (ne, 2) incident cells, -1 when absent
        edge_flags : (ne,) marker in {INTERIOR, OUTER, INTERFACE}
        generation : (nc,) refinement level per cell
        geometry : DiskGeometry or None, used for boundary snapping
    """

    def __init__(self, vertices, cells, boundary_flags=OUTER, generation=None,
                 geometry=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        self.nv = len(self.vertices)
        self.nc = len(self.cells)
        self.geometry = geometry
        if generation is None:
            generation = np.zeros(self.nc, dtype=np.int32)
        self.generation = np.asarray(generation, dtype=np.int32)

        areas = self.areas()
        if self.nc == 0 or np.any(areas <= 0.0):
            raise ValueError("mesh has empty, degenerate or misoriented cells")

        raw = np.sort(self.cells[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
        self.edges, inv = np.unique(raw, axis=0, return_inverse=True)
        self.ne = len(self.edges)
        self.cell_edges = inv.reshape(self.nc, 3).astype(np.int64)

        counts = np.bincount(inv, minlength=self.ne)
        if counts.max() > 2:
            raise ValueError("non-manifold edge: more than two incident cells")

        self.edge_cells = np.full((self.ne, 2), -1, dtype=np.int64)
        eidx = self.cell_edges.ravel()
        cidx = np.repeat(np.arange(self.nc, dtype=np.int64), 3)
        order = np.lexsort((cidx, eidx))
        se, sc = eidx[order], cidx[order]
        first = np.r_[True, se[1:] != se[:-1]]
        self.edge_cells[se[first], 0] = sc[first]
        self.edge_cells[se[~first], 1] = sc[~first]

        self.edge_flags = np.full(self.ne, INTERIOR, dtype=np.int8)
        on_boundary = counts == 1
        if isinstance(boundary_flags, (int, np.integer)):
            self.edge_flags[on_boundary] = boundary_flags
        else:
            for e in np.nonzero(on_boundary)[0]:
                key = (int(self.edges[e, 0]), int(self.edges[e, 1]))
                if key not in boundary_flags:
                    raise ValueError(f"boundary edge {key} has no marker")
                self.edge_flags[e] = boundary_flags[key]

    # -- geometry queries ------------------------------------------------

    def cell_coords(self):
        return self.vertices[self.cells]

    def areas(self):
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def diameters(self):
        """Per-cell diameter (longest edge)."""
        return self.edge_lengths()[self.cell_edges].max(axis=1)

    def bbox(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return lo[0], lo[1], hi[0], hi[1]

    def boundary_edge_ids(self):
        return np.nonzero(self.edge_flags != INTERIOR)[0]

    def boundary_vertex_mask(self, flag=None):
        """Vertices incident to boundary edges (optionally of one marker)."""
        if flag is None:
            eids = self.boundary_edge_ids()
        else:
            eids = np.nonzero(self.edge_flags == flag)[0]
        mask = np.zeros(self.nv, dtype=bool)
        mask[self.edges[eids].ravel()] = True
        return mask

    def boundary_polygon(self):
        """Ordered (ccw) vertex loop of the boundary."""
        eids = self.boundary_edge_ids()
        nbr = {}
        for a, b in self.edges[eids]:
            nbr.setdefault(int(a), []).append(int(b))
            nbr.setdefault(int(b), []).append(int(a))
        start = min(nbr)
        loop = [start]
        prev, cur = -1, start
        while True:
            nxt = [v for v in nbr[cur] if v != prev]
            if not nxt:
                raise ValueError("open boundary loop")
            prev, cur = cur, min(nxt)
            if cur == start:
                break
            loop.append(cur)
        pts = self.vertices[loop]
        x, y = pts[:, 0], pts[:, 1]
        if 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) < 0:
            loop.reverse()
        return np.asarray(loop, dtype=np.int64)

    def min_angle(self):
        """Smallest interior angle over all cells, in radians."""
        p = self.cell_coords()
        ang = np.empty((self.nc, 3))
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
            dot = (a * b).sum(axis=1)
            ang[:, i] = np.arctan2(np.abs(cross), dot)
        return float(ang.min())

    def _boundary_flag_map(self):
        out = {}
        for e in self.boundary_edge_ids():
            out[(int(self.edges[e, 0]), int(self.edges[e, 1]))] = int(self.edge_flags[e])
        return out


def mesh_size(mesh):
    """Largest cell diameter."""
    if mesh.nc == 0:
        raise ValueError("empty mesh")
    return float(mesh.diameters().max())


def _rotate_to_refinement_edge(vertices, cells):
    """Rotate each cell so the refinement edge (longest, ties by lowest
    vertex pair) becomes local edge 0."""
    cells = np.asarray(cells, dtype=np.int64)
    p = vertices[cells]
    d = p[:, [1, 2, 0], :] - p
    lsq = (d ** 2).sum(axis=2)
    va, vb = cells, cells[:, [1, 2, 0]]
    lo, hi = np.minimum(va, vb), np.maximum(va, vb)

    nc = len(cells)
    rows = np.arange(nc)
    best = np.zeros(nc, dtype=np.int64)
    for j in (1, 2):
        lb, lj = lsq[rows, best], lsq[:, j]
        tie = lj == lb
        take = lj > lb
        lob, hib = lo[rows, best], hi[rows, best]
        take |= tie & ((lo[:, j] < lob) | ((lo[:, j] == lob) & (hi[:, j] < hib)))
        best[take] = j
    cols = (best[:, None] + np.arange(3)[None, :]) % 3
    return np.take_along_axis(cells, cols, axis=1)


def build_rect_mesh(bbox, n):
    """Structured triangulation of an axis-aligned box.

    The box (xmin, ymin, xmax, ymax) is split into n x n squares, each cut
    along its lower-left to upper-right diagonal.  Outer edges are flagged
    OUTER.
    """
    xmin, ymin, xmax, ymax = map(float, bbox)
    if n < 1:
        raise ValueError("need at least one subdivision per axis")
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("degenerate box")

    xs = np.linspace(xmin, xmax, n + 1)
    ys = np.linspace(ymin, ymax, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    cells = _rotate_to_refinement_edge(vertices, np.asarray(cells, dtype=np.int64))

    flags = {}
    raw = np.sort(cells[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    uniq, inv = np.unique(raw, axis=0, return_inverse=True)
    counts = np.bincount(inv)
    for e in np.nonzero(counts == 1)[0]:
        flags[(int(uniq[e, 0]), int(uniq[e, 1]))] = OUTER
    return Mesh(vertices, cells, flags)


def build_disk_mesh(geom, level=0):
    """Polygonal triangulation of a disk, refined `level` times.

    Starts from a hexagonal fan around the center; every refinement snaps
    new boundary vertices back onto the circle, so all interface vertices
    lie on it to rounding accuracy.
    """
    if level < 0:
        raise ValueError("refinement level must be nonnegative")
    c = geom.center.as_array()
    ang = 2.0 * np.pi * np.arange(6) / 6.0
    ring = c + geom.radius * np.column_stack([np.cos(ang), np.sin(ang)])
    vertices = np.vstack([c, ring])
    cells = np.array([[1 + i, 1 + (i + 1) % 6, 0] for i in range(6)], dtype=np.int64)
    cells = _rotate_to_refinement_edge(vertices, cells)

    flags = {}
    for i in range(6):
        a, b = 1 + i, 1 + (i + 1) % 6
        flags[(min(a, b), max(a, b))] = INTERFACE
    mesh = Mesh(vertices, cells, flags, geometry=geom)
    for _ in range(level):
        mesh = uniform_refine(mesh)
    return mesh


def uniform_refine(mesh):
    """Split every triangle into four; midpoints on the interface are
    snapped onto the circle."""
    nv, ne = mesh.nv, mesh.ne
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    if mesh.geometry is not None:
        on_if = mesh.edge_flags == INTERFACE
        if on_if.any():
            mids[on_if] = mesh.geometry.project(mids[on_if])
    vertices = np.vstack([mesh.vertices, mids])
    mid_id = nv + np.arange(ne, dtype=np.int64)

    v0, v1, v2 = mesh.cells[:, 0], mesh.cells[:, 1], mesh.cells[:, 2]
    m01 = mid_id[mesh.cell_edges[:, 0]]
    m12 = mid_id[mesh.cell_edges[:, 1]]
    m20 = mid_id[mesh.cell_edges[:, 2]]
    children = np.stack([
        np.column_stack([v0, m01, m20]),
        np.column_stack([m01, v1, m12]),
        np.column_stack([m12, v2, m20]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    children = _rotate_to_refinement_edge(vertices, children)
    generation = np.repeat(mesh.generation + 1, 4)

    flags = {}
    for e in mesh.boundary_edge_ids():
        a, b = int(mesh.edges[e, 0]), int(mesh.edges[e, 1])
        m, f = int(mid_id[e]), int(mesh.edge_flags[e])
        flags[(min(a, m), max(a, m))] = f
        flags[(min(b, m), max(b, m))] = f
    return Mesh(vertices, children, flags, generation, mesh.geometry)


def bisect(mesh, marked):
    """Newest-vertex bisection of the marked cells plus conforming closure.

    Marking is propagated edge-wise: a cell with any marked edge must have
    its refinement edge marked too, so every marked edge ends up split in
    all incident cells and the result has no hanging nodes.
    """
    marked = np.asarray(sorted(set(int(c) for c in marked)), dtype=np.int64)
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.nc:
        raise ValueError("marked set contains invalid cell ids")

    ref_eid = mesh.cell_edges[:, 0]
    edge_marked = np.zeros(mesh.ne, dtype=bool)
    edge_marked[ref_eid[marked]] = True
    while True:
        need = edge_marked[mesh.cell_edges].any(axis=1) & ~edge_marked[ref_eid]
        if not need.any():
            break
        edge_marked[ref_eid[need]] = True

    split = np.nonzero(edge_marked)[0]
    mid_of_edge = np.full(mesh.ne, -1, dtype=np.int64)
    mid_of_edge[split] = mesh.nv + np.arange(len(split))
    mids = 0.5 * (mesh.vertices[mesh.edges[split, 0]] + mesh.vertices[mesh.edges[split, 1]])
    if mesh.geometry is not None:
        on_if = mesh.edge_flags[split] == INTERFACE
        if on_if.any():
            mids[on_if] = mesh.geometry.project(mids[on_if])
    vertices = np.vstack([mesh.vertices, mids])

    flags = {}
    for e in mesh.boundary_edge_ids():
        a, b = int(mesh.edges[e, 0]), int(mesh.edges[e, 1])
        f = int(mesh.edge_flags[e])
        if edge_marked[e]:
            m = int(mid_of_edge[e])
            flags[(min(a, m), max(a, m))] = f
            flags[(min(b, m), max(b, m))] = f
        else:
            flags[(a, b)] = f

    cells_out, gen_out = [], []
    em = edge_marked[mesh.cell_edges]
    for c in range(mesh.nc):
        v0, v1, v2 = mesh.cells[c]
        g = int(mesh.generation[c])
        if not em[c, 0]:
            cells_out.append((v0, v1, v2))
            gen_out.append(g)
            continue
        m0 = mid_of_edge[mesh.cell_edges[c, 0]]
        # child containing v0 (refinement edge = old edge v2-v0)
        if em[c, 2]:
            m2 = mid_of_edge[mesh.cell_edges[c, 2]]
            cells_out += [(m0, v2, m2), (v0, m0, m2)]
            gen_out += [g + 2, g + 2]
        else:
            cells_out.append((v2, v0, m0))
            gen_out.append(g + 1)
        # child containing v1 (refinement edge = old edge v1-v2)
        if em[c, 1]:
            m1 = mid_of_edge[mesh.cell_edges[c, 1]]
            cells_out += [(m0, v1, m1), (v2, m0, m1)]
            gen_out += [g + 2, g + 2]
        else:
            cells_out.append((v1, v2, m0))
            gen_out.append(g + 1)
    return Mesh(vertices, np.asarray(cells_out, dtype=np.int64), flags,
                np.asarray(gen_out, dtype=np.int32), mesh.geometry)


def check_mesh(mesh, tol=1e-12):
    """Assert the structural mesh invariants; raises ValueError on failure."""
    areas = mesh.areas()
    if np.any(areas <= 0.0):
        raise ValueError("nonpositive cell area")

    counts = (mesh.edge_cells >= 0).sum(axis=1)
    interior = mesh.edge_flags == INTERIOR
    if np.any(counts[interior] != 2):
        raise ValueError("interior edge without exactly two incident cells")
    if np.any(counts[~interior] != 1):
        raise ValueError("boundary edge with two incident cells")

    # no vertex may sit strictly inside a boundary edge (hanging node)
    for e in mesh.boundary_edge_ids():
        a = mesh.vertices[mesh.edges[e, 0]]
        b = mesh.vertices[mesh.edges[e, 1]]
        d = b - a
        ll = d @ d
        rel = mesh.vertices - a
        t = (rel @ d) / ll
        off = np.abs(d[0] * rel[:, 1] - d[1] * rel[:, 0])
        on_seg = (off <= tol * np.sqrt(ll)) & (t > tol) & (t < 1.0 - tol)
        if on_seg.any():
            raise ValueError("hanging node on boundary edge")

    loop = mesh.boundary_polygon()
    pts = mesh.vertices[loop]
    x, y = pts[:, 0], pts[:, 1]
    poly_area = 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    if abs(areas.sum() - poly_area) > 1e-12 * abs(poly_area):
        raise ValueError("cell areas do not tile the boundary polygon")

    if mesh.geometry is not None:
        on_if = mesh.boundary_vertex_mask(INTERFACE)
        r = np.linalg.norm(mesh.vertices[on_if] - mesh.geometry.center.as_array(), axis=1)
        if np.any(np.abs(r - mesh.geometry.radius) > 1e-12):
            raise ValueError("interface vertex off the circle")
