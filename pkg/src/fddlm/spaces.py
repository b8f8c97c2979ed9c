"""Scalar finite element spaces, quadrature, and single-mesh assembly.

Families: continuous P1, continuous P1 enriched with the cubic cell bubble
27*l0*l1*l2, and discontinuous P0.  All data callables take an (N, 2) array
of points and return (N,) values.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

from .mesh import OUTER


class BasisFamily(str, Enum):
    P1 = "p1"
    P1_BUBBLE = "p1+bubble"
    P0 = "p0"


@dataclass(frozen=True)
class QuadRule:
    """Reference-triangle rule; weights sum to 1, the cell area multiplies
    in at mapping time."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


_RULES = {}


def _conical_rule(degree):
    n = (degree + 2) // 2
    x_leg, w_leg = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (x_leg + 1.0)
    wt = 0.5 * w_leg
    x_jac, w_jac = roots_jacobi(n, 1, 0)
    xi = 0.5 * (x_jac + 1.0)
    wxi = 0.25 * w_jac
    XI, T = np.meshgrid(xi, t, indexing="ij")
    ETA = T * (1.0 - XI)
    W = np.outer(wxi, wt)
    pts = np.column_stack([XI.ravel(), ETA.ravel()])
    return pts, 2.0 * W.ravel()


def triangle_rule(degree):
    """Positive-weight rule exact for polynomials of the given total degree."""
    if degree < 1:
        raise ValueError("quadrature degree must be >= 1")
    if degree not in _RULES:
        if degree == 5:
            # symmetric 7-point rule: centroid plus two orbits
            s = np.sqrt(15.0)
            a1, w1 = (6.0 - s) / 21.0, (155.0 - s) / 1200.0
            a2, w2 = (6.0 + s) / 21.0, (155.0 + s) / 1200.0
            pts = [(1 / 3, 1 / 3)]
            wts = [9.0 / 40.0]
            for a, w in ((a1, w1), (a2, w2)):
                pts += [(a, a), (1 - 2 * a, a), (a, 1 - 2 * a)]
                wts += [w, w, w]
            pts, wts = np.asarray(pts), np.asarray(wts)
        else:
            pts, wts = _conical_rule(degree)
        _RULES[degree] = QuadRule(pts, wts, degree)
    return _RULES[degree]


def edge_rule(npts=3):
    """Gauss rule on [0, 1]; weights sum to 1."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


# -- reference bases ---------------------------------------------------------

def _nloc(family):
    return {BasisFamily.P1: 3, BasisFamily.P1_BUBBLE: 4, BasisFamily.P0: 1}[family]


def basis_values(family, pts):
    """Reference basis values, shape (npts, nloc)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    xi, eta = pts[:, 0], pts[:, 1]
    lam = np.column_stack([1.0 - xi - eta, xi, eta])
    if family == BasisFamily.P0:
        return np.ones((len(pts), 1))
    if family == BasisFamily.P1:
        return lam
    bubble = 27.0 * lam[:, 0] * lam[:, 1] * lam[:, 2]
    return np.column_stack([lam, bubble])


def basis_gradients(family, pts):
    """Reference basis gradients, shape (npts, nloc, 2)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = len(pts)
    g_hat = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if family == BasisFamily.P0:
        return np.zeros((n, 1, 2))
    if family == BasisFamily.P1:
        return np.broadcast_to(g_hat, (n, 3, 2)).copy()
    xi, eta = pts[:, 0], pts[:, 1]
    lam = np.column_stack([1.0 - xi - eta, xi, eta])
    out = np.empty((n, 4, 2))
    out[:, :3] = g_hat
    out[:, 3] = 27.0 * (lam[:, [1]] * lam[:, [2]] * g_hat[0]
                        + lam[:, [0]] * lam[:, [2]] * g_hat[1]
                        + lam[:, [0]] * lam[:, [1]] * g_hat[2])
    return out


# -- affine cell maps --------------------------------------------------------

def cell_maps(mesh):
    """Affine maps x = v0 + B*(xi, eta): returns (v0, B, invB, det)."""
    p = mesh.cell_coords()
    v0 = p[:, 0]
    B = np.stack([p[:, 1] - v0, p[:, 2] - v0], axis=2)
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    invB = np.empty_like(B)
    invB[:, 0, 0] = B[:, 1, 1] / det
    invB[:, 0, 1] = -B[:, 0, 1] / det
    invB[:, 1, 0] = -B[:, 1, 0] / det
    invB[:, 1, 1] = B[:, 0, 0] / det
    return v0, B, invB, det


def ref_coords(mesh, cell_ids, pts):
    """Reference coordinates of physical points inside the given cells."""
    v0, _, invB, _ = cell_maps(mesh)
    rel = np.asarray(pts, dtype=float) - v0[cell_ids]
    return np.einsum("nab,nb->na", invB[cell_ids], rel)


def physical_points(mesh, ref_pts):
    """Map reference points into every cell: shape (nc, npts, 2)."""
    v0, B, _, _ = cell_maps(mesh)
    ref_pts = np.atleast_2d(ref_pts)
    return v0[:, None, :] + np.einsum("cab,lb->cla", B, ref_pts)


class FeSpace:
    """A basis family bound to a mesh with a global dof numbering.

    With zero_boundary=True every dof sitting on an OUTER-flagged edge is
    eliminated; cell_dofs carries -1 there and coefficient vectors only
    store the free dofs.
    """

    def __init__(self, mesh, family, zero_boundary=False):
        self.mesh = mesh
        self.family = BasisFamily(family)
        self.zero_boundary = bool(zero_boundary)
        self.nloc = _nloc(self.family)
        self.dirichlet_values = None

        if self.family == BasisFamily.P0:
            if zero_boundary:
                raise ValueError("P0 space cannot carry a trace constraint")
            self.vertex_dof = None
            self.cell_dofs = np.arange(mesh.nc, dtype=np.int64)[:, None]
            self.ndof = mesh.nc
            return

        self.vertex_dof = np.full(mesh.nv, -1, dtype=np.int64)
        if zero_boundary:
            free = ~mesh.boundary_vertex_mask(OUTER)
        else:
            free = np.ones(mesh.nv, dtype=bool)
        self.vertex_dof[free] = np.arange(free.sum())
        nfree = int(free.sum())

        dofs = self.vertex_dof[mesh.cells]
        if self.family == BasisFamily.P1_BUBBLE:
            bub = nfree + np.arange(mesh.nc, dtype=np.int64)
            dofs = np.column_stack([dofs, bub])
            self.ndof = nfree + mesh.nc
        else:
            self.ndof = nfree
        self.cell_dofs = dofs

    def set_dirichlet(self, fn):
        """Attach boundary data: eliminated vertex dofs evaluate to fn
        instead of zero (the nodal lifting of the trace)."""
        if not self.zero_boundary:
            raise ValueError("space carries no trace constraint")
        vals = np.zeros(self.mesh.nv)
        bnd = self.vertex_dof < 0
        vals[bnd] = np.asarray(fn(self.mesh.vertices[bnd]))
        self.dirichlet_values = vals

    def local_values(self, u):
        """Per-cell local coefficient table; eliminated dofs evaluate to the
        attached boundary data (zero when none is set)."""
        loc = np.zeros((self.mesh.nc, self.nloc))
        ok = self.cell_dofs >= 0
        if self.dirichlet_values is not None:
            dv = self.dirichlet_values[self.mesh.cells]
            miss = ~ok[:, :3]
            loc[:, :3][miss] = dv[miss]
        loc[ok] = np.asarray(u)[self.cell_dofs[ok]]
        return loc

    def interpolate(self, fn):
        """Nodal interpolation: vertex values (bubbles 0, P0 cell means)."""
        if self.family == BasisFamily.P0:
            return project_pc(fn, self.mesh)
        u = np.zeros(self.ndof)
        free = self.vertex_dof >= 0
        u[self.vertex_dof[free]] = np.asarray(fn(self.mesh.vertices[free]))
        return u


def eval_basis(space, cell, pts):
    """Basis values and physical-space gradients on one cell.

    Returns (values (npts, nloc), gradients (npts, nloc, 2)).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    vals = basis_values(space.family, pts)
    gref = basis_gradients(space.family, pts)
    _, _, invB, _ = cell_maps(space.mesh)
    g = np.einsum("ab,lkb->lka", invB[cell].T, gref)
    return vals, g


def eval_function(space, u, cells, ref_pts):
    """Values of a discrete function at scattered points (one cell each)."""
    vals = basis_values(space.family, ref_pts)
    loc = space.local_values(u)[cells]
    return (vals * loc).sum(axis=1)


def eval_function_gradient(space, u, cells, ref_pts):
    """Physical gradients of a discrete function at scattered points."""
    gref = basis_gradients(space.family, ref_pts)
    _, _, invB, _ = cell_maps(space.mesh)
    invBT = np.swapaxes(invB[cells], 1, 2)
    g = np.einsum("nab,nkb->nka", invBT, gref)
    loc = space.local_values(u)[cells]
    return (loc[:, :, None] * g).sum(axis=1)


def _scatter_matrix(rows, cols, data, shape):
    ok = (rows >= 0) & (cols >= 0)
    return sp.coo_matrix((data[ok], (rows[ok], cols[ok])), shape=shape).tocsr()


def assemble_stiffness(space, coeff, allow_semidefinite=False, degree=4):
    """Stiffness matrix coeff * (grad phi_j, grad phi_i).

    Parameters
    ----------
        space : FeSpace
        coeff : constant diffusion coefficient; must be positive unless
            allow_semidefinite is set (then >= 0 is accepted)
        degree : quadrature degree

    Returns
    -------
        scipy.sparse.csr_matrix of shape (ndof, ndof)
    """
    if coeff <= 0.0 and not allow_semidefinite:
        raise ValueError("nonpositive diffusion coefficient requires an "
                         "explicit override")
    if coeff < 0.0:
        raise ValueError("negative diffusion coefficient")
    rule = triangle_rule(degree)
    mesh = space.mesh
    _, _, invB, det = cell_maps(mesh)
    gref = basis_gradients(space.family, rule.points)
    invBT = np.swapaxes(invB, 1, 2)
    g = np.einsum("cab,lkb->clka", invBT, gref)
    area = 0.5 * det
    # scale both factors by sqrt(w) so the local matrix is bit-symmetric
    g = g * np.sqrt(rule.weights)[None, :, None, None]
    local = coeff * np.einsum("clia,clja->cij", g, g)
    local *= area[:, None, None]

    nloc = space.nloc
    rows = np.repeat(space.cell_dofs, nloc, axis=1).ravel()
    cols = np.tile(space.cell_dofs, (1, nloc)).ravel()
    return _scatter_matrix(rows, cols, local.ravel(), (space.ndof, space.ndof))


def assemble_load(space, fn, degree=4):
    """Load vector (f, phi_i) by quadrature of the given degree."""
    rule = triangle_rule(degree)
    mesh = space.mesh
    pts = physical_points(mesh, rule.points)
    fvals = np.asarray(fn(pts.reshape(-1, 2))).reshape(mesh.nc, -1)
    vals = basis_values(space.family, rule.points)
    area = mesh.areas()
    local = np.einsum("l,cl,li->ci", rule.weights, fvals, vals) * area[:, None]

    out = np.zeros(space.ndof)
    ok = space.cell_dofs >= 0
    np.add.at(out, space.cell_dofs[ok], local[ok])
    return out


def project_pc(fn, mesh, degree=4):
    """Cellwise mean values (L2 projection onto piecewise constants)."""
    rule = triangle_rule(degree)
    pts = physical_points(mesh, rule.points)
    fvals = np.asarray(fn(pts.reshape(-1, 2))).reshape(mesh.nc, -1)
    return fvals @ rule.weights
