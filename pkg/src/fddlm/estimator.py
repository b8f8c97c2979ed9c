"""Residual a posteriori error indicators on both meshes.

Background cells E carry

    eta_E^2 = h_E^2 ||div(nu grad u_h) - lambda~_h + P0 f||_{0,E}^2
              + 1/2 sum_{interior e in dE} h_e ||jump(nu grad u_h . n)||_{0,e}^2

where lambda~_h is the discrete multiplier extended by zero outside the
immersed domain; inside cut cells it is integrated piecewise over the exact
intersection polygons.  Immersed cells E2 additionally carry the cross-mesh
difference ||u_h - u_2h||_{1,E2}^2 and full-weight flux terms on interface
edges.  Oscillations measure the cellwise data approximation h ||f - P0 f||.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import spaces
from .mesh import INTERFACE, INTERIOR
from .spaces import BasisFamily, edge_rule, triangle_rule


def oscillations(data, bg_mesh, imm_mesh, degree=4):
    """Per-cell data oscillation terms on both meshes."""

    def per_mesh(mesh, fn):
        rule = triangle_rule(degree)
        pts = spaces.physical_points(mesh, rule.points)
        fv = np.asarray(fn(pts.reshape(-1, 2))).reshape(mesh.nc, -1)
        mean = fv @ rule.weights
        sq = ((fv - mean[:, None]) ** 2) @ rule.weights * mesh.areas()
        return mesh.diameters() * np.sqrt(np.maximum(sq, 0.0))

    def diff(p):
        return np.asarray(data.f2(p)) - np.asarray(data.f(p))

    return per_mesh(bg_mesh, data.f), per_mesh(imm_mesh, diff)


def _p1_part_gradients(space, u):
    """Per-cell gradient of the vertex (P1) part of a field."""
    mesh = space.mesh
    _, _, invB, _ = spaces.cell_maps(mesh)
    g_hat = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    loc = space.local_values(u)[:, :3]
    gref = loc @ g_hat
    return np.einsum("cab,cb->ca", np.swapaxes(invB, 1, 2), gref)


def _edge_normals(mesh):
    d = mesh.vertices[mesh.edges[:, 1]] - mesh.vertices[mesh.edges[:, 0]]
    length = np.hypot(d[:, 0], d[:, 1])
    return np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None], length


def _edge_side_gradients(space, u, eids, side_cells, tpts):
    """Field gradients at edge quadrature points, seen from given cells."""
    mesh = space.mesh
    a = mesh.vertices[mesh.edges[eids, 0]]
    b = mesh.vertices[mesh.edges[eids, 1]]
    pts = a[:, None, :] + tpts[None, :, None] * (b - a)[:, None, :]
    npt = len(tpts)
    cells = np.repeat(side_cells, npt)
    ref = spaces.ref_coords(mesh, cells, pts.reshape(-1, 2))
    g = spaces.eval_function_gradient(space, u, cells, ref)
    return g.reshape(len(eids), npt, 2)


def background_indicator(u, lam, data, bg_space, lambda_space, imap, degree=4):
    """Per-cell indicator on the background mesh."""
    bg_mesh = bg_space.mesh
    imm_mesh = lambda_space.mesh
    rule = triangle_rule(degree)

    # element residual: for P1 the divergence term vanishes cellwise, so
    # r_E = -lambda~_h + P0 f with the multiplier integrated polygon-wise
    p0f = spaces.project_pc(data.f, bg_mesh, degree)
    area = bg_mesh.areas()
    cq = imap.composite_quadrature(rule)
    ref2 = spaces.ref_coords(imm_mesh, cq.e2, cq.points)
    lv = spaces.eval_function(lambda_space, lam, cq.e2, ref2)
    s1 = np.bincount(cq.host, weights=cq.weights * lv, minlength=bg_mesh.nc)
    s2 = np.bincount(cq.host, weights=cq.weights * lv * lv, minlength=bg_mesh.nc)
    rsq = np.maximum(p0f ** 2 * area - 2.0 * p0f * s1 + s2, 0.0)
    h = bg_mesh.diameters()
    eta_sq = h ** 2 * rsq

    # interior edge jumps of the conormal derivative
    grads = _p1_part_gradients(bg_space, u)
    normals, length = _edge_normals(bg_mesh)
    interior = np.nonzero(bg_mesh.edge_flags == INTERIOR)[0]
    cl = bg_mesh.edge_cells[interior, 0]
    cr = bg_mesh.edge_cells[interior, 1]
    jump = data.nu * ((grads[cl] - grads[cr]) * normals[interior]).sum(axis=1)
    contrib = 0.5 * length[interior] ** 2 * jump ** 2
    np.add.at(eta_sq, cl, contrib)
    np.add.at(eta_sq, cr, contrib)
    return np.sqrt(eta_sq)


def immersed_indicator(u, u2, lam, data, bg_space, v2_space, lambda_space,
                       imap, degree=4, cross_degree=6):
    """Per-cell indicator on the immersed mesh."""
    imm_mesh = v2_space.mesh
    bg_mesh = bg_space.mesh
    dnu = data.nu2 - data.nu
    rule = triangle_rule(degree)
    area = imm_mesh.areas()
    h = imm_mesh.diameters()

    # element residual (nu2-nu) lap(u_2h) + lambda_h + P0(f2 - f); the
    # Laplacian is nonzero only through the bubble component
    def dsrc(p):
        return np.asarray(data.f2(p)) - np.asarray(data.f(p))

    p0g = spaces.project_pc(dsrc, imm_mesh, degree)
    lam_loc = lambda_space.local_values(lam)
    zvals = spaces.basis_values(lambda_space.family, rule.points)
    lam_at = lam_loc @ zvals.T  # (nc, L)

    lap = np.zeros((imm_mesh.nc, len(rule.points)))
    if v2_space.family == BasisFamily.P1_BUBBLE:
        _, _, invB, _ = spaces.cell_maps(imm_mesh)
        g_hat = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        g = np.einsum("cab,kb->cka", np.swapaxes(invB, 1, 2), g_hat)
        d01 = (g[:, 0] * g[:, 1]).sum(axis=1)
        d02 = (g[:, 0] * g[:, 2]).sum(axis=1)
        d12 = (g[:, 1] * g[:, 2]).sum(axis=1)
        xi, eta_r = rule.points[:, 0], rule.points[:, 1]
        lamb = np.column_stack([1.0 - xi - eta_r, xi, eta_r])
        bub = v2_space.local_values(u2)[:, 3]
        lap = 54.0 * bub[:, None] * (np.outer(d01, lamb[:, 2])
                                     + np.outer(d02, lamb[:, 1])
                                     + np.outer(d12, lamb[:, 0]))
    r = dnu * lap + lam_at + p0g[:, None]
    eta_sq = h ** 2 * (r ** 2 @ rule.weights) * area

    # cross-mesh difference ||u_h - u_2h||_{1,E2}^2 over the intersection
    cq = imap.composite_quadrature(triangle_rule(cross_degree))
    refb = spaces.ref_coords(bg_mesh, cq.host, cq.points)
    ref2 = spaces.ref_coords(imm_mesh, cq.e2, cq.points)
    dv = (spaces.eval_function(bg_space, u, cq.host, refb)
          - spaces.eval_function(v2_space, u2, cq.e2, ref2))
    dg = (spaces.eval_function_gradient(bg_space, u, cq.host, refb)
          - spaces.eval_function_gradient(v2_space, u2, cq.e2, ref2))
    cross = cq.weights * (dv ** 2 + (dg ** 2).sum(axis=1))
    eta_sq += np.maximum(np.bincount(cq.e2, weights=cross,
                                     minlength=imm_mesh.nc), 0.0)

    # edge terms: interior jumps at half weight, interface flux at full
    normals, length = _edge_normals(imm_mesh)
    tpts, tw = edge_rule(3)

    interior = np.nonzero(imm_mesh.edge_flags == INTERIOR)[0]
    if interior.size:
        cl = imm_mesh.edge_cells[interior, 0]
        cr = imm_mesh.edge_cells[interior, 1]
        gl = _edge_side_gradients(v2_space, u2, interior, cl, tpts)
        gr = _edge_side_gradients(v2_space, u2, interior, cr, tpts)
        jmp = dnu * ((gl - gr) * normals[interior][:, None, :]).sum(axis=2)
        nrm_sq = (jmp ** 2 @ tw) * length[interior]
        contrib = 0.5 * length[interior] * nrm_sq
        np.add.at(eta_sq, cl, contrib)
        np.add.at(eta_sq, cr, contrib)

    gamma = np.nonzero(imm_mesh.edge_flags == INTERFACE)[0]
    if gamma.size:
        cg = imm_mesh.edge_cells[gamma, 0]
        gg = _edge_side_gradients(v2_space, u2, gamma, cg, tpts)
        flux = dnu * (gg * normals[gamma][:, None, :]).sum(axis=2)
        nrm_sq = (flux ** 2 @ tw) * length[gamma]
        np.add.at(eta_sq, cg, length[gamma] * nrm_sq)

    return np.sqrt(eta_sq)


def global_estimators(eta_E, eta_E2):
    """Square roots of the compensated sums of squared indicators."""
    eta = math.sqrt(math.fsum(float(v) * float(v) for v in eta_E))
    eta2 = math.sqrt(math.fsum(float(v) * float(v) for v in eta_E2))
    return eta, eta2


@dataclass
class IndicatorField:
    """Per-cell indicators and oscillations with their global roll-ups."""

    eta_E: np.ndarray
    eta_E2: np.ndarray
    osc_E: np.ndarray
    osc_E2: np.ndarray
    eta: float
    eta2: float


def estimate(result, data, degree=4, cross_degree=6):
    """Evaluate all indicator fields for a solved state."""
    eta_E = background_indicator(result.u, result.lam, data, result.bg_space,
                                 result.lambda_space, result.imap, degree)
    eta_E2 = immersed_indicator(result.u, result.u2, result.lam, data,
                                result.bg_space, result.v2_space,
                                result.lambda_space, result.imap, degree,
                                cross_degree)
    osc_E, osc_E2 = oscillations(data, result.bg_space.mesh,
                                 result.v2_space.mesh, degree)
    eta, eta2 = global_estimators(eta_E, eta_E2)
    return IndicatorField(eta_E, eta_E2, osc_E, osc_E2, eta, eta2)
