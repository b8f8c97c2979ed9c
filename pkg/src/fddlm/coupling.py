"""Assembly of the interface matrices coupling multiplier and fields.

C2 pairs the multiplier with the immersed field on their shared mesh and is
standard single-mesh assembly.  C1 pairs the multiplier with background
basis functions restricted to the immersed domain, which requires
integration over non-matching grids: exactly via the intersection
polygons, or inexactly with one rule per immersed cell plus point location.
Matrix layout: rows are multiplier dofs, columns field dofs.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels, spaces
from .errors import DomainViolationError, IncompatibleConfigError
from .intersection import BoxIndex, IntersectionMap
from .spaces import BasisFamily, triangle_rule


class CouplingForm(str, Enum):
    L2 = "l2"
    H1 = "h1"


@dataclass(frozen=True)
class AssemblyMode:
    """Exact (mesh intersection) or inexact (per-cell rule of given degree)."""

    kind: str
    degree: int = 5

    def __post_init__(self):
        if self.kind not in ("exact", "inexact"):
            raise ValueError(f"unknown assembly mode {self.kind!r}")
        if self.kind == "inexact" and self.degree < 1:
            raise ValueError("inexact quadrature degree must be >= 1")

    @classmethod
    def parse(cls, text):
        """Parse 'exact' or 'inexact:<degree>' (bare 'inexact' = degree 5)."""
        if text == "exact":
            return cls("exact")
        if text == "inexact":
            return cls("inexact")
        if text.startswith("inexact:"):
            return cls("inexact", int(text.split(":", 1)[1]))
        raise ValueError(f"cannot parse assembly mode {text!r}")

    def label(self):
        return self.kind if self.kind == "exact" else f"inexact:{self.degree}"


def _check_multiplier(lambda_space, form):
    if form == CouplingForm.H1 and lambda_space.family == BasisFamily.P0:
        raise IncompatibleConfigError(
            "H1 coupling needs a continuous multiplier space")


def assemble_C2(lambda_space, v2_space, form, degree=4):
    """Single-mesh pairing matrix (rows: multiplier, cols: immersed field)."""
    form = CouplingForm(form)
    _check_multiplier(lambda_space, form)
    if lambda_space.mesh is not v2_space.mesh:
        raise IncompatibleConfigError(
            "multiplier and immersed field must share one mesh")
    mesh = lambda_space.mesh
    rule = triangle_rule(degree)
    zeta = spaces.basis_values(lambda_space.family, rule.points)
    psi = spaces.basis_values(v2_space.family, rule.points)
    area = mesh.areas()
    local = np.einsum("l,lk,li->ki", rule.weights, zeta, psi)[None, :, :]
    local = local * area[:, None, None]
    if form == CouplingForm.H1:
        _, _, invB, _ = spaces.cell_maps(mesh)
        invBT = np.swapaxes(invB, 1, 2)
        gz = np.einsum("cab,lkb->clka",
                       invBT, spaces.basis_gradients(lambda_space.family, rule.points))
        gp = np.einsum("cab,lib->clia",
                       invBT, spaces.basis_gradients(v2_space.family, rule.points))
        local = local + np.einsum("l,clka,clia->cki",
                                  rule.weights, gz, gp) * area[:, None, None]

    mloc, nloc = lambda_space.nloc, v2_space.nloc
    rows = np.repeat(lambda_space.cell_dofs, nloc, axis=1).ravel()
    cols = np.tile(v2_space.cell_dofs, (1, mloc)).ravel()
    return spaces._scatter_matrix(rows, cols, local.ravel(),
                                  (lambda_space.ndof, v2_space.ndof))


def _accumulate_cross(lambda_space, bg_space, pts, w, e2, host, form):
    """Shared scatter path for both C1 assembly modes."""
    imm_mesh = lambda_space.mesh
    bg_mesh = bg_space.mesh
    ref2 = spaces.ref_coords(imm_mesh, e2, pts)
    refb = spaces.ref_coords(bg_mesh, host, pts)
    zeta = spaces.basis_values(lambda_space.family, ref2)
    phi = spaces.basis_values(bg_space.family, refb)
    data = np.einsum("n,nk,ni->nki", w, zeta, phi)
    if CouplingForm(form) == CouplingForm.H1:
        gz = spaces.basis_gradients(lambda_space.family, ref2)
        gp = spaces.basis_gradients(bg_space.family, refb)
        _, _, invB2, _ = spaces.cell_maps(imm_mesh)
        _, _, invBb, _ = spaces.cell_maps(bg_mesh)
        gz = np.einsum("nab,nkb->nka", np.swapaxes(invB2[e2], 1, 2), gz)
        gp = np.einsum("nab,nib->nia", np.swapaxes(invBb[host], 1, 2), gp)
        data += np.einsum("n,nka,nia->nki", w, gz, gp)

    mloc, nloc = lambda_space.nloc, bg_space.nloc
    rows = np.repeat(lambda_space.cell_dofs[e2], nloc, axis=1).ravel()
    cols = np.tile(bg_space.cell_dofs[host], (1, mloc)).ravel()
    return spaces._scatter_matrix(rows, cols, data.ravel(),
                                  (lambda_space.ndof, bg_space.ndof))


def assemble_C1(lambda_space, bg_space, geom, form, mode, exact_degree=4):
    """Cross-mesh pairing matrix (rows: multiplier, cols: background field).

    geom is an IntersectionMap in exact mode and a BoxIndex over the
    background mesh in inexact mode.
    """
    form = CouplingForm(form)
    _check_multiplier(lambda_space, form)
    mode = mode if isinstance(mode, AssemblyMode) else AssemblyMode.parse(mode)

    if mode.kind == "exact":
        if not isinstance(geom, IntersectionMap):
            raise IncompatibleConfigError("exact assembly needs an IntersectionMap")
        cq = geom.composite_quadrature(triangle_rule(exact_degree))
        return _accumulate_cross(lambda_space, bg_space, cq.points, cq.weights,
                                 cq.e2, cq.host, form)

    if not isinstance(geom, BoxIndex):
        raise IncompatibleConfigError("inexact assembly needs a BoxIndex")
    imm_mesh = lambda_space.mesh
    bg_mesh = bg_space.mesh
    rule = triangle_rule(mode.degree)
    L = len(rule.points)
    pts = spaces.physical_points(imm_mesh, rule.points).reshape(-1, 2)
    w = np.repeat(imm_mesh.areas(), L) * np.tile(rule.weights, imm_mesh.nc)
    e2 = np.repeat(np.arange(imm_mesh.nc, dtype=np.int64), L)

    # one candidate query per immersed cell, shared by its rule points
    coords = imm_mesh.cell_coords()
    index = geom
    cands, counts = [], np.empty(imm_mesh.nc, dtype=np.int64)
    for c in range(imm_mesh.nc):
        tri = coords[c]
        cand = index.query_box(tri[:, 0].min(), tri[:, 1].min(),
                               tri[:, 0].max(), tri[:, 1].max())
        cands.append(cand)
        counts[c] = len(cand)
    indptr = np.zeros(imm_mesh.nc * L + 1, dtype=np.int64)
    indptr[1:] = np.repeat(counts, L).cumsum()
    cand_flat = np.concatenate([np.tile(c, L) for c in cands])
    host = kernels.locate_points(pts, bg_mesh.cell_coords(), indptr, cand_flat)
    if (host < 0).any():
        bad = pts[host < 0][:5]
        raise DomainViolationError(
            f"quadrature nodes outside the background mesh, e.g. {bad.tolist()}")
    return _accumulate_cross(lambda_space, bg_space, pts, w, e2, host, form)
