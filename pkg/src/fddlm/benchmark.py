"""Manufactured circle benchmark, error norms, and convergence rates.

The disk of radius 1 sits in the box [-1.4, 1.4]^2 with coefficients
(nu, nu2) = (1, 10) and the piecewise exact solution

    u1(x, y) = (4 - x^2 - y^2) / 4        outside the circle,
    u2(x, y) = (31 - x^2 - y^2) / 40      inside,

which is continuous with continuous conormal flux on the circle, and both
sources identically 1 (so the immersed load f2 - f vanishes).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import spaces
from .adaptivity import LevelRecord
from .mesh import DiskGeometry, Point2, mesh_size, uniform_refine
from .solver import ProblemData, solve_once

BOX = (-1.4, -1.4, 1.4, 1.4)


@dataclass(frozen=True)
class ExactSolution:
    """Piecewise closed-form solution with an analytic region classifier."""

    u1: object
    u2: object
    grad1: object
    grad2: object
    inside: object

    def value(self, pts):
        pts = np.atleast_2d(pts)
        return np.where(self.inside(pts), self.u2(pts), self.u1(pts))

    def gradient(self, pts):
        pts = np.atleast_2d(pts)
        mask = self.inside(pts)[:, None]
        return np.where(mask, self.grad2(pts), self.grad1(pts))


def circle_exact(scale=1.0):
    s = float(scale)

    def u1(p):
        return s * (4.0 - p[:, 0] ** 2 - p[:, 1] ** 2) / 4.0

    def u2(p):
        return s * (31.0 - p[:, 0] ** 2 - p[:, 1] ** 2) / 40.0

    def grad1(p):
        return -s * p / 2.0

    def grad2(p):
        return -s * p / 20.0

    def inside(p):
        return p[:, 0] ** 2 + p[:, 1] ** 2 <= 1.0

    return ExactSolution(u1, u2, grad1, grad2, inside)


def benchmark_rhs(scale=1.0):
    """Sources recovered from the exact solution: f = f2 = scale."""
    s = float(scale)

    def f(p):
        return np.full(len(np.atleast_2d(p)), s)

    return f, f


def circle_benchmark(scale=1.0):
    """Geometry, problem data, and exact solution of the circle test."""
    geom = DiskGeometry(Point2(0.0, 0.0), 1.0)
    f, f2 = benchmark_rhs(scale)
    data = ProblemData(nu=1.0, nu2=10.0, f=f, f2=f2)
    return geom, data, circle_exact(scale)


def error_norms(result, exact, degree=6):
    """(L2, H1) errors of the extended solution and H1 error of the
    immersed one.

    Background quadrature points are classified by the analytic region test
    so the measurement carries no mesh-intersection error; H1 norms are the
    full norms (L2 part included).
    """
    rule = spaces.triangle_rule(degree)

    def on_mesh(space, vec, value_fn, grad_fn):
        mesh = space.mesh
        pts = spaces.physical_points(mesh, rule.points)
        flat = pts.reshape(-1, 2)
        nq = len(rule.points)
        vals = spaces.basis_values(space.family, rule.points)
        loc = space.local_values(vec)
        uh = loc @ vals.T
        _, _, invB, _ = spaces.cell_maps(mesh)
        gref = spaces.basis_gradients(space.family, rule.points)
        g = np.einsum("cab,lkb->clka", np.swapaxes(invB, 1, 2), gref)
        guh = np.einsum("ck,clka->cla", loc, g)
        dv = uh - value_fn(flat).reshape(mesh.nc, nq)
        dg = guh - grad_fn(flat).reshape(mesh.nc, nq, 2)
        area = mesh.areas()
        l2_sq = ((dv ** 2) @ rule.weights * area).sum()
        h1_sq = l2_sq + (((dg ** 2).sum(axis=2)) @ rule.weights * area).sum()
        return math.sqrt(max(l2_sq, 0.0)), math.sqrt(max(h1_sq, 0.0))

    l2_u, h1_u = on_mesh(result.bg_space, result.u, exact.value, exact.gradient)
    _, h1_u2 = on_mesh(result.v2_space, result.u2, exact.u2, exact.grad2)
    return l2_u, h1_u, h1_u2


def eoc(errors, hs):
    """Orders from consecutive levels: log(e_{l-1}/e_l) / log(h_{l-1}/h_l).

    Levels with a vanishing error yield None (rate undefined).
    """
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("need matching error and size sequences, >= 2 levels")
    rates = []
    for e0, e1, h0, h1 in zip(errors, errors[1:], hs, hs[1:]):
        if e0 <= 0.0 or e1 <= 0.0:
            rates.append(None)
        else:
            rates.append(math.log(e0 / e1) / math.log(h0 / h1))
    return rates


def dof_eoc(errors, ndofs):
    """Rates against dof counts, with h replaced by ndof^(-1/2)."""
    return eoc(errors, [n ** -0.5 for n in ndofs])


def loglog_slope(xs, errors):
    """Least-squares slope of log(error) against log(x)."""
    xs = np.log(np.asarray(xs, dtype=float))
    es = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(xs, es, 1)[0])


def uniform_study(data, bg_mesh, imm_mesh, levels, exact=None, element="p1bubble-p0",
                  form="l2", mode=None, precond=None, gmres_tol=1e-12,
                  on_level=None, dirichlet=None):
    """Solve on `levels` uniformly refined mesh pairs; one record each."""
    import time

    from . import estimator as est
    from .solver import MultigridHierarchy

    records = []
    bg_chain = [bg_mesh]
    for level in range(levels):
        t0 = time.perf_counter()
        hierarchy = None
        if precond is not None and precond.inner_a == "multigrid" and level > 0:
            hierarchy = MultigridHierarchy(bg_chain, data.nu)
        result = solve_once(data, bg_mesh, imm_mesh, element=element,
                            form=form, mode=mode, precond=precond,
                            hierarchy=hierarchy, gmres_tol=gmres_tol,
                            dirichlet=dirichlet)
        ind = est.estimate(result, data)
        elapsed = time.perf_counter() - t0
        if exact is not None:
            e_l2, e_h1, e_h1_2 = error_norms(result, exact)
        else:
            e_l2 = e_h1 = e_h1_2 = float("nan")
        rec = LevelRecord(level, result.system.size, mesh_size(bg_mesh),
                          mesh_size(imm_mesh), e_l2, e_h1, e_h1_2,
                          ind.eta, ind.eta2, result.report.iterations, elapsed)
        records.append(rec)
        if on_level is not None:
            on_level(level, result, ind, rec)
        if level < levels - 1:
            bg_mesh = uniform_refine(bg_mesh)
            imm_mesh = uniform_refine(imm_mesh)
            bg_chain.append(bg_mesh)
    return records
