"""Block system assembly, preconditioners, Krylov solve, and multigrid.

The discrete problem is the 3x3 saddle-point system

    [ A    0    C1^T ] [ u  ]   [ g  ]
    [ 0    A2  -C2^T ] [ u2 ] = [ g2 ]
    [ C1  -C2    0   ] [ l  ]   [ 0  ]

solved with restarted, right-preconditioned GMRES.  The diagonal and lower
triangular block preconditioners both need inverses of A and of the saddle
block L = [A2, -C2^T; -C2, 0]; A is inverted directly ("d") or by a damped
Jacobi V-cycle ("m"), L always directly.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import coupling, spaces
from .errors import FactorizationError, IncompatibleConfigError, NoConvergenceError
from .intersection import BoxIndex, build_intersection_map
from .mesh import uniform_refine
from .spaces import BasisFamily, FeSpace

ELEMENTS = {
    "p1p1p1": (BasisFamily.P1, BasisFamily.P1, BasisFamily.P1),
    "p1bubble-p0": (BasisFamily.P1, BasisFamily.P1_BUBBLE, BasisFamily.P0),
}


def validate_element_coupling(element, form):
    if element not in ELEMENTS:
        raise IncompatibleConfigError(f"unknown element family {element!r}")
    form = coupling.CouplingForm(form)
    if form == coupling.CouplingForm.H1 and ELEMENTS[element][2] == BasisFamily.P0:
        raise IncompatibleConfigError(
            "H1 coupling is incompatible with the P0 multiplier")
    return form


@dataclass
class ProblemData:
    """Coefficients and sources; the background pair is the extension of
    the outer-region data to the whole box."""

    nu: float
    nu2: float
    f: object
    f2: object
    allow_equal_coefficients: bool = False

    def __post_init__(self):
        if not self.nu > 0.0:
            raise ValueError("background coefficient must be positive")
        if self.nu2 <= self.nu:
            if not self.allow_equal_coefficients or self.nu2 < self.nu:
                raise ValueError("well-posedness needs nu2 > nu "
                                 "(set allow_equal_coefficients to override)")
            warnings.warn("nu2 == nu: immersed stiffness is zero, "
                          "well-posedness is not guaranteed")


@dataclass
class BlockSystem:
    A: sp.csr_matrix
    A2: sp.csr_matrix
    C1: sp.csr_matrix
    C2: sp.csr_matrix
    g: np.ndarray
    g2: np.ndarray
    g3: np.ndarray = None

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def n2(self):
        return self.A2.shape[0]

    @property
    def m(self):
        return self.C1.shape[0]

    @property
    def size(self):
        return self.n + self.n2 + self.m

    def full_matrix(self):
        if not hasattr(self, "_full"):
            self._full = sp.bmat([
                [self.A, None, self.C1.T],
                [None, self.A2, -self.C2.T],
                [self.C1, -self.C2, None],
            ], format="csr")
        return self._full

    def L_matrix(self):
        return sp.bmat([[self.A2, -self.C2.T], [-self.C2, None]], format="csc")

    def rhs(self):
        g3 = self.g3 if self.g3 is not None else np.zeros(self.m)
        return np.concatenate([self.g, self.g2, g3])

    def split(self, x):
        n, n2 = self.n, self.n2
        return x[:n], x[n:n + n2], x[n + n2:]

    def constraint_residual(self, u, u2):
        """Max-norm of the multiplier equation C1 u - C2 u2 = g3."""
        r = self.C1 @ u - self.C2 @ u2
        if self.g3 is not None:
            r = r - self.g3
        return float(np.abs(r).max()) if r.size else 0.0


def assemble_system(data, bg_space, v2_space, lambda_space, form, mode, geom,
                    load_degree=4):
    """Assemble all blocks of the saddle-point system.

    On a trace-constrained background space the stiffness and cross
    coupling are assembled on the unconstrained twin and reduced, so that
    attached boundary data turns into the nodal lifting contributions on
    the right-hand side (zero data reproduces plain elimination).
    """
    A2 = spaces.assemble_stiffness(v2_space, data.nu2 - data.nu,
                                   allow_semidefinite=data.allow_equal_coefficients)
    C2 = coupling.assemble_C2(lambda_space, v2_space, form)
    g = spaces.assemble_load(bg_space, data.f, degree=load_degree)

    def diff(p):
        return np.asarray(data.f2(p)) - np.asarray(data.f(p))

    g2 = spaces.assemble_load(v2_space, diff, degree=load_degree)

    if bg_space.zero_boundary:
        bg_full = FeSpace(bg_space.mesh, bg_space.family)
        free = np.nonzero(bg_space.vertex_dof >= 0)[0]
        A_full = spaces.assemble_stiffness(bg_full, data.nu)
        C1_full = coupling.assemble_C1(lambda_space, bg_full, geom, form, mode)
        A = A_full[free][:, free].tocsr()
        C1 = C1_full[:, free].tocsr()
        g3 = np.zeros(C1.shape[0])
        if bg_space.dirichlet_values is not None and np.any(bg_space.dirichlet_values):
            bnd = np.nonzero(bg_space.vertex_dof < 0)[0]
            gb = bg_space.dirichlet_values[bnd]
            g = g - A_full[free][:, bnd] @ gb
            g3 = -(C1_full[:, bnd] @ gb)
    else:
        A = spaces.assemble_stiffness(bg_space, data.nu)
        C1 = coupling.assemble_C1(lambda_space, bg_space, geom, form, mode)
        g3 = np.zeros(C1.shape[0])
    return BlockSystem(A, A2, C1, C2, g, g2, g3)


# -- direct and multigrid inner solvers --------------------------------------

class DirectSolver:
    """Sparse LU wrapper with a probe for unusable factors."""

    def __init__(self, mat):
        mat = sp.csc_matrix(mat)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", spla.MatrixRankWarning)
                self._lu = spla.splu(mat)
        except RuntimeError as exc:
            raise FactorizationError(f"sparse LU failed: {exc}") from exc
        rng = np.random.default_rng(0)
        v = rng.standard_normal(mat.shape[0])
        b = mat @ v
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise FactorizationError("factor produced non-finite solve")
        scale = np.linalg.norm(b)
        if scale > 0 and np.linalg.norm(mat @ x - b) > 1e-8 * scale:
            raise FactorizationError("factor failed the round-trip probe")

    def solve(self, b):
        return self._lu.solve(b)


def direct_solve(mat):
    """Factorize a block; returns a handle with .solve(rhs)."""
    return DirectSolver(mat)


class MultigridHierarchy:
    """P1 spaces and stiffness matrices on a chain of uniform refinements."""

    def __init__(self, meshes, coeff, zero_boundary=True):
        if len(meshes) < 2:
            raise ValueError("hierarchy needs at least two levels")
        self.meshes = meshes
        self.spaces = [FeSpace(m, BasisFamily.P1, zero_boundary) for m in meshes]
        self.mats = [spaces.assemble_stiffness(s, coeff) for s in self.spaces]
        self.prolongs = [
            _p1_prolongation(self.spaces[k], self.spaces[k + 1], meshes[k])
            for k in range(len(meshes) - 1)
        ]
        self.coarse = DirectSolver(self.mats[0])

    @classmethod
    def from_initial(cls, mesh, levels, coeff, zero_boundary=True):
        meshes = [mesh]
        for _ in range(levels):
            meshes.append(uniform_refine(meshes[-1]))
        return cls(meshes, coeff, zero_boundary)


def _p1_prolongation(coarse_space, fine_space, coarse_mesh):
    """Nodal P1 interpolation from a mesh to its uniform refinement.

    Relies on uniform_refine keeping coarse vertex ids and appending the
    midpoint of edge e as vertex nv + e.
    """
    nv_c = coarse_mesh.nv
    rows, cols, vals = [], [], []
    cdof = coarse_space.vertex_dof
    fdof = fine_space.vertex_dof
    for v in range(nv_c):
        if fdof[v] >= 0 and cdof[v] >= 0:
            rows.append(fdof[v])
            cols.append(cdof[v])
            vals.append(1.0)
    for e in range(coarse_mesh.ne):
        fv = nv_c + e
        if fdof[fv] < 0:
            continue
        for v in coarse_mesh.edges[e]:
            if cdof[v] >= 0:
                rows.append(fdof[fv])
                cols.append(cdof[v])
                vals.append(0.5)
    return sp.csr_matrix((vals, (rows, cols)),
                         shape=(fine_space.ndof, coarse_space.ndof))


def _jacobi(A, diag, b, x, steps, damping):
    for _ in range(steps):
        x = x + damping * (b - A @ x) / diag
    return x


def multigrid_vcycle(hier, rhs, cycles=1, smooth_steps=3, damping=2.0 / 3.0):
    """Fixed number of V-cycles from a zero initial guess (a linear map)."""
    diags = [m.diagonal() for m in hier.mats]

    def cycle(level, b):
        if level == 0:
            return hier.coarse.solve(b)
        A = hier.mats[level]
        x = _jacobi(A, diags[level], b, np.zeros_like(b), smooth_steps, damping)
        r = hier.prolongs[level - 1].T @ (b - A @ x)
        x = x + hier.prolongs[level - 1] @ cycle(level - 1, r)
        return _jacobi(A, diags[level], b, x, smooth_steps, damping)

    top = len(hier.mats) - 1
    x = np.zeros_like(rhs)
    for _ in range(cycles):
        x = x + cycle(top, rhs - hier.mats[top] @ x)
    return x


# -- preconditioners ----------------------------------------------------------

@dataclass
class PrecondConfig:
    """Block preconditioner choice: variant in {none, diag, tri}, inner A
    solve in {direct, multigrid} ("dd" / "md"), L always direct."""

    variant: str = "tri"
    inner_a: str = "direct"
    inner_l: str = "direct"
    mg_cycles: int = 2
    mg_smooth: int = 3
    mg_damping: float = 2.0 / 3.0

    def __post_init__(self):
        if self.variant not in ("none", "diag", "tri"):
            raise ValueError(f"unknown preconditioner variant {self.variant!r}")
        if self.inner_a not in ("direct", "multigrid"):
            raise ValueError(f"unknown inner A solver {self.inner_a!r}")
        if self.inner_l != "direct":
            raise ValueError("only the direct L-block solver is implemented")

    def label(self):
        inner = "dd" if self.inner_a == "direct" else "md"
        return f"{self.variant}/{inner}" if self.variant != "none" else "none"


class Preconditioner:
    """Applies the inverse of the chosen block preconditioner."""

    def __init__(self, cfg, system, hierarchy=None):
        self.cfg = cfg
        self.system = system
        if cfg.variant == "none":
            return
        if cfg.inner_a == "multigrid":
            if hierarchy is None:
                warnings.warn("no mesh hierarchy available, falling back to a "
                              "direct inner A solve")
                self._solve_a = DirectSolver(system.A).solve
            else:
                self._solve_a = lambda r: multigrid_vcycle(
                    hierarchy, r, cfg.mg_cycles, cfg.mg_smooth, cfg.mg_damping)
        else:
            self._solve_a = DirectSolver(system.A).solve
        self._solve_l = DirectSolver(system.L_matrix()).solve

    def apply(self, r):
        sysm = self.system
        if self.cfg.variant == "none":
            return r
        r1, r2, r3 = sysm.split(r)
        z1 = self._solve_a(r1)
        if self.cfg.variant == "tri":
            r3 = r3 - sysm.C1 @ z1
        zl = self._solve_l(np.concatenate([r2, r3]))
        return np.concatenate([z1, zl])


# -- GMRES ---------------------------------------------------------------------

@dataclass
class SolveReport:
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    history: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "timings": {k: round(v, 6) for k, v in self.timings.items()},
        }


def gmres(A, b, precond=None, tol=1e-12, restart=200, maxiter=4000):
    """Restarted GMRES, right-preconditioned.

    Solves A x = b by running Arnoldi on A P^{-1}; the iterate is recovered
    through the preconditioner, so the monitored residual is the true
    residual of the original system.  Raises NoConvergenceError (with the
    report attached) when the iteration budget runs out.
    """
    b = np.asarray(b, dtype=float)
    apply_p = precond.apply if precond is not None else (lambda r: r)
    matvec = (lambda v: A @ v) if not callable(A) else A

    t0 = time.perf_counter()
    report = SolveReport()
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        report.residual = 0.0
        report.timings["solve"] = time.perf_counter() - t0
        return np.zeros_like(b), report

    x = np.zeros_like(b)
    total = 0
    while True:
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        report.history.append(beta / norm_b)
        if beta / norm_b <= tol:
            break
        if total >= maxiter:
            report.iterations = total
            report.residual = beta / norm_b
            report.converged = False
            report.timings["solve"] = time.perf_counter() - t0
            err = NoConvergenceError(
                f"GMRES hit the iteration limit ({maxiter}) at relative "
                f"residual {beta / norm_b:.3e}", report)
            err.x = x
            raise err

        m = min(restart, maxiter - total)
        V = np.empty((m + 1, len(b)))
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        gamma = np.zeros(m + 1)
        gamma[0] = beta
        V[0] = r / beta
        k = 0
        for k in range(m):
            w = matvec(apply_p(V[k]))
            for i in range(k + 1):
                H[i, k] = w @ V[i]
                w -= H[i, k] * V[i]
            H[k + 1, k] = np.linalg.norm(w)
            if H[k + 1, k] > 0.0:
                V[k + 1] = w / H[k + 1, k]
            for i in range(k):
                hik = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = hik
            denom = np.hypot(H[k, k], H[k + 1, k])
            cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            gamma[k + 1] = -sn[k] * gamma[k]
            gamma[k] = cs[k] * gamma[k]
            total += 1
            report.history.append(abs(gamma[k + 1]) / norm_b)
            if abs(gamma[k + 1]) / norm_b <= tol:
                k += 1
                break
        else:
            k = m
        y = np.linalg.solve(np.triu(H[:k, :k]), gamma[:k])
        x = x + apply_p(V[:k].T @ y)

    report.iterations = total
    report.residual = float(np.linalg.norm(b - matvec(x)) / norm_b)
    report.timings["solve"] = time.perf_counter() - t0
    return x, report


# -- one full solve on a given mesh pair --------------------------------------

@dataclass
class SolveResult:
    bg_space: FeSpace
    v2_space: FeSpace
    lambda_space: FeSpace
    system: BlockSystem
    imap: object
    u: np.ndarray
    u2: np.ndarray
    lam: np.ndarray
    report: SolveReport


def solve_once(data, bg_mesh, imm_mesh, element="p1bubble-p0", form="l2",
               mode=None, precond=None, hierarchy=None, gmres_tol=1e-12,
               restart=200, maxiter=4000, dirichlet=None):
    """Assemble and solve the interface problem on one mesh pair.

    `dirichlet` is an optional trace datum on the outer boundary (nodal
    lifting; homogeneous when omitted).  The intersection map is always
    built: exact coupling assembly needs it and the a posteriori machinery
    integrates over it afterwards.
    """
    form = validate_element_coupling(element, form)
    mode = mode or coupling.AssemblyMode("exact")
    if precond is None:
        precond = PrecondConfig()

    fam_bg, fam_v2, fam_lam = ELEMENTS[element]
    bg_space = FeSpace(bg_mesh, fam_bg, zero_boundary=True)
    if dirichlet is not None:
        bg_space.set_dirichlet(dirichlet)
    v2_space = FeSpace(imm_mesh, fam_v2)
    lambda_space = FeSpace(imm_mesh, fam_lam)

    t0 = time.perf_counter()
    index = BoxIndex(bg_mesh)
    imap = build_intersection_map(imm_mesh, bg_mesh, index)
    geom = imap if mode.kind == "exact" else index
    system = assemble_system(data, bg_space, v2_space, lambda_space, form,
                             mode, geom)
    t_asm = time.perf_counter() - t0

    t0 = time.perf_counter()
    pc = Preconditioner(precond, system, hierarchy)
    t_fac = time.perf_counter() - t0

    x, report = gmres(system.full_matrix(), system.rhs(), pc, tol=gmres_tol,
                      restart=restart, maxiter=maxiter)
    report.timings["assemble"] = t_asm
    report.timings["factorize"] = t_fac
    u, u2, lam = system.split(x)
    return SolveResult(bg_space, v2_space, lambda_space, system, imap,
                       u, u2, lam, report)
