"""SOLVE - ESTIMATE - MARK - REFINE driver with bulk marking.

Both meshes are marked independently, each against its own global
estimator, and refined by conforming newest-vertex bisection in every
loop.  The bulk fraction acts on squared indicators: the marked set is the
minimal prefix of cells, sorted by descending indicator, whose squared sum
reaches alpha1^2 times the squared global estimator.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import estimator as est
from . import solver
from .coupling import AssemblyMode
from .errors import NoConvergenceError
from .mesh import bisect, mesh_size


@dataclass
class AdaptConfig:
    alpha1: float = 0.6
    tol: float = 1e-3
    max_loops: int = 30
    element: str = "p1bubble-p0"
    form: str = "l2"
    mode: AssemblyMode = field(default_factory=lambda: AssemblyMode("exact"))
    precond: solver.PrecondConfig = field(default_factory=solver.PrecondConfig)
    gmres_tol: float = 1e-12

    def __post_init__(self):
        if not 0.0 <= self.alpha1 <= 1.0:
            raise ValueError("bulk fraction must lie in [0, 1]")
        if not self.tol > 0.0:
            raise ValueError("stopping tolerance must be positive")


@dataclass
class LevelRecord:
    level: int
    ndof: int
    h: float
    h2: float
    errL2_u: float
    errH1_u: float
    errH1_u2: float
    eta: float
    eta2: float
    gmres_its: int
    time_s: float

    FIELDS = ("level", "ndof", "h", "h2", "errL2_u", "errH1_u", "errH1_u2",
              "eta", "eta2", "gmres_its", "time_s")

    def row(self):
        return [getattr(self, f) for f in self.FIELDS]


def dorfler_mark(indicators, alpha1):
    """Bulk marking on squared indicators.

    Returns the minimal set of cell ids, chosen by descending indicator
    (ties by lowest id), whose squared indicators sum to at least
    alpha1^2 times the total.
    """
    ind = np.asarray(indicators, dtype=float)
    if np.any(ind < 0.0):
        raise ValueError("indicators must be nonnegative")
    sq = ind ** 2
    total = sq.sum()
    theta = alpha1 ** 2 * total
    if theta <= 0.0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(sq)), -sq))
    csum = np.cumsum(sq[order])
    k = int(np.searchsorted(csum, theta * (1.0 - 1e-12), side="left")) + 1
    k = min(k, int(np.count_nonzero(sq)))
    return np.sort(order[:k])


def adaptive_loop(cfg, data, bg_mesh, imm_mesh, error_fn=None, on_level=None,
                  dirichlet=None):
    """Run the adaptive loop; returns one LevelRecord per level.

    `error_fn(result) -> (errL2_u, errH1_u, errH1_u2)` supplies the true
    errors when an exact solution is known (NaN columns otherwise).
    `on_level(level, result, indicators, record)` is called after each
    estimate, before marking.  On solver failure the partial records are
    attached to the raised NoConvergenceError.
    """
    records = []
    for level in range(cfg.max_loops):
        t0 = time.perf_counter()
        try:
            result = solver.solve_once(
                data, bg_mesh, imm_mesh, element=cfg.element, form=cfg.form,
                mode=cfg.mode, precond=cfg.precond, gmres_tol=cfg.gmres_tol,
                dirichlet=dirichlet)
        except NoConvergenceError as err:
            err.records = records
            raise
        ind = est.estimate(result, data)
        elapsed = time.perf_counter() - t0

        if error_fn is not None:
            e_l2, e_h1, e_h1_2 = error_fn(result)
        else:
            e_l2 = e_h1 = e_h1_2 = float("nan")
        rec = LevelRecord(level, result.system.size, mesh_size(bg_mesh),
                          mesh_size(imm_mesh), e_l2, e_h1, e_h1_2,
                          ind.eta, ind.eta2, result.report.iterations, elapsed)
        records.append(rec)
        if on_level is not None:
            on_level(level, result, ind, rec)

        if ind.eta + ind.eta2 <= cfg.tol or level == cfg.max_loops - 1:
            break
        marked_bg = dorfler_mark(ind.eta_E, cfg.alpha1)
        marked_imm = dorfler_mark(ind.eta_E2, cfg.alpha1)
        marked_bg = _ratio_guard(marked_bg, marked_imm, result.imap,
                                 bg_mesh, imm_mesh)
        bg_mesh = bisect(bg_mesh, marked_bg)
        imm_mesh = bisect(imm_mesh, marked_imm)
    return records


def _ratio_guard(marked_bg, marked_imm, imap, bg_mesh, imm_mesh):
    """Keep the local mesh ratio bounded across the interface.

    A multiplier mesh running much finer than the background it is coupled
    to destabilizes the multiplier (the indicators then stagnate), so any
    background cell hosting a marked immersed cell while being coarser than
    it is marked as well.
    """
    if marked_imm.size == 0:
        return marked_bg
    d_bg = bg_mesh.diameters()
    d_imm = imm_mesh.diameters()
    extra = []
    for c in marked_imm:
        for host in imap.hosts[c]:
            if d_bg[host] > d_imm[c]:
                extra.append(host)
    if not extra:
        return marked_bg
    return np.union1d(marked_bg, np.asarray(extra, dtype=np.int64))
