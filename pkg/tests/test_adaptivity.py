import numpy as np
import pytest

from fddlm import benchmark as bench
from fddlm.adaptivity import AdaptConfig, LevelRecord, adaptive_loop, dorfler_mark
from fddlm.mesh import build_disk_mesh, build_rect_mesh


def test_dorfler_zero_fraction():
    assert dorfler_mark([1.0, 2.0, 3.0], 0.0).size == 0


def test_dorfler_full_fraction_marks_nonzero():
    out = dorfler_mark([1.0, 0.0, 2.0, 0.0], 1.0)
    assert out.tolist() == [0, 2]


def test_dorfler_hand_example():
    # squares sum to 14; threshold 0.36 * 14 = 5.04; the largest square 9
    # already covers it
    out = dorfler_mark([3.0, 2.0, 1.0], 0.6)
    assert out.tolist() == [0]


def test_dorfler_negative_rejected():
    with pytest.raises(ValueError):
        dorfler_mark([1.0, -2.0], 0.5)


def test_dorfler_tie_break_lowest_id():
    out = dorfler_mark([2.0, 2.0, 2.0, 2.0], 0.5)
    # threshold 0.25 * 16 = 4, one cell suffices; ties resolve to cell 0
    assert out.tolist() == [0]


def test_dorfler_minimality():
    rng = np.random.default_rng(8)
    for trial in range(25):
        ind = rng.random(40)
        alpha = rng.uniform(0.05, 0.95)
        marked = dorfler_mark(ind, alpha)
        sq = ind ** 2
        theta = alpha ** 2 * sq.sum()
        assert sq[marked].sum() >= theta * (1 - 1e-10)
        if marked.size > 1:
            smallest = marked[np.argmin(sq[marked])]
            rest = np.setdiff1d(marked, [smallest])
            assert sq[rest].sum() < theta


def test_adapt_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(alpha1=1.5, tol=1e-3)
    with pytest.raises(ValueError):
        AdaptConfig(alpha1=0.5, tol=0.0)


@pytest.fixture(scope="module")
def short_run(circle_setup):
    geom, data, exact = circle_setup
    bg = build_rect_mesh(bench.BOX, 4)
    imm = build_disk_mesh(geom, 1)
    cfg = AdaptConfig(alpha1=0.6, tol=1e-9, max_loops=10)
    records = adaptive_loop(cfg, data, bg, imm,
                            error_fn=lambda r: bench.error_norms(r, exact),
                            dirichlet=exact.u1)
    return records


def test_loop_exits_on_loose_tolerance(circle_setup):
    geom, data, exact = circle_setup
    bg = build_rect_mesh(bench.BOX, 4)
    imm = build_disk_mesh(geom, 1)
    cfg = AdaptConfig(alpha1=0.6, tol=1e6, max_loops=10)
    records = adaptive_loop(cfg, data, bg, imm, dirichlet=exact.u1)
    assert len(records) == 1


def test_records_monotone_dofs(short_run):
    dofs = [r.ndof for r in short_run]
    assert all(b > a for a, b in zip(dofs, dofs[1:]))
    assert len(short_run) == 10


def test_estimator_trend(short_run):
    total = [r.eta + r.eta2 for r in short_run]
    # decreasing trend after the pre-asymptotic start, allowing wiggle
    # within any 5-level window
    for i in range(2, len(total) - 5):
        assert total[i + 5] < total[i]


def test_marking_concentrates_at_interface(circle_setup):
    geom, data, exact = circle_setup
    bg = build_rect_mesh(bench.BOX, 4)
    imm = build_disk_mesh(geom, 1)
    cfg = AdaptConfig(alpha1=0.6, tol=1e-9, max_loops=6)
    state = {}

    def grab(level, result, ind, rec):
        state["result"], state["ind"] = result, ind

    adaptive_loop(cfg, data, bg, imm, on_level=grab, dirichlet=exact.u1)
    result, ind = state["result"], state["ind"]
    marked = dorfler_mark(ind.eta_E, 0.6)
    bgm = result.bg_space.mesh
    covered = np.zeros(bgm.nc)
    for c in range(result.v2_space.mesh.nc):
        for poly, host in result.imap.entries(c):
            from fddlm.kernels import polygon_area

            covered[host] += polygon_area(poly)
    area = bgm.areas()
    cut = (covered > 1e-12) & (covered < area - 1e-10)
    frac = cut[marked].mean()
    assert frac >= 0.5


def test_determinism(circle_setup):
    geom, data, exact = circle_setup

    def run():
        bg = build_rect_mesh(bench.BOX, 4)
        imm = build_disk_mesh(geom, 1)
        cfg = AdaptConfig(alpha1=0.6, tol=1e-9, max_loops=5)
        return adaptive_loop(cfg, data, bg, imm, dirichlet=exact.u1)

    r1, r2 = run(), run()
    for a, b in zip(r1, r2):
        assert a.ndof == b.ndof
        assert a.eta == b.eta and a.eta2 == b.eta2


def test_level_record_fields():
    assert LevelRecord.FIELDS == ("level", "ndof", "h", "h2", "errL2_u",
                                  "errH1_u", "errH1_u2", "eta", "eta2",
                                  "gmres_its", "time_s")
