import numpy as np
import pytest

from fddlm.coupling import AssemblyMode, assemble_C1, assemble_C2
from fddlm.errors import DomainViolationError, IncompatibleConfigError
from fddlm.intersection import BoxIndex, build_intersection_map
from fddlm.mesh import Mesh, build_disk_mesh, build_rect_mesh, uniform_refine
from fddlm.spaces import BasisFamily, FeSpace, triangle_rule

UNIT_TRI = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                np.array([[0, 1, 2]]))


def test_assembly_mode_parse():
    assert AssemblyMode.parse("exact").kind == "exact"
    m = AssemblyMode.parse("inexact:3")
    assert (m.kind, m.degree) == ("inexact", 3)
    assert AssemblyMode.parse("inexact").degree == 5
    with pytest.raises(ValueError):
        AssemblyMode.parse("bogus")
    with pytest.raises(ValueError):
        AssemblyMode("inexact", 0)


def test_c2_row_sums_are_cell_areas():
    mesh = build_rect_mesh((0, 0, 1, 1), 3)
    lam = FeSpace(mesh, BasisFamily.P0)
    v2 = FeSpace(mesh, BasisFamily.P1)
    C2 = assemble_C2(lam, v2, "l2")
    rows = np.asarray(C2.sum(axis=1)).ravel()
    assert np.abs(rows - mesh.areas()).max() <= 1e-14


def test_c2_h1_constant_field():
    mesh = build_rect_mesh((0, 0, 1, 1), 2)
    lam = FeSpace(mesh, BasisFamily.P1)
    v2 = FeSpace(mesh, BasisFamily.P1_BUBBLE)
    C2 = assemble_C2(lam, v2, "h1")
    ones = np.zeros(v2.ndof)
    ones[:v2.ndof - mesh.nc] = 1.0  # vertex dofs only, bubbles zero
    out = C2 @ ones
    # gradient part cancels on constants, leaving the mass of each hat
    C2_l2 = assemble_C2(lam, v2, "l2")
    assert np.abs(out - C2_l2 @ ones).max() <= 1e-13


def test_c2_bubble_column_against_high_order_quadrature():
    lam = FeSpace(UNIT_TRI, BasisFamily.P0)
    v2 = FeSpace(UNIT_TRI, BasisFamily.P1_BUBBLE)
    C2 = assemble_C2(lam, v2, "l2").toarray()
    rule = triangle_rule(10)
    lam_ref = 1.0 - rule.points.sum(axis=1)
    bubble = 27.0 * lam_ref * rule.points[:, 0] * rule.points[:, 1]
    oracle = 0.5 * float(rule.weights @ bubble)  # area times mean
    assert C2[0, 3] == pytest.approx(oracle, abs=1e-15)


def test_c2_requires_shared_mesh_and_continuity():
    m1 = build_rect_mesh((0, 0, 1, 1), 2)
    m2 = build_rect_mesh((0, 0, 1, 1), 2)
    with pytest.raises(IncompatibleConfigError):
        assemble_C2(FeSpace(m1, BasisFamily.P0), FeSpace(m2, BasisFamily.P1), "l2")
    with pytest.raises(IncompatibleConfigError):
        assemble_C2(FeSpace(m1, BasisFamily.P0), FeSpace(m1, BasisFamily.P1), "h1")


def test_c1_identical_meshes_equals_c2():
    mesh = build_rect_mesh((0, 0, 1, 1), 3)
    lam = FeSpace(mesh, BasisFamily.P0)
    v2 = FeSpace(mesh, BasisFamily.P1_BUBBLE)
    bg = FeSpace(mesh, BasisFamily.P1)
    index = BoxIndex(mesh)
    imap = build_intersection_map(mesh, mesh, index)
    C2 = assemble_C2(lam, v2, "l2").toarray()[:, :mesh.nv]
    C1e = assemble_C1(lam, bg, imap, "l2", AssemblyMode("exact")).toarray()
    C1i = assemble_C1(lam, bg, index, "l2", AssemblyMode("inexact", 5)).toarray()
    assert np.abs(C1e - C2).max() <= 1e-12
    assert np.abs(C1i - C2).max() <= 1e-12


def test_c1_column_sum_identity(benchmark_pair, benchmark_imap):
    bg_mesh, imm = benchmark_pair
    imap, index = benchmark_imap
    bg = FeSpace(bg_mesh, BasisFamily.P1, zero_boundary=True)
    for element, form in ((BasisFamily.P0, "l2"), (BasisFamily.P1, "l2"),
                          (BasisFamily.P1, "h1")):
        lam = FeSpace(imm, element)
        v2 = FeSpace(imm, BasisFamily.P1_BUBBLE
                     if element == BasisFamily.P0 else BasisFamily.P1)
        C1 = assemble_C1(lam, bg, imap, form, AssemblyMode("exact"))
        C2 = assemble_C2(lam, v2, form)
        nvert = v2.ndof - (imm.nc if v2.family == BasisFamily.P1_BUBBLE else 0)
        col1 = np.asarray(C1.sum(axis=1)).ravel()
        col2 = np.asarray(C2[:, :nvert].sum(axis=1)).ravel()
        assert np.abs(col1 - col2).max() <= 1e-12, (element, form)


def test_c1_nested_exact_equals_inexact():
    bg_mesh = build_rect_mesh((0, 0, 1, 1), 2)
    imm = uniform_refine(bg_mesh)  # every immersed cell inside one bg cell
    index = BoxIndex(bg_mesh)
    imap = build_intersection_map(imm, bg_mesh, index)
    bg = FeSpace(bg_mesh, BasisFamily.P1)
    for fam, form in ((BasisFamily.P0, "l2"), (BasisFamily.P1, "l2"),
                      (BasisFamily.P1, "h1")):
        lam = FeSpace(imm, fam)
        Ce = assemble_C1(lam, bg, imap, form, AssemblyMode("exact"),
                         exact_degree=4)
        Ci = assemble_C1(lam, bg, index, form, AssemblyMode("inexact", 4))
        assert abs(Ce - Ci).max() <= 1e-12, (fam, form)


def test_c1_mode_consistency_degree_sweep(circle_setup):
    geom, _, _ = circle_setup
    bg_mesh = build_rect_mesh((-1.4, -1.4, 1.4, 1.4), 4)
    imm = build_disk_mesh(geom, 1)
    index = BoxIndex(bg_mesh)
    imap = build_intersection_map(imm, bg_mesh, index)
    lam = FeSpace(imm, BasisFamily.P0)
    bg = FeSpace(bg_mesh, BasisFamily.P1)
    Ce = assemble_C1(lam, bg, imap, "l2", AssemblyMode("exact"))
    diffs = []
    for deg in (2, 4, 6, 8):
        Ci = assemble_C1(lam, bg, index, "l2", AssemblyMode("inexact", deg))
        diffs.append(abs(Ce - Ci).max())
    assert all(b < a for a, b in zip(diffs, diffs[1:]))


def test_c1_geometry_argument_validation(benchmark_pair, benchmark_imap):
    bg_mesh, imm = benchmark_pair
    imap, index = benchmark_imap
    lam = FeSpace(imm, BasisFamily.P0)
    bg = FeSpace(bg_mesh, BasisFamily.P1)
    with pytest.raises(IncompatibleConfigError):
        assemble_C1(lam, bg, index, "l2", AssemblyMode("exact"))
    with pytest.raises(IncompatibleConfigError):
        assemble_C1(lam, bg, imap, "l2", AssemblyMode("inexact", 5))
    with pytest.raises(IncompatibleConfigError):
        assemble_C1(FeSpace(imm, BasisFamily.P0), bg, imap, "h1",
                    AssemblyMode("exact"))


def test_c1_inexact_node_outside_hull():
    bg_mesh = build_rect_mesh((0, 0, 1, 1), 2)
    imm = build_rect_mesh((0.5, 0.5, 2.0, 2.0), 1)  # sticks out
    lam = FeSpace(imm, BasisFamily.P0)
    bg = FeSpace(bg_mesh, BasisFamily.P1)
    with pytest.raises(DomainViolationError):
        assemble_C1(lam, bg, BoxIndex(bg_mesh), "l2", AssemblyMode("inexact", 5))


def test_c1_deterministic(benchmark_pair, benchmark_imap):
    bg_mesh, imm = benchmark_pair
    imap, _ = benchmark_imap
    lam = FeSpace(imm, BasisFamily.P0)
    bg = FeSpace(bg_mesh, BasisFamily.P1, zero_boundary=True)
    A = assemble_C1(lam, bg, imap, "l2", AssemblyMode("exact"))
    B = assemble_C1(lam, bg, imap, "l2", AssemblyMode("exact"))
    assert (A != B).nnz == 0
    assert np.array_equal(A.data, B.data)
