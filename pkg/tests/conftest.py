import numpy as np
import pytest

from fddlm import benchmark as bench
from fddlm import solver
from fddlm.intersection import BoxIndex, build_intersection_map
from fddlm.mesh import build_disk_mesh, build_rect_mesh


@pytest.fixture(scope="session")
def circle_setup():
    geom, data, exact = bench.circle_benchmark()
    return geom, data, exact


@pytest.fixture(scope="session")
def benchmark_pair(circle_setup):
    geom, _, _ = circle_setup
    bg = build_rect_mesh(bench.BOX, 8)
    imm = build_disk_mesh(geom, 2)
    return bg, imm


@pytest.fixture(scope="session")
def benchmark_imap(benchmark_pair):
    bg, imm = benchmark_pair
    index = BoxIndex(bg)
    return build_intersection_map(imm, bg, index), index


@pytest.fixture(scope="session")
def solved_default(circle_setup, benchmark_pair):
    _, data, exact = circle_setup
    bg, imm = benchmark_pair
    return solver.solve_once(data, bg, imm, dirichlet=exact.u1)


def rng(seed=0):
    return np.random.default_rng(seed)
