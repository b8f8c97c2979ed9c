"""Legacy VTK ASCII output and CSV reporting."""

import csv

from .adaptivity import LevelRecord


def write_vtk(path, mesh, point_data=None, cell_data=None, title="fddlm"):
    """Write a triangle mesh with optional scalar fields (legacy VTK 3.0)."""
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.nv} double\n")
        for x, y in mesh.vertices:
            f.write(f"{x!r} {y!r} 0.0\n")
        f.write(f"CELLS {mesh.nc} {4 * mesh.nc}\n")
        for a, b, c in mesh.cells:
            f.write(f"3 {a} {b} {c}\n")
        f.write(f"CELL_TYPES {mesh.nc}\n")
        f.write("5\n" * mesh.nc)
        if point_data:
            f.write(f"POINT_DATA {mesh.nv}\n")
            for name, values in point_data.items():
                f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in values:
                    f.write(f"{float(v)!r}\n")
        if cell_data:
            f.write(f"CELL_DATA {mesh.nc}\n")
            for name, values in cell_data.items():
                f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in values:
                    f.write(f"{float(v)!r}\n")


def write_results_csv(path, records, serial=False):
    """results.csv with the fixed column contract; `serial` zeroes the
    wall-clock column so repeated runs are bit-identical."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(LevelRecord.FIELDS)
        for rec in records:
            row = rec.row()
            if serial:
                row[-1] = 0.0
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def vertex_field(space, vec):
    """Vertex values of a discrete field (for VTK point data); the bubble
    component vanishes at vertices and is dropped."""
    import numpy as np

    out = np.zeros(space.mesh.nv)
    if space.dirichlet_values is not None:
        out[:] = space.dirichlet_values
    free = space.vertex_dof >= 0
    out[free] = np.asarray(vec)[space.vertex_dof[free]]
    return out
