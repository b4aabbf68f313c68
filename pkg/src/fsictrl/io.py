# -*- coding: utf-8 -*-

"""
Output writers: legacy ASCII VTK snapshots and the per-step CSV log.

Field snapshots use vertex values (the quadratic velocity detail at the
edge midpoints is dropped for visualisation).  All floats are written
with 17 significant digits so reparsing reproduces the in-memory values.
"""

import numpy as np

__all__ = ["write_vtk", "write_solid_vtk", "CsvLog", "CSV_COLUMNS"]

CSV_COLUMNS = ("t", "J_track", "J_reg", "force_l2", "adjoint_l2",
               "solid_speed", "tip_x", "tip_y", "div_l2", "solve_residual",
               "tracking_rel_err")


def _fmt(x):
    return "%.17g" % x


def _write_grid(f, mesh, title):
    f.write("# vtk DataFile Version 3.0\n")
    f.write(title + "\n")
    f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    nv = mesh.num_vertices
    f.write("POINTS %d double\n" % nv)
    for x, y in mesh.vertices:
        f.write("%s %s 0\n" % (_fmt(x), _fmt(y)))
    nt = mesh.num_triangles
    f.write("CELLS %d %d\n" % (nt, 4 * nt))
    for a, b, c in mesh.triangles:
        f.write("3 %d %d %d\n" % (a, b, c))
    f.write("CELL_TYPES %d\n" % nt)
    f.write("5\n" * nt)
    f.write("POINT_DATA %d\n" % nv)


def _write_vector(f, name, vx, vy):
    f.write("VECTORS %s double\n" % name)
    for a, b in zip(vx, vy):
        f.write("%s %s 0\n" % (_fmt(a), _fmt(b)))


def _write_scalar(f, name, vals):
    f.write("SCALARS %s double 1\nLOOKUP_TABLE default\n" % name)
    for a in vals:
        f.write("%s\n" % _fmt(a))


def write_vtk(path, mesh, ux, uy, p, adjoint=None):
    """
    Background snapshot: velocity/pressure plus the adjoint pair.

    adjoint : (ax, ay, pa) or None
        zero fields are written when the step carried no adjoint solve
    """
    nv = mesh.num_vertices
    with open(path, "w") as f:
        _write_grid(f, mesh, "background fields")
        _write_vector(f, "velocity", ux.values[:nv], uy.values[:nv])
        _write_scalar(f, "pressure", p.values[:nv])
        if adjoint is not None:
            ax, ay, pa = adjoint
            _write_vector(f, "adjoint_velocity", ax.values[:nv], ay.values[:nv])
            _write_scalar(f, "adjoint_pressure", pa.values[:nv])
        else:
            zeros = np.zeros(nv)
            _write_vector(f, "adjoint_velocity", zeros, zeros)
            _write_scalar(f, "adjoint_pressure", zeros)


def write_solid_vtk(path, mesh, dx, dy, ux, uy):
    """Solid snapshot: displacement and velocity on the moved mesh."""
    nv = mesh.num_vertices
    with open(path, "w") as f:
        _write_grid(f, mesh, "solid fields")
        _write_vector(f, "displacement", dx.values[:nv], dy.values[:nv])
        _write_vector(f, "velocity", ux.values[:nv], uy.values[:nv])


class CsvLog:
    """Fixed-schema time series, one row per step."""

    def __init__(self, path):
        self._f = open(path, "w")
        self._f.write(",".join(CSV_COLUMNS) + "\n")

    def write(self, report):
        row = [getattr(report, name) for name in CSV_COLUMNS]
        self._f.write(",".join(_fmt(v) for v in row) + "\n")

    def flush(self):
        self._f.flush()

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
