# -*- coding: utf-8 -*-

import numpy as np
import pytest
import scipy.sparse as sp

from fsictrl.coupling import (CouplingError, PointLocator, build_interpolation,
                              compose_system, locate_point,
                              mixed_interpolation)
from fsictrl.assembly import BlockLayout
from fsictrl.fespace import FESpace
from fsictrl.linalg import SparseMatrix
from fsictrl.mesh import generate_disc, generate_unit_square


def brute_locate(mesh, pt, tol=1e-12):
    """All-element scan, lowest index wins (oracle)."""
    for e, tri in enumerate(mesh.triangles):
        p0, p1, p2 = mesh.vertices[tri]
        J = np.column_stack([p1 - p0, p2 - p0])
        lam = np.linalg.solve(J, pt - p0)
        l0 = 1.0 - lam.sum()
        if lam[0] >= -tol and lam[1] >= -tol and l0 >= -tol:
            return e, np.array([l0, lam[0], lam[1]])
    return None


def test_locate_vertex_lowest_element():
    m = generate_unit_square(4)
    loc = PointLocator(m)
    for v in range(m.num_vertices):
        pt = m.vertices[v]
        res = locate_point(m, pt, locator=loc)
        assert res is not None
        e, bary = res
        want = brute_locate(m, pt, tol=loc.default_tol)
        assert e == want[0]
        assert np.abs(bary - want[1]).max() < 1e-12


def test_locate_centroid():
    m = generate_unit_square(3)
    loc = PointLocator(m)
    for e in range(m.num_triangles):
        c = m.vertices[m.triangles[e]].mean(axis=0)
        ee, bary = locate_point(m, c, locator=loc)
        assert ee == e
        assert np.abs(bary - 1 / 3).max() < 1e-12


def test_locate_random_points_against_brute_force():
    m = generate_unit_square(9)
    loc = PointLocator(m)
    rng = np.random.default_rng(11)
    pts = rng.random((10_000, 2))
    elems, bary = loc.locate(pts)
    assert (elems >= 0).all()
    # barycentric reconstruction of the point
    tri = m.triangles[elems]
    rec = (bary[:, 0, None] * m.vertices[tri[:, 0]]
           + bary[:, 1, None] * m.vertices[tri[:, 1]]
           + bary[:, 2, None] * m.vertices[tri[:, 2]])
    assert np.abs(rec - pts).max() < 1e-12
    # spot check element agreement with the oracle
    for i in range(0, 10_000, 499):
        want = brute_locate(m, pts[i], tol=loc.default_tol)
        assert elems[i] == want[0]


def test_locate_outside_returns_not_found():
    m = generate_unit_square(3)
    assert locate_point(m, np.array([1.5, 0.5])) is None


def test_interpolation_identity_on_same_mesh():
    m = generate_unit_square(4)
    V = FESpace(m, 2)
    P = build_interpolation(V, V)
    d = (P.matrix.mat - sp.eye(V.ndof)).tocsr()
    d.eliminate_zeros()
    assert d.nnz == 0


def test_interpolation_partition_of_unity_and_range():
    bg = generate_unit_square(8)
    solid = generate_disc((0.5, 0.5), 0.3, 24)
    P = build_interpolation(FESpace(bg, 2), FESpace(solid, 2))
    rowsum = np.asarray(P.matrix.mat.sum(axis=1)).ravel()
    assert np.abs(rowsum - 1.0).max() < 1e-12
    assert P.matrix.mat.data.min() >= -0.125 - 1e-12
    assert P.matrix.mat.data.max() <= 1.0 + 1e-12
    counts = np.diff(P.matrix.mat.indptr)
    assert counts.max() <= 6


def test_interpolation_linear_reproduction():
    bg = generate_unit_square(7)
    solid = generate_disc((0.45, 0.55), 0.25, 20)
    Vb, Vs = FESpace(bg, 2), FESpace(solid, 2)
    P = build_interpolation(Vb, Vs)
    f = 2.0 - 3.0 * Vb.dof_coords[:, 0] + 0.5 * Vb.dof_coords[:, 1]
    want = 2.0 - 3.0 * Vs.dof_coords[:, 0] + 0.5 * Vs.dof_coords[:, 1]
    assert np.abs(P.matrix @ f - want).max() < 1e-12


def test_interpolation_quadratic_matches_direct_evaluation():
    bg = generate_unit_square(6)
    solid = generate_disc((0.5, 0.5), 0.2, 16)
    Vb, Vs = FESpace(bg, 2), FESpace(solid, 2)
    P = build_interpolation(Vb, Vs)
    coeffs = Vb.dof_coords[:, 0] ** 2   # nodal interpolant of x^2
    got = P.matrix @ coeffs
    # oracle: locate each solid dof by brute force and evaluate the
    # interpolant there
    from fsictrl.fespace import FieldCoefficients
    fld = FieldCoefficients(Vb, coeffs)
    for i in range(0, Vs.ndof, 13):
        e, bary = brute_locate(bg, Vs.dof_coords[i])
        want = fld.eval(np.array([e]), bary[None, :])[0]
        assert abs(got[i] - want) < 1e-12


def test_interpolation_escape_reports_dof():
    bg = generate_unit_square(5)
    solid = generate_disc((1.2, 0.5), 0.3, 16)   # pokes outside
    with pytest.raises(CouplingError, match="dof"):
        build_interpolation(FESpace(bg, 2), FESpace(solid, 2))


def test_compose_zero_solid_is_identity():
    bg = generate_unit_square(4)
    solid = generate_disc((0.5, 0.5), 0.2, 12)
    Vb, Vs = FESpace(bg, 2), FESpace(solid, 2)
    layout_b = BlockLayout([Vb, Vb])
    layout_s = BlockLayout([Vs, Vs])
    from fsictrl.assembly import MatrixTerm, assemble_matrix
    K = assemble_matrix([Vb, Vb], [Vb, Vb],
                        [MatrixTerm("mass", 1.0, (0, 1), (0, 1))])
    Ks = SparseMatrix(sp.csr_matrix((layout_s.total, layout_s.total)))
    P0 = build_interpolation(Vb, Vs)
    P = mixed_interpolation(P0, layout_b, layout_s, {0: 0, 1: 1})
    g = np.arange(float(layout_b.total))
    gs = np.zeros(layout_s.total)
    A, b = compose_system(K, Ks, P, g, gs)
    assert np.array_equal(A.mat.data, K.mat.data)
    assert np.array_equal(b, g)


def test_compose_identity_interpolation():
    m = generate_unit_square(3)
    V = FESpace(m, 2)
    from fsictrl.assembly import MatrixTerm, assemble_matrix
    Ks = assemble_matrix([V, V], [V, V],
                         [MatrixTerm("mass", 2.0, (0, 1), (0, 1))])
    layout = BlockLayout([V, V])
    P0 = build_interpolation(V, V)
    P = mixed_interpolation(P0, layout, layout, {0: 0, 1: 1})
    K0 = SparseMatrix(sp.csr_matrix((layout.total, layout.total)))
    A, _ = compose_system(K0, Ks, P, np.zeros(layout.total),
                          np.zeros(layout.total))
    assert abs(A.mat - Ks.mat).max() < 1e-14


def test_compose_random_dense_oracle():
    rng = np.random.default_rng(12)
    for trial in range(8):
        nb, ns = 17, 9
        K = rng.standard_normal((nb, nb)) * (rng.random((nb, nb)) < 0.4)
        Ks = rng.standard_normal((ns, ns)) * (rng.random((ns, ns)) < 0.5)
        P = rng.standard_normal((ns, nb)) * (rng.random((ns, nb)) < 0.3)
        g = rng.standard_normal(nb)
        gs = rng.standard_normal(ns)
        A, b = compose_system(SparseMatrix(sp.csr_matrix(K)),
                              SparseMatrix(sp.csr_matrix(Ks)),
                              SparseMatrix(sp.csr_matrix(P)), g, gs)
        want_A = K + P.T @ Ks @ P
        want_b = g + P.T @ gs
        z = rng.standard_normal(nb)
        assert np.abs(A @ z - want_A @ z).max() < 1e-13 * max(
            1.0, np.abs(want_A).max())
        assert np.abs(b - want_b).max() < 1e-13


def test_compose_preserves_symmetry():
    rng = np.random.default_rng(13)
    nb, ns = 14, 6
    K = rng.standard_normal((nb, nb))
    K = K + K.T
    Ks = rng.standard_normal((ns, ns))
    Ks = Ks + Ks.T
    P = rng.standard_normal((ns, nb))
    A, _ = compose_system(SparseMatrix(sp.csr_matrix(K)),
                          SparseMatrix(sp.csr_matrix(Ks)),
                          SparseMatrix(sp.csr_matrix(P)),
                          np.zeros(nb), np.zeros(ns))
    assert abs(A.mat - A.mat.T).max() < 1e-12 * abs(A.mat).max()


def test_compose_dimension_mismatch():
    K = SparseMatrix(sp.eye(5, format="csr"))
    Ks = SparseMatrix(sp.eye(3, format="csr"))
    P = SparseMatrix(sp.csr_matrix(np.ones((4, 5))))
    with pytest.raises(ValueError):
        compose_system(K, Ks, P, np.zeros(5), np.zeros(3))


def test_rebuild_after_motion():
    # interpolation rebuild succeeds while the solid stays inside and
    # names the first escaping dof otherwise
    from fsictrl.fespace import FieldCoefficients
    from fsictrl.mesh import move_mesh
    bg = generate_unit_square(6)
    solid = generate_disc((0.5, 0.5), 0.2, 16)
    Vb = FESpace(bg, 2)
    for k in range(3):
        Vs = FESpace(solid, 2)
        build_interpolation(Vb, Vs)
        vx = FieldCoefficients(Vs, np.full(Vs.ndof, 1.0))
        vy = FieldCoefficients(Vs)
        solid = move_mesh(solid, vx, vy, 0.05)
    Vs = FESpace(solid, 2)
    with pytest.raises(CouplingError):
        for k in range(6):
            vx = FieldCoefficients(Vs, np.full(Vs.ndof, 1.0))
            vy = FieldCoefficients(Vs)
            solid = move_mesh(solid, vx, vy, 0.05)
            Vs = FESpace(solid, 2)
            build_interpolation(Vb, Vs)
