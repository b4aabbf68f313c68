# -*- coding: utf-8 -*-

"""
Fictitious-domain coupling between the background and solid meshes.

The solid mesh overlaps the (fixed) background mesh.  Solid-side
integrals contribute to the background unknowns through a rectangular
interpolation matrix P whose row i holds the values of the background
basis functions at the coordinates of solid degree of freedom i; the
coupled system is A = K + P^T Ks P with right-hand side g + P^T gs.
"""

import numpy as np
import scipy.sparse as sp

from .fespace import eval_basis
from .linalg import SparseMatrix, spadd, triple_product

__all__ = [
    "CouplingError",
    "PointLocator",
    "locate_point",
    "InterpolationMatrix",
    "build_interpolation",
    "mixed_interpolation",
    "compose_system",
]


class CouplingError(Exception):
    """A solid degree of freedom left the background domain."""


class PointLocator:
    """
    Uniform-grid point location on a triangular mesh.

    Triangles are registered in every grid cell their bounding box
    overlaps (cell size about twice the mean triangle diameter); a query
    scans the candidates of its cell and returns the lowest-index
    triangle containing the point, which makes ties on shared edges
    deterministic.
    """

    def __init__(self, mesh, cell_factor=2.0):
        self.mesh = mesh
        v = mesh.vertices
        t = mesh.triangles
        p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        lengths = np.concatenate([
            np.linalg.norm(p1 - p0, axis=1),
            np.linalg.norm(p2 - p1, axis=1),
            np.linalg.norm(p0 - p2, axis=1)])
        self._h = cell_factor * float(lengths.mean())
        self._lo = v.min(axis=0) - 1e-12
        hi = v.max(axis=0) + 1e-12
        self._nx = max(1, int(np.ceil((hi[0] - self._lo[0]) / self._h)))
        self._ny = max(1, int(np.ceil((hi[1] - self._lo[1]) / self._h)))

        tmin = np.minimum(np.minimum(p0, p1), p2)
        tmax = np.maximum(np.maximum(p0, p1), p2)
        imin = self._cell_index(tmin)
        imax = self._cell_index(tmax)
        cell_of = []
        tri_of = []
        for e in range(len(t)):
            for cx in range(imin[e, 0], imax[e, 0] + 1):
                for cy in range(imin[e, 1], imax[e, 1] + 1):
                    cell_of.append(cx * self._ny + cy)
                    tri_of.append(e)
        cell_of = np.asarray(cell_of, dtype=np.int64)
        tri_of = np.asarray(tri_of, dtype=np.int64)
        order = np.lexsort((tri_of, cell_of))
        cell_of, tri_of = cell_of[order], tri_of[order]
        self._bucket_start = np.searchsorted(
            cell_of, np.arange(self._nx * self._ny + 1))
        self._bucket_tris = tri_of

        # affine inverses for barycentric coordinates
        J = np.stack([p1 - p0, p2 - p0], axis=-1)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1]
        inv[:, 0, 1] = -J[:, 0, 1]
        inv[:, 1, 0] = -J[:, 1, 0]
        inv[:, 1, 1] = J[:, 0, 0]
        self._inv = inv / det[:, None, None]
        self._p0 = p0
        self.default_tol = 1e-10 * mesh.diameter()

    def _cell_index(self, pts):
        idx = np.floor((pts - self._lo) / self._h).astype(np.int64)
        idx[..., 0] = np.clip(idx[..., 0], 0, self._nx - 1)
        idx[..., 1] = np.clip(idx[..., 1], 0, self._ny - 1)
        return idx

    def locate(self, points, tol=None):
        """
        Locate an array of points.

        Returns
        -------
        elements : int array (n,)
            containing triangle per point, -1 when not found within tol
        bary : float array (n, 3)
        """
        if tol is None:
            tol = self.default_tol
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(points)
        cells = self._cell_index(points)
        flat = cells[:, 0] * self._ny + cells[:, 1]
        counts = self._bucket_start[flat + 1] - self._bucket_start[flat]
        total = int(counts.sum())
        pt_idx = np.repeat(np.arange(n), counts)
        offs = np.concatenate([[0], np.cumsum(counts)])[:-1]
        pos = np.arange(total) - np.repeat(offs, counts)
        cand = self._bucket_tris[np.repeat(self._bucket_start[flat], counts) + pos]

        rel = points[pt_idx] - self._p0[cand]
        # reference coords (r, s) satisfy J (r, s) = rel
        lam12 = np.einsum("edk,ek->ed", self._inv[cand], rel)
        lam0 = 1.0 - lam12[:, 0] - lam12[:, 1]
        good = (lam12[:, 0] >= -tol) & (lam12[:, 1] >= -tol) & (lam0 >= -tol)

        elements = np.full(n, -1, dtype=np.int64)
        hit_pts = pt_idx[good]
        hit_tris = cand[good]
        if len(hit_pts):
            # lowest triangle index wins ties: reverse-sorted by triangle so
            # the final write per point is the minimum
            order = np.lexsort((-hit_tris, hit_pts))
            elements[hit_pts[order]] = hit_tris[order]

        bary = np.zeros((n, 3))
        found = elements >= 0
        if found.any():
            rel = points[found] - self._p0[elements[found]]
            l12 = np.einsum("edk,ek->ed", self._inv[elements[found]], rel)
            bary[found, 1] = l12[:, 0]
            bary[found, 2] = l12[:, 1]
            bary[found, 0] = 1.0 - l12.sum(axis=1)
        return elements, bary


def locate_point(mesh, x, tol=None, locator=None):
    """
    Locate one point; returns (element, bary) or None when outside.

    A shared PointLocator can be passed to amortise setup.
    """
    loc = locator if locator is not None else PointLocator(mesh)
    elems, bary = loc.locate(np.asarray(x, dtype=float)[None, :], tol=tol)
    if elems[0] < 0:
        return None
    return int(elems[0]), bary[0]


class InterpolationMatrix:
    """
    Rows = solid-space dofs, columns = background-space dofs.

    Attributes
    ----------
    matrix : SparseMatrix
    source_elements : int array
        background triangle supplying each solid dof (diagnostic)
    """

    def __init__(self, matrix, source_elements):
        self.matrix = matrix
        self.source_elements = source_elements

    @property
    def shape(self):
        return self.matrix.shape


def build_interpolation(bg_space, solid_space, locator=None, tol=None,
                        slack=0.08):
    """
    Background-to-solid interpolation matrix for one scalar space pair.

    Row i holds the background basis values at the coordinates of solid
    dof i.  Dofs that fail the strict location tolerance are retried
    with a small barycentric slack and take the polynomial extension of
    the nearest element: a solid boundary resting on a polygonalised
    curved background boundary (leaflet root on the cylinder) places
    chord midpoints a sagitta-distance outside the triangulation, and
    extending the neighbouring element is the standard treatment.  A dof
    beyond the slack aborts with its index and coordinates, which
    signals that the solid escaped the domain.
    """
    loc = locator if locator is not None else PointLocator(bg_space.mesh)
    pts = solid_space.dof_coords
    elems, bary = loc.locate(pts, tol=tol)
    missing = np.nonzero(elems < 0)[0]
    if missing.size:
        e2, b2 = loc.locate(pts[missing], tol=slack)
        still = np.nonzero(e2 < 0)[0]
        if still.size:
            i = int(missing[still[0]])
            raise CouplingError(
                "solid dof %d at (%.6g, %.6g) is outside the background mesh"
                % (i, pts[i, 0], pts[i, 1]))
        elems[missing], bary[missing] = e2, b2
    N, _ = eval_basis(bg_space.degree, bary)
    cols = bg_space.element_dofs[elems]
    rows = np.repeat(np.arange(len(pts)), cols.shape[1])
    mat = SparseMatrix.from_coo(rows, cols.ravel(), N.ravel(),
                                (solid_space.ndof, bg_space.ndof))
    return InterpolationMatrix(mat, elems)


def mixed_interpolation(p_scalar, bg_layout, solid_layout, slot_map):
    """
    Block interpolation between field-contiguous mixed layouts.

    Parameters
    ----------
    p_scalar : InterpolationMatrix
        scalar background->solid interpolation
    bg_layout, solid_layout : BlockLayout
    slot_map : dict
        solid slot -> background slot for the interpolated (velocity)
        blocks; pressure slots are simply absent and contribute nothing

    Returns
    -------
    SparseMatrix of shape (solid total, background total)
    """
    coo = p_scalar.matrix.mat.tocoo()
    rows, cols, vals = [], [], []
    for s_slot, b_slot in sorted(slot_map.items()):
        rows.append(coo.row + solid_layout.offsets[s_slot])
        cols.append(coo.col + bg_layout.offsets[b_slot])
        vals.append(coo.data)
    return SparseMatrix.from_coo(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
        (solid_layout.total, bg_layout.total))


def compose_system(k_bg, k_solid, p, g_bg, g_solid):
    """
    Couple background and solid systems: A = K + P^T Ks P, b = g + P^T gs.
    """
    pm = p.matrix if isinstance(p, InterpolationMatrix) else p
    if k_solid.shape[0] != pm.shape[0] or k_bg.shape[0] != pm.shape[1]:
        raise ValueError("dimension mismatch composing %s with %s through %s"
                         % (k_bg.shape, k_solid.shape, pm.shape))
    a = spadd(k_bg, triple_product(pm, k_solid))
    b = g_bg + pm.mat.T @ g_solid
    return a, b
