# -*- coding: utf-8 -*-

"""
Scalar Lagrange finite elements of degree 1 and 2 on triangles.

Degrees of freedom are ordered vertices first (mesh order) then edge
midpoints (edge-table order), which keeps numbering deterministic across
rebuilds.  Quadrature rules are given in barycentric coordinates with
weights summing to one; the physical measure (triangle area) is applied
separately during assembly and integration.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QuadratureRule",
    "quadrature_rule",
    "eval_basis",
    "FESpace",
    "build_space",
    "FieldCoefficients",
    "interpolate_function",
    "integrate",
    "l2_norm",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric triangle rule: barycentric points, weights summing to 1."""

    order: int
    points: np.ndarray   # (nq, 3)
    weights: np.ndarray  # (nq,)


def _perm3(a, b, c):
    base = {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}
    return sorted(base)


_RULES = {}


def quadrature_rule(order):
    """Return a rule integrating bivariate polynomials up to `order`."""
    if order in _RULES:
        return _RULES[order]
    if order <= 1:
        pts = [(1 / 3, 1 / 3, 1 / 3)]
        wts = [1.0]
    elif order == 2:
        pts = _perm3(2 / 3, 1 / 6, 1 / 6)
        wts = [1 / 3] * 3
    elif order <= 4:
        a1, w1 = 0.445948490915965, 0.223381589678011
        a2, w2 = 0.091576213509771, 0.109951743655322
        pts = _perm3(1 - 2 * a1, a1, a1) + _perm3(1 - 2 * a2, a2, a2)
        wts = [w1] * 3 + [w2] * 3
    elif order == 5:
        a1, w1 = 0.470142064105115, 0.132394152788506
        a2, w2 = 0.101286507323456, 0.125939180544827
        pts = [(1 / 3, 1 / 3, 1 / 3)] + _perm3(1 - 2 * a1, a1, a1) \
            + _perm3(1 - 2 * a2, a2, a2)
        wts = [0.225] + [w1] * 3 + [w2] * 3
    else:
        raise ValueError("no quadrature rule of order %d" % order)
    rule = QuadratureRule(min(order, 5) if order > 2 else order,
                          np.array(pts, dtype=float),
                          np.array(wts, dtype=float))
    _RULES[order] = rule
    return rule


def eval_basis(degree, bary):
    """
    Lagrange basis values and reference gradients at barycentric points.

    Parameters
    ----------
    degree : int, 1 or 2
    bary : array, shape (..., 3)
        barycentric coordinates summing to 1

    Returns
    -------
    values : array, shape (..., nloc)
    gradients : array, shape (..., nloc, 2)
        derivatives with respect to the reference coordinates (x, y) of
        the triangle (0,0)-(1,0)-(0,1), where bary = (1-x-y, x, y)

    Local ordering: the three vertices, then for degree 2 the midpoints
    of edges (0,1), (1,2), (2,0).
    """
    bary = np.asarray(bary, dtype=float)
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    # reference gradients of the barycentric coordinates
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        values = np.stack([l0, l1, l2], axis=-1)
        grads = np.broadcast_to(dl, bary.shape[:-1] + (3, 2)).copy()
        return values, grads
    if degree != 2:
        raise ValueError("degree must be 1 or 2, got %r" % (degree,))
    lam = (l0, l1, l2)
    values = [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
              4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0]
    grads = np.empty(bary.shape[:-1] + (6, 2))
    for i in range(3):
        grads[..., i, :] = (4 * lam[i] - 1)[..., None] * dl[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        grads[..., 3 + k, :] = 4 * (lam[i][..., None] * dl[j]
                                    + lam[j][..., None] * dl[i])
    return np.stack(values, axis=-1), grads


@dataclass
class _ElementData:
    """Per-element quantities at the quadrature points of one rule."""

    N: np.ndarray        # (nq, nloc) basis values
    dNdx: np.ndarray     # (ne, nq, nloc, 2) physical gradients
    warea: np.ndarray    # (ne, nq) quadrature weight times triangle area
    xq: np.ndarray       # (ne, nq, 2) physical quadrature points


class FESpace:
    """
    Continuous scalar Lagrange space over a mesh.

    Attributes
    ----------
    mesh : Mesh
    degree : int
    ndof : int
    dof_coords : array (ndof, 2)
    element_dofs : array (T, 3 or 6)
        degree 2 lists the three vertices then the midside dof of local
        edges (0,1), (1,2), (2,0)
    """

    def __init__(self, mesh, degree):
        if degree not in (1, 2):
            raise ValueError("degree must be 1 or 2, got %r" % (degree,))
        self.mesh = mesh
        self.degree = degree
        nv = mesh.num_vertices
        if degree == 1:
            self.ndof = nv
            self.dof_coords = mesh.vertices
            self.element_dofs = mesh.triangles
        else:
            self.ndof = nv + mesh.num_edges
            mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]]
                         + mesh.vertices[mesh.edges[:, 1]])
            self.dof_coords = np.vstack([mesh.vertices, mid])
            self.element_dofs = np.hstack([mesh.triangles,
                                           nv + mesh.tri_edges])
        self.dof_coords.setflags(write=False)
        self.element_dofs.setflags(write=False)
        self._edata = {}
        self._bdofs = {}

    def boundary_dofs(self, label):
        """Sorted dof indices on boundary edges carrying `label`."""
        label = int(label)
        if label not in self._bdofs:
            mesh = self.mesh
            sel = mesh.boundary_labels == label
            if not sel.any():
                raise KeyError("no boundary edges labelled %d (have %s)"
                               % (label, mesh.label_set()))
            edges = mesh.boundary_edges[sel]
            dofs = set(edges.ravel().tolist())
            if self.degree == 2:
                key = np.sort(edges, axis=1)
                # edge table is lexicographically sorted: searchsorted finds
                # the global edge id of each labelled boundary edge
                flat = mesh.edges[:, 0] * (mesh.num_vertices + 1) + mesh.edges[:, 1]
                want = key[:, 0] * (mesh.num_vertices + 1) + key[:, 1]
                eid = np.searchsorted(flat, want)
                dofs.update((mesh.num_vertices + eid).tolist())
            self._bdofs[label] = np.array(sorted(dofs), dtype=np.int64)
        return self._bdofs[label]

    def element_data(self, order=4):
        """Basis values/gradients and weights at quadrature points (cached)."""
        if order not in self._edata:
            rule = quadrature_rule(order)
            N, gref = eval_basis(self.degree, rule.points)
            mesh = self.mesh
            p0 = mesh.vertices[mesh.triangles[:, 0]]
            p1 = mesh.vertices[mesh.triangles[:, 1]]
            p2 = mesh.vertices[mesh.triangles[:, 2]]
            # Jacobian of the affine map from the reference triangle
            J = np.stack([p1 - p0, p2 - p0], axis=-1)       # (ne, 2, 2)
            detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            Jinv = np.empty_like(J)
            Jinv[:, 0, 0] = J[:, 1, 1]
            Jinv[:, 0, 1] = -J[:, 0, 1]
            Jinv[:, 1, 0] = -J[:, 1, 0]
            Jinv[:, 1, 1] = J[:, 0, 0]
            Jinv /= detJ[:, None, None]
            # dN/dx_d = dN/dref_r * Jinv[r, d]
            dNdx = np.einsum("qlr,erd->eqld", gref, Jinv)
            warea = 0.5 * np.abs(detJ)[:, None] * rule.weights[None, :]
            xq = (p0[:, None, :]
                  + rule.points[None, :, 1, None] * (p1 - p0)[:, None, :]
                  + rule.points[None, :, 2, None] * (p2 - p0)[:, None, :])
            self._edata[order] = _ElementData(N, dNdx, warea, xq)
        return self._edata[order]


def build_space(mesh, degree):
    """Construct the degree-1 or degree-2 space over a mesh."""
    return FESpace(mesh, degree)


@dataclass
class FieldCoefficients:
    """Coefficient vector of one scalar finite-element function."""

    space: FESpace
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.values is None:
            self.values = np.zeros(self.space.ndof)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.ndof,):
            raise ValueError("coefficient length %d does not match ndof %d"
                             % (self.values.size, self.space.ndof))

    def copy(self):
        return FieldCoefficients(self.space, self.values.copy())

    def at_quadrature(self, order=4):
        """Values at the quadrature points of every element, (ne, nq)."""
        ed = self.space.element_data(order)
        return np.einsum("ql,el->eq", ed.N, self.values[self.space.element_dofs])

    def gradient_at_quadrature(self, order=4):
        """Gradients at quadrature points, (ne, nq, 2)."""
        ed = self.space.element_data(order)
        return np.einsum("eqld,el->eqd", ed.dNdx,
                         self.values[self.space.element_dofs])

    def eval(self, elements, bary):
        """Evaluate at barycentric points inside given elements."""
        N, _ = eval_basis(self.space.degree, bary)
        return np.einsum("...l,...l->...",
                         N, self.values[self.space.element_dofs[elements]])


def _call_pointwise(f, x, y):
    try:
        out = f(x, y)
        out = np.asarray(out, dtype=float)
        if out.shape != x.shape:
            raise ValueError
        return out
    except Exception:
        return np.array([float(f(xi, yi)) for xi, yi in zip(x, y)])


def interpolate_function(space, f):
    """
    Nodal interpolant of a pointwise function.

    `f(x, y)` may be vectorized over numpy arrays or scalar-only; the
    value at every dof coordinate becomes the coefficient there.
    """
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    return FieldCoefficients(space, _call_pointwise(f, x, y))


def integrate(mesh, f, order=4):
    """
    Quadrature of a pointwise integrand over the whole mesh.

    Parameters
    ----------
    mesh : Mesh
    f : callable(x, y) -> array
        vectorized integrand
    order : int
        polynomial exactness of the rule (default 4)
    """
    rule = quadrature_rule(order)
    p0 = mesh.vertices[mesh.triangles[:, 0]]
    p1 = mesh.vertices[mesh.triangles[:, 1]]
    p2 = mesh.vertices[mesh.triangles[:, 2]]
    areas = 0.5 * np.abs((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                         - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))
    xq = (p0[:, None, :]
          + rule.points[None, :, 1, None] * (p1 - p0)[:, None, :]
          + rule.points[None, :, 2, None] * (p2 - p0)[:, None, :])
    vals = f(xq[..., 0], xq[..., 1])
    return float(np.einsum("eq,q,e->", vals, rule.weights, areas))


def l2_norm(*components, order=4):
    """
    L2 norm of a (vector) finite-element function over its mesh.

    Each argument is one FieldCoefficients component; components must
    share a space's mesh but may live in different spaces.
    """
    total = 0.0
    for comp in components:
        mesh = comp.space.mesh
        ed = comp.space.element_data(order)
        vq = comp.at_quadrature(order)
        total += float(np.einsum("eq,eq->", vq * vq, ed.warea))
        if mesh is not components[0].space.mesh:
            raise ValueError("components live on different meshes")
    return np.sqrt(total)
