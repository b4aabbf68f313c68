# -*- coding: utf-8 -*-

"""
Assembly of the bilinear and linear forms of the coupled flow/solid systems.

Every integral appearing in the per-step linear systems is expressed as a
term acting between *slots* of a block layout (one slot per scalar field:
velocity components, adjoint velocity components, pressures).  Terms carry
a scalar coefficient and, where needed, frozen fields (previous velocity,
accumulated displacement) evaluated at quadrature points.

Conventions:

* ``D(u) = grad u + grad^T u`` is the symmetric gradient; viscous terms
  integrate ``(c) D(u):D(v)``.
* ``grad u`` is the Jacobian with entries ``(grad u)_{ij} = du_i/dx_j``.
* The updated-Lagrangian elastic correction integrates
  ``(grad^T a grad d + grad^T d grad a) : grad b`` with the accumulated
  displacement ``d`` frozen; the primal/adjoint variants differ only in
  whether the trial function sits in the ``a`` or the ``b`` argument.

Assembly is element-vectorised and deterministic: the same inputs produce
bit-identical matrices.
"""

import logging
from dataclasses import dataclass, field as dfield

import numpy as np

from .fespace import FieldCoefficients
from .linalg import SparseMatrix

__all__ = [
    "BlockLayout",
    "MatrixTerm",
    "VectorTerm",
    "assemble_matrix",
    "assemble_vector",
    "apply_dirichlet",
    "dirichlet_values",
    "semi_lagrangian_history",
]

log = logging.getLogger(__name__)

MATRIX_KINDS = (
    "mass", "diffusion_DD", "divergence", "pressure_gradient",
    "convection_frozen", "adjoint_convection_frozen",
    "solid_geometric", "solid_geometric_adjoint",
    "control_mass", "barrier_mass",
)
VECTOR_KINDS = ("load_mass", "load_grad_outer", "load_dd")


@dataclass
class MatrixTerm:
    """One bilinear integrand.

    trial/test hold slot indices into the layout: a pair for vector
    fields, a single index for pressure slots.
    """

    kind: str
    coeff: float
    trial: tuple
    test: tuple
    frozen: dict = dfield(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MATRIX_KINDS:
            raise ValueError("unknown matrix term kind %r" % (self.kind,))
        if not np.isfinite(self.coeff):
            raise ValueError("non-finite coefficient in %s term" % self.kind)


@dataclass
class VectorTerm:
    """One load integrand against the test slots."""

    kind: str
    coeff: float
    test: tuple
    data: tuple = ()

    def __post_init__(self):
        if self.kind not in VECTOR_KINDS:
            raise ValueError("unknown vector term kind %r" % (self.kind,))
        if not np.isfinite(self.coeff):
            raise ValueError("non-finite coefficient in %s term" % self.kind)


class BlockLayout:
    """Field-contiguous layout of a list of scalar spaces."""

    def __init__(self, spaces):
        self.spaces = list(spaces)
        sizes = [s.ndof for s in self.spaces]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.total = int(self.offsets[-1])
        mesh = self.spaces[0].mesh
        for s in self.spaces:
            if s.mesh is not mesh:
                raise ValueError("all layout spaces must share one mesh")
        self.mesh = mesh

    def slot_range(self, i):
        return int(self.offsets[i]), int(self.offsets[i + 1])

    def extract(self, z, i):
        a, b = self.slot_range(i)
        return z[a:b]

    def global_dofs(self, i, local_dofs):
        return int(self.offsets[i]) + local_dofs


def _frozen_pair(term, key, mesh):
    try:
        fx, fy = term.frozen[key]
    except KeyError:
        raise ValueError("%s term requires frozen field %r" % (term.kind, key))
    for comp in (fx, fy):
        if comp.space.mesh is not mesh:
            raise ValueError("frozen field %r lives on a different mesh" % key)
    return fx, fy


def _vel_qp(fx, fy, order):
    return np.stack([fx.at_quadrature(order), fy.at_quadrature(order)], axis=-1)


def _jac_qp(fx, fy, order):
    """Jacobian (grad w)_{ij} = dw_i/dx_j at quadrature points, (ne,nq,2,2)."""
    return np.stack([fx.gradient_at_quadrature(order),
                     fy.gradient_at_quadrature(order)], axis=-2)


def _scalar_mass(wq, Nt, Ns):
    return np.einsum("eq,qa,qb->eab", wq, Nt, Ns, optimize=True)


def _geometric_blocks(wq, dN, Gd):
    """
    2x2 component blocks of (grad^T a grad d + grad^T d grad a) : grad b
    with the 'a' argument as column (trial) and 'b' as row (test).

    Returns blocks[m][c] of shape (ne, nloc_b, nloc_a) for test component
    m and trial component c.
    """
    blocks = [[None, None], [None, None]]
    for m in range(2):
        for c in range(2):
            # (d_m N_b) * (grad d_c . grad N_a)
            t1 = np.einsum("eq,eqb,eqa->eab", wq, dN[..., m],
                           np.einsum("eqd,eqad->eqa", Gd[:, :, c, :], dN),
                           optimize=True)
            # (d_m d_c) * (grad N_a . grad N_b)
            t2 = np.einsum("eq,eqad,eqbd->eab", wq * Gd[:, :, c, m],
                           dN, dN, optimize=True)
            blocks[m][c] = t1 + t2
    return blocks


def _matrix_term_blocks(term, trial, test, order):
    """Yield (test_slot, trial_slot, local blocks (ne, nl_t, nl_s))."""
    mesh = trial.mesh
    k = term.kind
    coeff = term.coeff

    if k in ("mass", "control_mass", "barrier_mass"):
        if k == "control_mass":
            alpha = term.frozen.get("alpha")
            if not alpha or alpha <= 0.0:
                raise ValueError("control_mass requires alpha > 0")
            coeff = coeff * (-1.0 / alpha)
        elif k == "barrier_mass":
            lam = term.frozen["lam"]
            u_c = term.frozen["u_c"]
            speed_sq = term.frozen["speed_sq"]
            denom = (speed_sq - u_c ** 2) ** 2
            coeff = coeff * 2.0 * lam / denom
        st = test.spaces[term.test[0]]
        ss = trial.spaces[term.trial[0]]
        edt, eds = st.element_data(order), ss.element_data(order)
        local = coeff * _scalar_mass(edt.warea, edt.N, eds.N)
        for m in range(2):
            yield term.test[m], term.trial[m], local

    elif k == "diffusion_DD":
        st = test.spaces[term.test[0]]
        ss = trial.spaces[term.trial[0]]
        gt = st.element_data(order).dNdx
        gs = ss.element_data(order).dNdx
        wq = st.element_data(order).warea

        def stiff(dt_, ds_):
            return np.einsum("eq,eqa,eqb->eab", wq, gt[..., dt_], gs[..., ds_],
                             optimize=True)

        gxgx, gygy = stiff(0, 0), stiff(1, 1)
        # D(u):D(v) = 4 ux,x vx,x + 2 (ux,y + uy,x)(vx,y + vy,x)/2 ... kept
        # in expanded component form
        yield term.test[0], term.trial[0], coeff * (4 * gxgx + 2 * gygy)
        yield term.test[1], term.trial[1], coeff * (4 * gygy + 2 * gxgx)
        yield term.test[0], term.trial[1], coeff * 2 * stiff(1, 0)
        yield term.test[1], term.trial[0], coeff * 2 * stiff(0, 1)

    elif k == "divergence":
        # coeff * int q div(u): test pressure slot, trial velocity pair
        sq = test.spaces[term.test[0]]
        sv = trial.spaces[term.trial[0]]
        Nq = sq.element_data(order).N
        gv = sv.element_data(order).dNdx
        wq = sq.element_data(order).warea
        for m in range(2):
            local = coeff * np.einsum("eq,qa,eqb->eab", wq, Nq, gv[..., m],
                                      optimize=True)
            yield term.test[0], term.trial[m], local

    elif k == "pressure_gradient":
        # coeff * int p div(v): trial pressure slot, test velocity pair.
        # Computed as the exact transpose of the divergence kernel so the
        # two blocks agree bitwise.
        sp_ = trial.spaces[term.trial[0]]
        sv = test.spaces[term.test[0]]
        Np = sp_.element_data(order).N
        gv = sv.element_data(order).dNdx
        wq = sv.element_data(order).warea
        for m in range(2):
            local = coeff * np.einsum("eq,qa,eqb->eab", wq, Np, gv[..., m],
                                      optimize=True)
            yield term.test[m], term.trial[0], local.transpose(0, 2, 1)

    elif k == "convection_frozen":
        wx, wy = _frozen_pair(term, "w", mesh)
        st = test.spaces[term.test[0]]
        ss = trial.spaces[term.trial[0]]
        edt, eds = st.element_data(order), ss.element_data(order)
        wvec = _vel_qp(wx, wy, order)
        wdotg = np.einsum("eqbd,eqd->eqb", eds.dNdx, wvec, optimize=True)
        local = coeff * np.einsum("eq,qa,eqb->eab", edt.warea, edt.N, wdotg,
                                  optimize=True)
        for m in range(2):
            yield term.test[m], term.trial[m], local

    elif k == "adjoint_convection_frozen":
        # coeff * [ ((v . grad) w) . u  -  ((w . grad) u) . v ]
        wx, wy = _frozen_pair(term, "w", mesh)
        st = test.spaces[term.test[0]]
        ss = trial.spaces[term.trial[0]]
        edt, eds = st.element_data(order), ss.element_data(order)
        wq = edt.warea
        Gw = _jac_qp(wx, wy, order)       # (ne,nq,j,i) = dw_j/dx_i
        wvec = _vel_qp(wx, wy, order)
        wdotg = np.einsum("eqbd,eqd->eqb", eds.dNdx, wvec, optimize=True)
        skew = coeff * np.einsum("eq,qa,eqb->eab", wq, edt.N, wdotg,
                                 optimize=True)
        for i in range(2):      # test component
            for j in range(2):  # trial component
                local = coeff * np.einsum("eq,qa,qb->eab",
                                          wq * Gw[:, :, j, i], edt.N, eds.N,
                                          optimize=True)
                if i == j:
                    local = local - skew
                yield term.test[i], term.trial[j], local

    elif k in ("solid_geometric", "solid_geometric_adjoint"):
        dx_, dy_ = _frozen_pair(term, "d", mesh)
        st = test.spaces[term.test[0]]
        ss = trial.spaces[term.trial[0]]
        if st is not ss:
            raise ValueError("geometric terms need equal trial/test spaces")
        ed = st.element_data(order)
        Gd = _jac_qp(dx_, dy_, order)
        blocks = _geometric_blocks(ed.warea, ed.dNdx, Gd)
        for m in range(2):
            for c in range(2):
                if k == "solid_geometric":
                    local = coeff * blocks[m][c]
                else:
                    # test function moves into the gradient-product slot
                    local = coeff * blocks[c][m].transpose(0, 2, 1)
                yield term.test[m], term.trial[c], local

    else:  # pragma: no cover
        raise AssertionError(k)


def assemble_matrix(trial_spaces, test_spaces, terms, order=4):
    """
    Assemble the sum of bilinear terms into one sparse block matrix.

    Parameters
    ----------
    trial_spaces, test_spaces : list of FESpace
        slot layouts for columns and rows; all spaces of either layout
        must share one mesh
    terms : list of MatrixTerm
    order : int
        quadrature order (default 4)

    Returns
    -------
    SparseMatrix of shape (sum of test ndof, sum of trial ndof)
    """
    trial = BlockLayout(trial_spaces)
    test = BlockLayout(test_spaces)
    if trial.mesh is not test.mesh:
        raise ValueError("trial and test layouts live on different meshes")
    rows, cols, vals = [], [], []
    for term in terms:
        for ti, si, local in _matrix_term_blocks(term, trial, test, order):
            st = test.spaces[ti]
            ss = trial.spaces[si]
            r = test.global_dofs(ti, st.element_dofs)
            c = trial.global_dofs(si, ss.element_dofs)
            ne, nlt, nls = local.shape
            rr = np.broadcast_to(r[:, :, None], (ne, nlt, nls)).ravel()
            cc = np.broadcast_to(c[:, None, :], (ne, nlt, nls)).ravel()
            # pre-sum duplicates of this block in element order, so that
            # transposed term pairs (divergence vs pressure gradient,
            # geometric vs its adjoint mirror) accumulate their entries
            # in the identical sequence and agree bitwise
            key = rr * np.int64(trial.total) + cc
            perm = np.argsort(key, kind="stable")
            key = key[perm]
            v = local.ravel()[perm]
            first = np.ones(len(key), dtype=bool)
            first[1:] = key[1:] != key[:-1]
            starts = np.nonzero(first)[0]
            rows.append((key[starts] // trial.total).astype(np.int64))
            cols.append((key[starts] % trial.total).astype(np.int64))
            vals.append(np.add.reduceat(v, starts))
    if not rows:
        import scipy.sparse as sp
        return SparseMatrix(sp.csr_matrix((test.total, trial.total)))
    return SparseMatrix.from_coo(np.concatenate(rows), np.concatenate(cols),
                                 np.concatenate(vals),
                                 (test.total, trial.total))


def assemble_vector(test_spaces, terms, order=4):
    """
    Assemble load terms into one dense block vector.

    Each term integrates against the named test slots; data fields must
    live on the layout mesh.
    """
    test = BlockLayout(test_spaces)
    out = np.zeros(test.total)
    for term in terms:
        st = test.spaces[term.test[0]]
        ed = st.element_data(order)
        wq = ed.warea
        if term.kind == "load_mass":
            gx, gy = term.data
            if isinstance(gx, FieldCoefficients):
                if gx.space.mesh is not test.mesh:
                    raise ValueError("load field lives on a different mesh")
                comp_q = (gx.at_quadrature(order), gy.at_quadrature(order))
            else:
                ne, nq = wq.shape
                comp_q = (np.full((ne, nq), float(gx)),
                          np.full((ne, nq), float(gy)))
            for m in range(2):
                local = term.coeff * np.einsum("eq,qa->ea", wq * comp_q[m],
                                               ed.N, optimize=True)
                sm = test.spaces[term.test[m]]
                np.add.at(out, test.global_dofs(term.test[m], sm.element_dofs),
                          local)
        elif term.kind == "load_grad_outer":
            dx_, dy_ = term.data
            Gd = _jac_qp(dx_, dy_, order)
            # (grad^T d grad d)_{ij} = sum_k d_k,i d_k,j against dv_m/dx_j
            for m in range(2):
                gg = np.einsum("eqk,eqkd->eqd", Gd[:, :, :, m], Gd,
                               optimize=True)
                local = term.coeff * np.einsum("eq,eqd,eqad->ea", wq, gg,
                                               ed.dNdx, optimize=True)
                np.add.at(out, test.global_dofs(term.test[m], st.element_dofs),
                          local)
        elif term.kind == "load_dd":
            dx_, dy_ = term.data
            Gd = _jac_qp(dx_, dy_, order)
            S = Gd + Gd.transpose(0, 1, 3, 2)
            # D(d):D(v) for test component m reduces to 2 * S[:,m] . grad N
            for m in range(2):
                local = term.coeff * 2.0 * np.einsum(
                    "eq,eqd,eqad->ea", wq, S[:, :, :, m], ed.dNdx,
                    optimize=True)
                np.add.at(out, test.global_dofs(term.test[m], st.element_dofs),
                          local)
        else:  # pragma: no cover
            raise AssertionError(term.kind)
    return out


def dirichlet_values(layout, specs):
    """
    Resolve (slot, label, value function) constraints to dof values.

    Later entries win at shared dofs (corner vertices belonging to two
    labelled segments); every overwrite is logged.

    Returns
    -------
    dofs : int array
    values : float array
    """
    combined = {}
    for slot, label, fn in specs:
        space = layout.spaces[slot]
        local = space.boundary_dofs(label)
        coords = space.dof_coords[local]
        if callable(fn):
            vals = np.asarray(fn(coords[:, 0], coords[:, 1]), dtype=float)
            vals = np.broadcast_to(vals, (len(local),))
        else:
            vals = np.full(len(local), float(fn))
        for d, v in zip(layout.global_dofs(slot, local), vals):
            d = int(d)
            if d in combined and combined[d] != v:
                log.debug("dirichlet overwrite at dof %d: %g -> %g (label %d)",
                          d, combined[d], v, label)
            combined[d] = float(v)
    dofs = np.array(sorted(combined), dtype=np.int64)
    values = np.array([combined[d] for d in dofs])
    return dofs, values


def apply_dirichlet(a, b, dofs, values):
    """
    Symmetric elimination of Dirichlet constraints, in place.

    Constrained rows become identity with the prescribed value on the
    right-hand side; constrained columns are moved to the right-hand
    side.  The matrix stays square.
    """
    import scipy.sparse as sp

    n = a.shape[0]
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    xbc = np.zeros(n)
    xbc[dofs] = values
    b -= a.mat @ xbc
    keep = np.ones(n)
    keep[dofs] = 0.0
    sel = sp.diags(keep)
    pin = np.zeros(n)
    pin[dofs] = 1.0
    a.mat = (sel @ a.mat @ sel + sp.diags(pin)).tocsr()
    a.mat.sum_duplicates()
    a.mat.sort_indices()
    b[dofs] = values


def semi_lagrangian_history(ux, uy, dt, locator, fields=None, bisect_iters=30):
    """
    Characteristic (semi-Lagrangian) transport of nodal fields.

    Each degree of freedom at position x takes the value of the field at
    the characteristic foot x - dt*u(x), evaluated on the same mesh.
    Feet tracing outside the domain are pulled back to the last point of
    the segment [x, foot] still inside (boundary intersection by
    bisection).

    Parameters
    ----------
    ux, uy : FieldCoefficients
        transporting velocity on a quadratic space
    dt : float
    locator : PointLocator
        point-location structure for the velocity mesh
    fields : sequence of FieldCoefficients, optional
        fields to transport; defaults to (ux, uy)

    Returns
    -------
    list of FieldCoefficients in the order of `fields`
    """
    space = ux.space
    if fields is None:
        fields = (ux, uy)
    coords = space.dof_coords
    feet = coords - dt * np.column_stack([ux.values, uy.values])

    elems, bary = locator.locate(feet)
    missing = elems < 0
    if missing.any():
        idx = np.nonzero(missing)[0]
        lo = np.zeros(len(idx))
        hi = np.ones(len(idx))
        seg = feet[idx] - coords[idx]
        for _ in range(bisect_iters):
            mid = 0.5 * (lo + hi)
            pts = coords[idx] + mid[:, None] * seg
            e_mid, _ = locator.locate(pts)
            inside = e_mid >= 0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        clamped = coords[idx] + lo[:, None] * seg
        e_cl, b_cl = locator.locate(clamped)
        still = e_cl < 0
        if still.any():  # starting node failed to locate: fall back to itself
            e_st, b_st = locator.locate(coords[idx[still]])
            e_cl[still], b_cl[still] = e_st, b_st
        elems[idx], bary[idx] = e_cl, b_cl

    out = []
    for f in fields:
        if f.space is not space:
            raise ValueError("transported fields must share the velocity space")
        out.append(FieldCoefficients(space, f.eval(elems, bary)))
    return out
