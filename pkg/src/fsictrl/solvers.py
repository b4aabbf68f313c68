# -*- coding: utf-8 -*-

"""
Time-stepping drivers for flow and fluid-structure control.

Three steppers advance a state by one backward-Euler step, each through a
single sparse direct solve:

``step_forward``
    plain fluid-structure interaction: unknowns (u, p) on the background
    mesh, solid corrections composed through the fictitious-domain
    interpolation; convection by characteristics.

``step_control``
    the monolithic optimality system for displacement tracking: unknowns
    (u, u_adj, p, p_adj); the distributed control force on the solid is
    eliminated through the stationarity relation f = u_adj / alpha and
    recovered after the solve.

``step_flow_control``
    the reduced velocity-tracking problem for pure flow: the same
    four-field system with the control force and the tracking term
    acting on the whole domain.

All solid integrals are updated-Lagrangian: they are taken over the
current solid mesh, which afterwards moves with the computed velocity,
and the accumulated displacement is the time integral of the one
velocity field restricted to the solid.

Block layout (field-contiguous): forward systems order the unknowns
``[u_x, u_y, p]``; control systems ``[u_x, u_y, uadj_x, uadj_y, p,
p_adj]``.  Rows pair each unknown with the test function of the
equation it is solved from, so Dirichlet handling stays per-field.
"""

import math
from dataclasses import dataclass, field as dfield, replace

import numpy as np

from .assembly import (BlockLayout, MatrixTerm, VectorTerm, apply_dirichlet,
                       assemble_matrix, assemble_vector, dirichlet_values,
                       semi_lagrangian_history)
from .coupling import (PointLocator, build_interpolation, compose_system,
                       mixed_interpolation)
from .fespace import FESpace, FieldCoefficients, l2_norm
from .linalg import LUSolver, spadd
from .mesh import move_mesh

__all__ = [
    "Materials",
    "ControlSpec",
    "BoundaryConditions",
    "StepReport",
    "FlowState",
    "FsiState",
    "make_flow_state",
    "make_fsi_state",
    "step_forward",
    "step_control",
    "step_flow_control",
    "forward_system",
    "adjoint_system",
    "cavity_objective",
    "rotation_objective",
    "BarrierInfeasibleError",
    "oscillation_stats",
    "save_checkpoint",
    "load_checkpoint",
]

# slots of the control-system layout
UX, UY, AX, AY, PP, PA = range(6)


class BarrierInfeasibleError(Exception):
    """Solid speed already at or above the bound when the barrier is on."""


@dataclass(frozen=True)
class Materials:
    """Fluid/solid constants: densities, viscosity, elasticity, gravity."""

    rho_f: float
    rho_s: float
    mu_f: float
    c1: float = 0.0
    gravity: float = 0.0


@dataclass(frozen=True)
class BoundaryConditions:
    """
    Velocity Dirichlet data and pressure handling.

    dirichlet : list of (label, ux, uy)
        values may be floats or vectorized callables of (x, y); listed
        order decides shared corner dofs (last wins)
    pin_pressure : bool
        pin one pressure (and adjoint pressure) dof to zero; required for
        enclosed flows with no stress-free outlet
    """

    dirichlet: tuple
    pin_pressure: bool = False


@dataclass(frozen=True)
class ControlSpec:
    """
    Parameters of the per-step tracking problem.

    alpha : float
        force regularisation weight (> 0)
    lam : float
        velocity-bound barrier weight (0 disables the constraint)
    u_c : float or callable(t), optional
        bound for the L2 norm of the solid velocity
    d_g : callable(X, Y, t) -> (dx, dy), optional
        objective displacement on material coordinates; None tracks zero
        displacement
    t_start, t_end : float
        control window
    tracking_in_lhs : bool
        also assemble the implicit dt^2 tracking mass on the left-hand
        side (off by default; documented variant)
    """

    alpha: float
    lam: float = 0.0
    u_c: object = None
    d_g: object = None
    t_start: float = 0.0
    t_end: float = math.inf
    tracking_in_lhs: bool = False

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive, got %g" % self.alpha)
        if self.lam < 0.0:
            raise ValueError("lam must be nonnegative, got %g" % self.lam)
        if not self.t_start < self.t_end:
            raise ValueError("empty control window [%g, %g)"
                             % (self.t_start, self.t_end))
        if self.lam > 0.0 and self.u_c is None:
            raise ValueError("a velocity bound u_c is required when lam > 0")

    def active(self, t, dt):
        """Whether the step from t to t+dt lies in the control window."""
        return (t >= self.t_start - 1e-12) and (t < self.t_end - 1e-12)

    def bound_at(self, t):
        return float(self.u_c(t)) if callable(self.u_c) else float(self.u_c)


@dataclass
class StepReport:
    """Per-step diagnostics; all norms are L2 over the relevant domain."""

    t: float
    J_track: float
    J_reg: float
    force_l2: float
    adjoint_l2: float
    solid_speed: float
    tip_x: float
    tip_y: float
    div_l2: float
    solve_residual: float
    tracking_rel_err: float


@dataclass
class FlowState:
    """Background-only state for pure flow problems."""

    mesh: object
    V: FESpace
    Q: FESpace
    ux: FieldCoefficients
    uy: FieldCoefficients
    p: FieldCoefficients
    t: float = 0.0
    adjoint: tuple = None       # (ax, ay, pa) of the last control solve


@dataclass
class FsiState:
    """Coupled state: background fields plus the moving solid."""

    mesh: object
    V: FESpace
    Q: FESpace
    ux: FieldCoefficients
    uy: FieldCoefficients
    p: FieldCoefficients
    solid_mesh: object
    Vs: FESpace
    usx: FieldCoefficients
    usy: FieldCoefficients
    dx: FieldCoefficients
    dy: FieldCoefficients
    material_coords: np.ndarray   # initial solid dof coordinates
    t: float = 0.0
    tip: np.ndarray = None
    adjoint: tuple = None


def make_flow_state(mesh, t=0.0):
    V = FESpace(mesh, 2)
    Q = FESpace(mesh, 1)
    return FlowState(mesh, V, Q, FieldCoefficients(V), FieldCoefficients(V),
                     FieldCoefficients(Q), t=t)


def make_fsi_state(mesh, solid_mesh, t=0.0, tip=None):
    V = FESpace(mesh, 2)
    Q = FESpace(mesh, 1)
    Vs = FESpace(solid_mesh, 2)
    tip = np.array([np.nan, np.nan]) if tip is None else np.asarray(tip, float)
    return FsiState(mesh, V, Q, FieldCoefficients(V), FieldCoefficients(V),
                    FieldCoefficients(Q), solid_mesh, Vs,
                    FieldCoefficients(Vs), FieldCoefficients(Vs),
                    FieldCoefficients(Vs), FieldCoefficients(Vs),
                    Vs.dof_coords.copy(), t=t, tip=tip.copy())


# ---------------------------------------------------------------------------
# objectives

def cavity_objective(x, y, t):
    """
    Recirculating velocity profile derived from the separable stream
    function Psi(x, y, t) = psi(x, t) psi(y, t) with
    psi(s, t) = (1 - s)^2 (1 - cos 4 pi s t); returns (dPsi/dy, -dPsi/dx).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def psi(s):
        return (1.0 - s) ** 2 * (1.0 - np.cos(4.0 * np.pi * s * t))

    def dpsi(s):
        return (-2.0 * (1.0 - s) * (1.0 - np.cos(4.0 * np.pi * s * t))
                + (1.0 - s) ** 2 * 4.0 * np.pi * t * np.sin(4.0 * np.pi * s * t))

    return psi(x) * dpsi(y), -dpsi(x) * psi(y)


def rotation_objective(x, y, t, center=(0.6, 0.5), omega=-np.pi / 4):
    """
    Rigid-rotation displacement about a center: (R(omega t) - I)(x - c).

    The identity is subtracted so the objective displacement vanishes at
    t = 0 (a pure R(omega t)(x - c) would not).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx, ry = x - center[0], y - center[1]
    c, s = np.cos(omega * t), np.sin(omega * t)
    return (c - 1.0) * rx - s * ry, s * rx + (c - 1.0) * ry


def _objective_displacement(control, material_coords, t, space):
    if control is None or control.d_g is None:
        zero = FieldCoefficients(space)
        return zero, zero.copy()
    gx, gy = control.d_g(material_coords[:, 0], material_coords[:, 1], t)
    return (FieldCoefficients(space, np.asarray(gx, float)),
            FieldCoefficients(space, np.asarray(gy, float)))


# ---------------------------------------------------------------------------
# shared assembly pieces

def _bg_forward_terms(mat, dt):
    return [
        MatrixTerm("mass", mat.rho_f / dt, (0, 1), (0, 1)),
        MatrixTerm("diffusion_DD", mat.mu_f / 2.0, (0, 1), (0, 1)),
        MatrixTerm("pressure_gradient", -1.0, (2,), (0, 1)),
        MatrixTerm("divergence", -1.0, (0, 1), (2,)),
    ]


def _solid_matrix_terms(mat, dt, d_pair, trial, test, adjoint):
    kind = "solid_geometric_adjoint" if adjoint else "solid_geometric"
    return [
        MatrixTerm("mass", (mat.rho_s - mat.rho_f) / dt, trial, test),
        MatrixTerm("diffusion_DD", (dt * mat.c1 - mat.mu_f) / 2.0, trial, test),
        MatrixTerm(kind, -dt * mat.c1, trial, test, frozen={"d": d_pair}),
    ]


def _solid_rhs_terms(mat, dt, d_pair, us_pair, test):
    rho_d = mat.rho_s - mat.rho_f
    terms = [
        VectorTerm("load_mass", rho_d / dt, test, us_pair),
        VectorTerm("load_dd", -mat.c1 / 2.0, test, d_pair),
        VectorTerm("load_grad_outer", mat.c1, test, d_pair),
    ]
    if mat.gravity:
        terms.append(VectorTerm("load_mass", rho_d, test,
                                (0.0, mat.gravity)))
    return terms


def _bc_specs(bc, vel_slots, adj_slots=None):
    specs = []
    for label, vx, vy in bc.dirichlet:
        specs.append((vel_slots[0], label, vx))
        specs.append((vel_slots[1], label, vy))
    if adj_slots is not None:
        for label, _, _ in bc.dirichlet:
            specs.append((adj_slots[0], label, 0.0))
            specs.append((adj_slots[1], label, 0.0))
    return specs


def _constraints(layout, bc, vel_slots, adj_slots=None, pressure_slots=()):
    dofs, values = dirichlet_values(layout, _bc_specs(bc, vel_slots, adj_slots))
    if bc.pin_pressure and pressure_slots:
        extra = np.array([layout.offsets[s] for s in pressure_slots],
                         dtype=np.int64)
        dofs = np.concatenate([dofs, extra])
        values = np.concatenate([values, np.zeros(len(extra))])
    return dofs, values


def _divergence_l2(ux, uy, order=4):
    gx = ux.gradient_at_quadrature(order)
    gy = uy.gradient_at_quadrature(order)
    div = gx[..., 0] + gy[..., 1]
    warea = ux.space.element_data(order).warea
    return float(np.sqrt(np.einsum("eq,eq->", div * div, warea)))


def _locate_one(mesh, pt, tol=1e-9):
    """Brute-force location of a single point (lowest element wins)."""
    v, t = mesh.vertices, mesh.triangles
    p0 = v[t[:, 0]]
    J1 = v[t[:, 1]] - p0
    J2 = v[t[:, 2]] - p0
    det = J1[:, 0] * J2[:, 1] - J2[:, 0] * J1[:, 1]
    rx, ry = pt[0] - p0[:, 0], pt[1] - p0[:, 1]
    l1 = (J2[:, 1] * rx - J2[:, 0] * ry) / det
    l2 = (-J1[:, 1] * rx + J1[:, 0] * ry) / det
    l0 = 1.0 - l1 - l2
    ok = np.nonzero((l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol))[0]
    if not ok.size:
        return None
    e = int(ok[0])
    return e, np.array([l0[e], l1[e], l2[e]])


def _advect_tip(tip, solid_mesh, usx, usy, dt):
    if not np.isfinite(tip).all():
        return tip
    hit = _locate_one(solid_mesh, tip)
    if hit is None:
        return tip
    e, bary = hit
    vx = usx.eval(np.array([e]), bary[None, :])[0]
    vy = usy.eval(np.array([e]), bary[None, :])[0]
    return tip + dt * np.array([vx, vy])


# ---------------------------------------------------------------------------
# forward FSI

def forward_system(state, mat, dt, bc, force=None, cache=None, order=4,
                   convection="characteristics"):
    """
    Assemble the (u, p) system of one step, before boundary conditions.

    Returns (A, b, layout, scalar interpolation) where A already contains
    the composed solid contributions; `force` optionally prescribes a
    distributed force (pair of solid-space fields) on the solid.
    """
    cache = cache if cache is not None else {}
    V, Q, Vs = state.V, state.Q, state.Vs
    bg_spaces = [V, V, Q]
    s_spaces = [Vs, Vs]
    layout = BlockLayout(bg_spaces)
    s_layout = BlockLayout(s_spaces)

    if "locator" not in cache:
        cache["locator"] = PointLocator(state.mesh)
    locator = cache["locator"]

    key = ("K_forward", dt)
    if key not in cache:
        cache[key] = assemble_matrix(bg_spaces, bg_spaces,
                                     _bg_forward_terms(mat, dt), order=order)
    K = cache[key]
    if convection == "picard":
        K = spadd(K, assemble_matrix(
            bg_spaces, bg_spaces,
            [MatrixTerm("convection_frozen", mat.rho_f, (0, 1), (0, 1),
                        frozen={"w": (state.ux, state.uy)})], order=order))
        hist = (state.ux, state.uy)
    elif convection == "characteristics":
        hist = semi_lagrangian_history(state.ux, state.uy, dt, locator)
    else:
        raise ValueError("unknown convection scheme %r" % (convection,))

    g_terms = [VectorTerm("load_mass", mat.rho_f / dt, (0, 1), tuple(hist))]
    if mat.gravity:
        g_terms.append(VectorTerm("load_mass", mat.rho_f, (0, 1),
                                  (0.0, mat.gravity)))
    g = assemble_vector(bg_spaces, g_terms, order=order)

    d_pair = (state.dx, state.dy)
    Ks = assemble_matrix(s_spaces, s_spaces,
                         _solid_matrix_terms(mat, dt, d_pair, (0, 1), (0, 1),
                                             adjoint=False), order=order)
    gs_terms = _solid_rhs_terms(mat, dt, d_pair, (state.usx, state.usy), (0, 1))
    if force is not None:
        gs_terms.append(VectorTerm("load_mass", 1.0, (0, 1), tuple(force)))
    gs = assemble_vector(s_spaces, gs_terms, order=order)

    p0 = build_interpolation(V, Vs, locator)
    pmix = mixed_interpolation(p0, layout, s_layout, {0: 0, 1: 1})
    A, b = compose_system(K, Ks, pmix, g, gs)
    return A, b, layout, p0


def _advance_solid(state, p0, zx, zy, dt, order=4):
    """Restrict the velocity to the solid, move it, rebuild its space."""
    Vs = state.Vs
    usx = FieldCoefficients(Vs, p0.matrix @ zx)
    usy = FieldCoefficients(Vs, p0.matrix @ zy)
    solid_speed = l2_norm(usx, usy, order=order)
    tip = _advect_tip(state.tip, state.solid_mesh, usx, usy, dt)
    new_dx = state.dx.values + dt * usx.values
    new_dy = state.dy.values + dt * usy.values
    new_mesh = move_mesh(state.solid_mesh, usx, usy, dt)
    Vs2 = FESpace(new_mesh, 2)
    return (new_mesh, Vs2,
            FieldCoefficients(Vs2, usx.values.copy()),
            FieldCoefficients(Vs2, usy.values.copy()),
            FieldCoefficients(Vs2, new_dx), FieldCoefficients(Vs2, new_dy),
            solid_speed, tip)


def _tracking_error(control, material_coords, Vs, dx, dy, t, order=4):
    """J_track and relative error on the (current) solid mesh."""
    gx, gy = _objective_displacement(control, material_coords, t, Vs)
    ex = FieldCoefficients(Vs, dx.values - gx.values)
    ey = FieldCoefficients(Vs, dy.values - gy.values)
    err = l2_norm(ex, ey, order=order)
    gnorm = l2_norm(gx, gy, order=order)
    rel = err / gnorm if gnorm > 0 else err
    return 0.5 * err ** 2, rel


def step_forward(state, mat, dt, bc, force=None, cache=None, order=4,
                 convection="characteristics", control=None):
    """
    One uncontrolled step; `control` only supplies the objective used in
    the reported tracking error.

    Returns (new state, StepReport).
    """
    A, b, layout, p0 = forward_system(state, mat, dt, bc, force=force,
                                      cache=cache, order=order,
                                      convection=convection)
    dofs, values = _constraints(layout, bc, (0, 1), pressure_slots=(2,))
    apply_dirichlet(A, b, dofs, values)
    z, residual = LUSolver(A).solve(b)

    zx, zy = layout.extract(z, 0), layout.extract(z, 1)
    ux = FieldCoefficients(state.V, zx.copy())
    uy = FieldCoefficients(state.V, zy.copy())
    p = FieldCoefficients(state.Q, layout.extract(z, 2).copy())

    (new_mesh, Vs2, usx, usy, dx, dy, solid_speed, tip) = _advance_solid(
        state, p0, zx, zy, dt, order=order)
    t_new = state.t + dt
    J_track, rel = _tracking_error(control, state.material_coords, Vs2,
                                   dx, dy, t_new, order=order)
    report = StepReport(
        t=t_new, J_track=J_track, J_reg=0.0, force_l2=0.0, adjoint_l2=0.0,
        solid_speed=solid_speed, tip_x=float(tip[0]), tip_y=float(tip[1]),
        div_l2=_divergence_l2(ux, uy, order), solve_residual=residual,
        tracking_rel_err=rel)
    new_state = replace(state, ux=ux, uy=uy, p=p, solid_mesh=new_mesh, Vs=Vs2,
                        usx=usx, usy=usy, dx=dx, dy=dy, t=t_new, tip=tip,
                        adjoint=None)
    return new_state, report


# ---------------------------------------------------------------------------
# monolithic FSI control

def _bg_control_const_terms(mat, dt):
    return [
        MatrixTerm("mass", mat.rho_f / dt, (UX, UY), (UX, UY)),
        MatrixTerm("mass", mat.rho_f / dt, (AX, AY), (AX, AY)),
        MatrixTerm("diffusion_DD", mat.mu_f / 2.0, (UX, UY), (UX, UY)),
        MatrixTerm("diffusion_DD", mat.mu_f / 2.0, (AX, AY), (AX, AY)),
        MatrixTerm("pressure_gradient", -1.0, (PP,), (UX, UY)),
        MatrixTerm("divergence", -1.0, (UX, UY), (PP,)),
        MatrixTerm("pressure_gradient", -1.0, (PA,), (AX, AY)),
        MatrixTerm("divergence", -1.0, (AX, AY), (PA,)),
    ]


def control_system(state, mat, control, dt, bc, cache=None, order=4):
    """
    Assemble the monolithic four-field system of one controlled step.

    Returns (A, b, layout, scalar interpolation, barrier_speed_sq).
    """
    cache = cache if cache is not None else {}
    V, Q, Vs = state.V, state.Q, state.Vs
    bg_spaces = [V, V, V, V, Q, Q]
    s_spaces = [Vs, Vs, Vs, Vs]
    layout = BlockLayout(bg_spaces)
    s_layout = BlockLayout(s_spaces)

    if "locator" not in cache:
        cache["locator"] = PointLocator(state.mesh)
    locator = cache["locator"]
    t_new = state.t + dt

    key = ("K_control", dt)
    if key not in cache:
        cache[key] = assemble_matrix(bg_spaces, bg_spaces,
                                     _bg_control_const_terms(mat, dt),
                                     order=order)
    K = spadd(cache[key], assemble_matrix(
        bg_spaces, bg_spaces,
        [MatrixTerm("adjoint_convection_frozen", mat.rho_f, (AX, AY), (AX, AY),
                    frozen={"w": (state.ux, state.uy)})], order=order))

    hist = semi_lagrangian_history(state.ux, state.uy, dt, locator)
    g_terms = [VectorTerm("load_mass", mat.rho_f / dt, (UX, UY), tuple(hist))]
    if mat.gravity:
        g_terms.append(VectorTerm("load_mass", mat.rho_f, (UX, UY),
                                  (0.0, mat.gravity)))
    g = assemble_vector(bg_spaces, g_terms, order=order)

    d_pair = (state.dx, state.dy)
    s_terms = (
        _solid_matrix_terms(mat, dt, d_pair, (0, 1), (0, 1), adjoint=False)
        + _solid_matrix_terms(mat, dt, d_pair, (2, 3), (2, 3), adjoint=True)
        + [MatrixTerm("control_mass", 1.0, (2, 3), (0, 1),
                      frozen={"alpha": control.alpha})]
    )
    barrier_speed_sq = None
    if control.lam > 0.0:
        u_c = control.bound_at(t_new)
        barrier_speed_sq = l2_norm(state.usx, state.usy, order=order) ** 2
        if barrier_speed_sq >= u_c ** 2:
            raise BarrierInfeasibleError(
                "solid speed %.4g already exceeds the bound %.4g at t=%.4g; "
                "reduce dt or raise the bound"
                % (math.sqrt(barrier_speed_sq), u_c, state.t))
        s_terms.append(MatrixTerm(
            "barrier_mass", 1.0, (0, 1), (2, 3),
            frozen={"lam": control.lam, "u_c": u_c,
                    "speed_sq": barrier_speed_sq}))
    if control.tracking_in_lhs:
        s_terms.append(MatrixTerm("mass", dt * dt, (0, 1), (2, 3)))
    Ks = assemble_matrix(s_spaces, s_spaces, s_terms, order=order)

    gx, gy = _objective_displacement(control, state.material_coords, t_new, Vs)
    track = (FieldCoefficients(Vs, state.dx.values - gx.values),
             FieldCoefficients(Vs, state.dy.values - gy.values))
    gs_terms = (_solid_rhs_terms(mat, dt, d_pair, (state.usx, state.usy), (0, 1))
                + [VectorTerm("load_mass", -dt, (2, 3), track)])
    gs = assemble_vector(s_spaces, gs_terms, order=order)

    p0 = build_interpolation(V, Vs, locator)
    pmix = mixed_interpolation(p0, layout, s_layout,
                               {0: UX, 1: UY, 2: AX, 3: AY})
    A, b = compose_system(K, Ks, pmix, g, gs)
    return A, b, layout, p0, barrier_speed_sq


def step_control(state, mat, control, dt, bc, cache=None, order=4):
    """
    One monolithic control step.

    Solves the coupled state/adjoint system, recovers the control force
    f = u_adj / alpha on the solid, advances displacement, mesh and time.
    """
    A, b, layout, p0, _ = control_system(state, mat, control, dt, bc,
                                         cache=cache, order=order)
    dofs, values = _constraints(layout, bc, (UX, UY), adj_slots=(AX, AY),
                                pressure_slots=(PP, PA))
    apply_dirichlet(A, b, dofs, values)
    z, residual = LUSolver(A).solve(b)

    zx, zy = layout.extract(z, UX), layout.extract(z, UY)
    ux = FieldCoefficients(state.V, zx.copy())
    uy = FieldCoefficients(state.V, zy.copy())
    ax = FieldCoefficients(state.V, layout.extract(z, AX).copy())
    ay = FieldCoefficients(state.V, layout.extract(z, AY).copy())
    p = FieldCoefficients(state.Q, layout.extract(z, PP).copy())
    pa = FieldCoefficients(state.Q, layout.extract(z, PA).copy())

    # control force from the stationarity relation, on the solid space
    asx = FieldCoefficients(state.Vs, p0.matrix @ ax.values)
    asy = FieldCoefficients(state.Vs, p0.matrix @ ay.values)
    adjoint_l2 = l2_norm(asx, asy, order=order)
    force_l2 = adjoint_l2 / control.alpha
    J_reg = 0.5 * adjoint_l2 ** 2 / control.alpha

    (new_mesh, Vs2, usx, usy, dx, dy, solid_speed, tip) = _advance_solid(
        state, p0, zx, zy, dt, order=order)
    t_new = state.t + dt
    J_track, rel = _tracking_error(control, state.material_coords, Vs2,
                                   dx, dy, t_new, order=order)
    report = StepReport(
        t=t_new, J_track=J_track, J_reg=J_reg, force_l2=force_l2,
        adjoint_l2=adjoint_l2, solid_speed=solid_speed,
        tip_x=float(tip[0]), tip_y=float(tip[1]),
        div_l2=_divergence_l2(ux, uy, order), solve_residual=residual,
        tracking_rel_err=rel)
    new_state = replace(state, ux=ux, uy=uy, p=p, solid_mesh=new_mesh, Vs=Vs2,
                        usx=usx, usy=usy, dx=dx, dy=dy, t=t_new, tip=tip,
                        adjoint=(ax, ay, pa))
    return new_state, report


# ---------------------------------------------------------------------------
# flow control

def flow_control_system(state, mat, alpha, u_g, dt, bc, cache=None, order=4):
    """Assemble the four-field velocity-tracking system on the background."""
    cache = cache if cache is not None else {}
    V, Q = state.V, state.Q
    bg_spaces = [V, V, V, V, Q, Q]
    layout = BlockLayout(bg_spaces)
    if "locator" not in cache:
        cache["locator"] = PointLocator(state.mesh)
    locator = cache["locator"]
    t_new = state.t + dt

    key = ("K_flow", dt, alpha)
    if key not in cache:
        terms = _bg_control_const_terms(mat, dt) + [
            MatrixTerm("control_mass", 1.0, (AX, AY), (UX, UY),
                       frozen={"alpha": alpha}),
            MatrixTerm("mass", 1.0, (UX, UY), (AX, AY)),
        ]
        cache[key] = assemble_matrix(bg_spaces, bg_spaces, terms, order=order)
    A = spadd(cache[key], assemble_matrix(
        bg_spaces, bg_spaces,
        [MatrixTerm("adjoint_convection_frozen", mat.rho_f, (AX, AY), (AX, AY),
                    frozen={"w": (state.ux, state.uy)})], order=order))

    hist = semi_lagrangian_history(state.ux, state.uy, dt, locator)
    ugx, ugy = u_g(V.dof_coords[:, 0], V.dof_coords[:, 1], t_new)
    ug_fields = (FieldCoefficients(V, np.asarray(ugx, float)),
                 FieldCoefficients(V, np.asarray(ugy, float)))
    g_terms = [
        VectorTerm("load_mass", mat.rho_f / dt, (UX, UY), tuple(hist)),
        VectorTerm("load_mass", 1.0, (AX, AY), ug_fields),
    ]
    if mat.gravity:
        g_terms.append(VectorTerm("load_mass", mat.rho_f, (UX, UY),
                                  (0.0, mat.gravity)))
    b = assemble_vector(bg_spaces, g_terms, order=order)
    return A, b, layout, ug_fields


def step_flow_control(state, mat, alpha, u_g, dt, bc, cache=None, order=4):
    """
    One velocity-tracking step on the background mesh alone.

    Returns (new state, StepReport); the reported tracking error is
    ||u - u_g|| / ||u_g|| against the interpolated objective at the new
    time.
    """
    A, b, layout, ug_fields = flow_control_system(state, mat, alpha, u_g, dt,
                                                  bc, cache=cache, order=order)
    dofs, values = _constraints(layout, bc, (UX, UY), adj_slots=(AX, AY),
                                pressure_slots=(PP, PA))
    apply_dirichlet(A, b, dofs, values)
    z, residual = LUSolver(A).solve(b)

    V, Q = state.V, state.Q
    ux = FieldCoefficients(V, layout.extract(z, UX).copy())
    uy = FieldCoefficients(V, layout.extract(z, UY).copy())
    ax = FieldCoefficients(V, layout.extract(z, AX).copy())
    ay = FieldCoefficients(V, layout.extract(z, AY).copy())
    p = FieldCoefficients(Q, layout.extract(z, PP).copy())
    pa = FieldCoefficients(Q, layout.extract(z, PA).copy())

    err = l2_norm(FieldCoefficients(V, ux.values - ug_fields[0].values),
                  FieldCoefficients(V, uy.values - ug_fields[1].values),
                  order=order)
    gnorm = l2_norm(*ug_fields, order=order)
    rel = err / gnorm if gnorm > 0 else err
    adjoint_l2 = l2_norm(ax, ay, order=order)
    t_new = state.t + dt
    report = StepReport(
        t=t_new, J_track=0.5 * err ** 2, J_reg=0.5 * adjoint_l2 ** 2 / alpha,
        force_l2=adjoint_l2 / alpha, adjoint_l2=adjoint_l2,
        solid_speed=0.0, tip_x=0.0, tip_y=0.0,
        div_l2=_divergence_l2(ux, uy, order), solve_residual=residual,
        tracking_rel_err=rel)
    new_state = replace(state, ux=ux, uy=uy, p=p, t=t_new,
                        adjoint=(ax, ay, pa))
    return new_state, report


# ---------------------------------------------------------------------------
# standalone optimality blocks (verification surface)

def adjoint_system(state, mat, control, dt, bc, d_track, cache=None, order=4,
                   barrier_speed_sq=None, barrier_velocity=None):
    """
    Assemble the standalone adjoint system in (u_adj, p_adj).

    d_track : pair of FieldCoefficients
        displacement entering the tracking source dt * (d_track - d_g);
        pass the previous displacement to mirror the monolithic step, or
        the updated one for exact gradients of the one-step objective.
    barrier_velocity : pair of FieldCoefficients, optional
        solid velocity entering the barrier source (the monolithic step
        couples the barrier to the newly solved velocity); defaults to
        the state velocity.
    """
    cache = cache if cache is not None else {}
    V, Q, Vs = state.V, state.Q, state.Vs
    bg_spaces = [V, V, Q]
    s_spaces = [Vs, Vs]
    layout = BlockLayout(bg_spaces)
    s_layout = BlockLayout(s_spaces)
    if "locator" not in cache:
        cache["locator"] = PointLocator(state.mesh)
    locator = cache["locator"]
    t_new = state.t + dt

    bg_terms = [
        MatrixTerm("mass", mat.rho_f / dt, (0, 1), (0, 1)),
        MatrixTerm("diffusion_DD", mat.mu_f / 2.0, (0, 1), (0, 1)),
        MatrixTerm("adjoint_convection_frozen", mat.rho_f, (0, 1), (0, 1),
                   frozen={"w": (state.ux, state.uy)}),
        MatrixTerm("pressure_gradient", -1.0, (2,), (0, 1)),
        MatrixTerm("divergence", -1.0, (0, 1), (2,)),
    ]
    K = assemble_matrix(bg_spaces, bg_spaces, bg_terms, order=order)

    d_pair = (state.dx, state.dy)
    Ks = assemble_matrix(s_spaces, s_spaces,
                         _solid_matrix_terms(mat, dt, d_pair, (0, 1), (0, 1),
                                             adjoint=True), order=order)

    gx, gy = _objective_displacement(control, state.material_coords, t_new, Vs)
    track = (FieldCoefficients(Vs, d_track[0].values - gx.values),
             FieldCoefficients(Vs, d_track[1].values - gy.values))
    gs_terms = [VectorTerm("load_mass", -dt, (0, 1), track)]
    if control.lam > 0.0:
        u_c = control.bound_at(t_new)
        if barrier_speed_sq is None:
            barrier_speed_sq = l2_norm(state.usx, state.usy, order=order) ** 2
        coeff = 2.0 * control.lam / (barrier_speed_sq - u_c ** 2) ** 2
        if barrier_velocity is None:
            barrier_velocity = (state.usx, state.usy)
        gs_terms.append(VectorTerm("load_mass", -coeff, (0, 1),
                                   tuple(barrier_velocity)))
    gs = assemble_vector(s_spaces, gs_terms, order=order)

    g = np.zeros(layout.total)
    p0 = build_interpolation(V, Vs, locator)
    pmix = mixed_interpolation(p0, layout, s_layout, {0: 0, 1: 1})
    A, b = compose_system(K, Ks, pmix, g, gs)
    return A, b, layout, p0


def oscillation_stats(t, y):
    """
    Period and amplitude of a sampled oscillation.

    The series is detrended by its mean over the window; the period is
    the mean gap between successive upward zero crossings (linearly
    interpolated), the amplitude is half the peak-to-peak range.

    Returns (period, amplitude); period is nan with fewer than two
    upward crossings.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    y0 = y - y.mean()
    up = np.nonzero((y0[:-1] < 0.0) & (y0[1:] >= 0.0))[0]
    amplitude = 0.5 * (y.max() - y.min())
    if len(up) < 2:
        return float("nan"), amplitude
    frac = -y0[up] / (y0[up + 1] - y0[up])
    crossings = t[up] + frac * (t[up + 1] - t[up])
    period = float(np.diff(crossings).mean())
    return period, amplitude


# ---------------------------------------------------------------------------
# checkpointing

_CKPT_VERSION = 1


def save_checkpoint(path, state):
    """Write a lossless binary dump of a coupled state."""
    np.savez(
        path,
        version=np.int64(_CKPT_VERSION),
        t=np.float64(state.t),
        tip=state.tip,
        bg_vertices=state.mesh.vertices,
        bg_triangles=state.mesh.triangles,
        bg_bedges=state.mesh.boundary_edges,
        bg_blabels=state.mesh.boundary_labels,
        s_vertices=state.solid_mesh.vertices,
        s_triangles=state.solid_mesh.triangles,
        s_bedges=state.solid_mesh.boundary_edges,
        s_blabels=state.solid_mesh.boundary_labels,
        material_coords=state.material_coords,
        ux=state.ux.values, uy=state.uy.values, p=state.p.values,
        usx=state.usx.values, usy=state.usy.values,
        dx=state.dx.values, dy=state.dy.values,
    )


def load_checkpoint(path):
    """Rebuild the coupled state saved by `save_checkpoint`."""
    from .mesh import Mesh

    with np.load(path) as data:
        if int(data["version"]) != _CKPT_VERSION:
            raise ValueError("unsupported checkpoint version %d"
                             % int(data["version"]))
        mesh = Mesh(data["bg_vertices"], data["bg_triangles"],
                    data["bg_bedges"], data["bg_blabels"])
        solid = Mesh(data["s_vertices"], data["s_triangles"],
                     data["s_bedges"], data["s_blabels"])
        state = make_fsi_state(mesh, solid, t=float(data["t"]),
                               tip=data["tip"])
        state.material_coords = data["material_coords"]
        for name in ("ux", "uy", "p", "usx", "usy", "dx", "dy"):
            getattr(state, name).values[:] = data[name]
    return state
