# -*- coding: utf-8 -*-

"""
End-to-end acceptance runs of every benchmark, one test per criterion.

Each test prints a one-line PASS summary with the measured numbers (run
pytest with -s to see them).  Criteria that need hours at the reference
resolution run desk-scale variants by default, as noted per test;
setting FSICTRL_ACCEPTANCE=full switches to the reference resolution
and windows.  FSICTRL_ACCEPTANCE=skip skips the long-running criteria
and keeps only the seconds-scale verification suites.
"""

import os

import numpy as np
import pytest

import fsictrl as fc
from fsictrl.assembly import MatrixTerm, apply_dirichlet, assemble_matrix
from fsictrl.config import preset_config
from fsictrl.fespace import FieldCoefficients
from fsictrl.linalg import LUSolver
from fsictrl.solvers import (AX, AY, PA, PP, UX, UY, _constraints,
                             adjoint_system, control_system, forward_system,
                             oscillation_stats)

MODE = os.environ.get("FSICTRL_ACCEPTANCE", "desk")
FULL = MODE == "full"
HEAVY = pytest.mark.skipif(MODE == "skip",
                           reason="FSICTRL_ACCEPTANCE=skip")


def _report(name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print("\n[acceptance] %-28s %s  (%s)" % (name, status, detail))
    assert ok, "%s: %s" % (name, detail)


def _run_loop(state, stepper, nsteps, watch=None):
    reports = []
    for _ in range(nsteps):
        state, rep = stepper(state)
        reports.append(rep)
        if watch is not None and watch(rep):
            break
    return state, reports


# ---------------------------------------------------------------------------
# criterion 1: cavity velocity tracking below 1e-3 at t=2

@HEAVY
def test_criterion_1_cavity_tracking():
    """Unit square at the reference resolution, dt=0.01, alpha=1e-10."""
    cfg = preset_config("cavity-flow")
    bg, _ = cfg.build_meshes()
    bc = cfg.build_bc()
    ctrl = cfg.build_control()
    state = fc.make_flow_state(bg)
    cache = {}
    state, reports = _run_loop(
        state, lambda s: fc.step_flow_control(
            s, cfg.materials, ctrl.alpha, ctrl.d_g, cfg.dt, bc, cache=cache),
        nsteps=200)
    err = reports[-1].tracking_rel_err
    _report("1 cavity tracking", err < 1e-3,
            "rel err %.3e at t=%.2f (bound 1e-3)" % (err, reports[-1].t))


@HEAVY
def test_criterion_2_alpha_monotonicity():
    """Tracking error at t=1 strictly increases with alpha."""
    cfg = preset_config("cavity-flow")
    bg, _ = cfg.build_meshes()
    bc = cfg.build_bc()
    errs = {}
    for alpha in (1e-10, 1e-8, 1e-6):
        state = fc.make_flow_state(bg)
        cache = {}
        state, reports = _run_loop(
            state, lambda s: fc.step_flow_control(
                s, cfg.materials, alpha, fc.cavity_objective, cfg.dt, bc,
                cache=cache),
            nsteps=100)
        errs[alpha] = reports[-1].tracking_rel_err
    ok = errs[1e-10] < errs[1e-8] < errs[1e-6]
    _report("2 alpha monotonicity", ok,
            "err(1e-10)=%.3e < err(1e-8)=%.3e < err(1e-6)=%.3e"
            % (errs[1e-10], errs[1e-8], errs[1e-6]))


# ---------------------------------------------------------------------------
# criteria 3 and 4: the oscillating leaflet and its suppression

def _leaflet_cfg(name):
    overrides = []
    if not FULL:
        overrides = ["geometry.background=asset:leaflet_bg_coarse",
                     "geometry.solid=asset:leaflet_solid_coarse"]
    return preset_config(name, overrides)


@pytest.fixture(scope="module")
def leaflet_forward(tmp_path_factory):
    """Forward run to t=4 with a checkpoint at t=3 (shared by 3 and 4)."""
    cfg = _leaflet_cfg("leaflet")
    bg, solid = cfg.build_meshes()
    bc = cfg.build_bc()
    state = fc.make_fsi_state(bg, solid, tip=cfg.tip)
    cache = {}
    reports = []
    ck = tmp_path_factory.mktemp("leaflet") / "t3.npz"
    nsteps = int(round(4.0 / cfg.dt))
    for _ in range(nsteps):
        state, rep = fc.step_forward(state, cfg.materials, cfg.dt, bc,
                                     cache=cache)
        reports.append(rep)
        if abs(state.t - 3.0) < cfg.dt / 2 and not ck.exists():
            fc.save_checkpoint(ck, state)
    t = np.array([r.t for r in reports])
    tip = np.array([r.tip_y for r in reports])
    return {"cfg": cfg, "t": t, "tip_y": tip, "checkpoint": ck}


@HEAVY
def test_criterion_3_leaflet_oscillation(leaflet_forward):
    """
    Tip oscillation of the uncontrolled leaflet.

    Reference values: period 0.530, amplitude 0.03.  The default run
    uses the half-resolution meshes (the CI gate: period within 10%);
    FSICTRL_ACCEPTANCE=full checks period within 5% and amplitude
    within 15% at the reference resolution.
    """
    t, tip = leaflet_forward["t"], leaflet_forward["tip_y"]
    sel = (t >= 1.5) & (t <= 3.0)
    period, amplitude = oscillation_stats(t[sel], tip[sel])
    if FULL:
        ok = (abs(period - 0.530) / 0.530 < 0.05
              and abs(amplitude - 0.03) / 0.03 < 0.15)
        detail = ("period %.4f (0.530 +-5%%), amplitude %.4f (0.03 +-15%%)"
                  % (period, amplitude))
    else:
        ok = abs(period - 0.530) / 0.530 < 0.10
        detail = ("coarse gate: period %.4f (0.530 +-10%%), amplitude %.4f"
                  % (period, amplitude))
    _report("3 leaflet oscillation", ok, detail)


@HEAVY
def test_criterion_4_leaflet_control(leaflet_forward):
    """
    Suppression from the t=3 checkpoint with alpha=1e-17: controlled tip
    amplitude over [3.5, 4] must be 50 +- 15 percentage points of the
    uncontrolled one; alpha=1e-18 must destabilise (divergence or
    non-decaying force growth).
    """
    cfg = _leaflet_cfg("leaflet-control")
    bc = cfg.build_bc()
    sel = ((leaflet_forward["t"] >= 3.5) & (leaflet_forward["t"] <= 4.0))
    _, amp_un = oscillation_stats(leaflet_forward["t"][sel],
                                  leaflet_forward["tip_y"][sel])

    ctrl = cfg.build_control()
    state = fc.load_checkpoint(leaflet_forward["checkpoint"])
    cache = {}
    reports = []
    nsteps = int(round(1.0 / cfg.dt))
    for _ in range(nsteps):
        state, rep = fc.step_control(state, cfg.materials, ctrl, cfg.dt, bc,
                                     cache=cache)
        reports.append(rep)
    t = np.array([r.t for r in reports])
    tip = np.array([r.tip_y for r in reports])
    win = (t >= 3.5) & (t <= 4.0)
    _, amp_ctrl = oscillation_stats(t[win], tip[win])
    ratio = amp_ctrl / amp_un
    ok1 = 0.35 <= ratio <= 0.65
    _report("4a leaflet suppression", ok1,
            "controlled/uncontrolled amplitude %.3f (want 0.50 +- 0.15)"
            % ratio)

    # stability probe: one order of magnitude harder regularisation
    ctrl18 = fc.ControlSpec(alpha=1e-18, t_start=3.0, t_end=4.0)
    state = fc.load_checkpoint(leaflet_forward["checkpoint"])
    cache = {}
    forces = []
    diverged = False
    try:
        for _ in range(int(round(0.6 / cfg.dt))):
            state, rep = fc.step_control(state, cfg.materials, ctrl18,
                                         cfg.dt, bc, cache=cache)
            forces.append(rep.force_l2)
            if not np.isfinite(rep.force_l2):
                diverged = True
                break
    except (fc.LinearSolveError, fc.SingularMatrixError,
            fc.InvertedElementError, fc.CouplingError):
        diverged = True
    if diverged:
        ok2, detail = True, "alpha=1e-18 diverged"
    else:
        f = np.array(forces)
        skip = 50   # discard the activation spike
        third = (len(f) - skip) // 3
        early = f[skip:skip + third].max()
        late = f[-third:].max()
        ok2 = late > early
        detail = ("alpha=1e-18 force growth: early peak %.3e -> late peak "
                  "%.3e" % (early, late))
    _report("4b leaflet instability", ok2, detail)


# ---------------------------------------------------------------------------
# criteria 5-7: the disc in the lid-driven cavity

DISC_DT = 0.0025


@pytest.fixture(scope="module")
def disc_forward():
    """Forward run of the disc benchmark with states at t=2, 4, 5, 6."""
    cfg = preset_config("disc-pullback", ["dt=%r" % DISC_DT])
    bg, solid = cfg.build_meshes()
    bc = cfg.build_bc()
    state = fc.make_fsi_state(bg, solid, tip=(0.8, 0.5))
    cache = {}
    keep = {}
    errs = {}
    nsteps = int(round(6.0 / cfg.dt))
    for _ in range(nsteps):
        state, rep = fc.step_forward(state, cfg.materials, cfg.dt, bc,
                                     cache=cache)
        for tt in (2.0, 4.0, 5.0, 6.0):
            if tt not in keep and state.t >= tt - 1e-9:
                keep[tt] = state
                errs[tt] = np.sqrt(2.0 * rep.J_track)
    return {"cfg": cfg, "bc": bc, "states": keep, "errors": errs}


@HEAVY
def test_criterion_5_disc_pullback(disc_forward):
    """
    Zero-displacement control from t in {2, 5, 6} at alpha=2.5e-7: the
    tracking error must fall below 10% of its activation value within
    two time units of each activation.
    """
    cfg, bc = disc_forward["cfg"], disc_forward["bc"]
    results = []
    for t0 in (2.0, 5.0, 6.0):
        state = disc_forward["states"][t0]
        start_err = disc_forward["errors"][t0]
        ctrl = fc.ControlSpec(alpha=2.5e-7, t_start=t0)
        cache = {}
        reached = None
        for _ in range(int(round(2.0 / cfg.dt))):
            state, rep = fc.step_control(state, cfg.materials, ctrl, cfg.dt,
                                         bc, cache=cache)
            if np.sqrt(2.0 * rep.J_track) < 0.10 * start_err:
                reached = rep.t - t0
                break
        results.append((t0, start_err, reached))
    ok = all(r[2] is not None for r in results)
    detail = "; ".join(
        "t0=%g: err0=%.4f -> <10%% after %s" %
        (t0, e0, ("%.2f units" % dt_) if dt_ is not None else "never")
        for t0, e0, dt_ in results)
    _report("5 disc pull-back", ok, detail)


@HEAVY
def test_criterion_6_disc_speed_limit(disc_forward):
    """
    Barrier-bounded control from t=4 (alpha=5e-7, u_c=0.08, preset
    lambda): the solid speed stays below 1.05 * u_c for every step of
    the two-unit window.
    """
    cfg, bc = disc_forward["cfg"], disc_forward["bc"]
    preset = preset_config("disc-speed-limit")
    lam = preset.build_control().lam
    state = disc_forward["states"][4.0]
    ctrl = fc.ControlSpec(alpha=5e-7, lam=lam, u_c=0.08, t_start=4.0)
    cache = {}
    speeds = []
    for _ in range(int(round(2.0 / cfg.dt))):
        state, rep = fc.step_control(state, cfg.materials, ctrl, cfg.dt, bc,
                                     cache=cache)
        speeds.append(rep.solid_speed)
    smax = max(speeds)
    ok = smax <= 0.08 * 1.05
    _report("6 disc speed limit", ok,
            "max solid speed %.5f (bound 0.084), lambda=%g" % (smax, lam))


@HEAVY
def test_criterion_7_disc_rotation():
    """
    Rotation control (omega=-pi/4, dt=1e-3) for two time units: the disc
    center stays within 0.05 of (0.6, 0.5) and the angular velocity
    estimated from the solid velocity field is within 10% of omega.

    The default run uses the forward-benchmark meshes; the reference
    (finer) preset runs under FSICTRL_ACCEPTANCE=full.
    """
    overrides = [] if FULL else ["geometry.n=35", "geometry.segments=60"]
    cfg = preset_config("disc-rotate", overrides)
    bg, solid = cfg.build_meshes()
    bc = cfg.build_bc()
    ctrl = cfg.build_control()
    state = fc.make_fsi_state(bg, solid, tip=(0.8, 0.5))
    cache = {}
    nsteps = int(round(2.0 / cfg.dt))
    for _ in range(nsteps):
        state, rep = fc.step_control(state, cfg.materials, ctrl, cfg.dt, bc,
                                     cache=cache)

    areas = state.solid_mesh.areas()
    tri = state.solid_mesh.triangles
    cents = state.solid_mesh.vertices[tri].mean(axis=1)
    center = (areas[:, None] * cents).sum(axis=0) / areas.sum()
    drift = float(np.hypot(center[0] - 0.6, center[1] - 0.5))

    # angular velocity: angular momentum over moment of inertia about
    # the current center, by quadrature on the solid mesh
    ed = state.Vs.element_data(4)
    ux = state.usx.at_quadrature(4)
    uy = state.usy.at_quadrature(4)
    rx = ed.xq[..., 0] - center[0]
    ry = ed.xq[..., 1] - center[1]
    lz = float(np.einsum("eq,eq->", rx * uy - ry * ux, ed.warea))
    inertia = float(np.einsum("eq,eq->", rx * rx + ry * ry, ed.warea))
    omega_est = lz / inertia
    omega = -np.pi / 4

    ok = drift < 0.05 and abs(omega_est - omega) / abs(omega) < 0.10
    _report("7 disc rotation", ok,
            "drift %.4f (<0.05), omega %.4f vs %.4f (+-10%%)"
            % (drift, omega_est, omega))


# ---------------------------------------------------------------------------
# criterion 8: optimality-system verification (always on, seconds)

def _kkt_instance():
    bg = fc.generate_unit_square(6)
    solid = fc.generate_disc((0.55, 0.45), 0.2, 12)
    state = fc.make_fsi_state(bg, solid)
    rngx = state.Vs.dof_coords
    state.dx.values[:] = 0.03 * np.sin(3 * rngx[:, 0])
    state.dy.values[:] = 0.02 * (rngx[:, 1] - 0.45)
    state.usx.values[:] = 0.01 * rngx[:, 1]
    state.usy.values[:] = -0.01 * rngx[:, 0]
    Xb = state.V.dof_coords
    state.ux.values[:] = 0.05 * np.sin(2 * Xb[:, 1])
    state.uy.values[:] = 0.05 * np.cos(Xb[:, 0])
    mat = fc.Materials(rho_f=1.0, rho_s=1.7, mu_f=0.05, c1=2.0)
    bc = fc.BoundaryConditions(
        dirichlet=((1, 0.0, 0.0), (2, 0.0, 0.0), (4, 0.0, 0.0),
                   (3, 1.0, 0.0)), pin_pressure=True)
    ctrl = fc.ControlSpec(alpha=1e-5, lam=1e-7, u_c=1.0,
                          d_g=lambda X, Y, t: (0.01 * np.sin(X), 0.01 * Y))
    return state, mat, bc, ctrl


def test_criterion_8_kkt_suite():
    state, mat, bc, ctrl = _kkt_instance()
    dt = 0.02
    A, b, layout, p0, bss = control_system(state, mat, ctrl, dt, bc)
    dofs, values = _constraints(layout, bc, (UX, UY), adj_slots=(AX, AY),
                                pressure_slots=(PP, PA))
    apply_dirichlet(A, b, dofs, values)
    z, res = LUSolver(A).solve(b)
    zu = [layout.extract(z, s) for s in range(6)]

    # (a) monolithic solution satisfies the standalone primal and adjoint
    fx = FieldCoefficients(state.Vs, (p0.matrix @ zu[AX]) / ctrl.alpha)
    fy = FieldCoefficients(state.Vs, (p0.matrix @ zu[AY]) / ctrl.alpha)
    Ap, bp, lp, _ = forward_system(state, mat, dt, bc, force=(fx, fy))
    dofs_p, vals_p = _constraints(lp, bc, (0, 1), pressure_slots=(2,))
    apply_dirichlet(Ap, bp, dofs_p, vals_p)
    zp = np.concatenate([zu[UX], zu[UY], zu[PP]])
    rp = np.linalg.norm(Ap.mat @ zp - bp) / np.linalg.norm(bp)

    u_new = (FieldCoefficients(state.Vs, p0.matrix @ zu[UX]),
             FieldCoefficients(state.Vs, p0.matrix @ zu[UY]))
    Aa, ba, la, _ = adjoint_system(state, mat, ctrl, dt, bc,
                                   d_track=(state.dx, state.dy),
                                   barrier_speed_sq=bss,
                                   barrier_velocity=u_new)
    apply_dirichlet(Aa, ba, dofs_p, np.zeros_like(vals_p))
    za = np.concatenate([zu[AX], zu[AY], zu[PA]])
    ra = np.linalg.norm(Aa.mat @ za - ba) / np.linalg.norm(ba)
    ok_a = rp <= 1e-8 and ra <= 1e-8
    _report("8a KKT residual split", ok_a,
            "primal %.2e, adjoint %.2e (bound 1e-8)" % (rp, ra))

    # (b) finite-difference gradient: delegated to the dedicated unit
    # test on the 2-element instance; re-run it here for the record
    from test_solvers import test_adjoint_gradient_matches_finite_differences
    test_adjoint_gradient_matches_finite_differences()
    _report("8b adjoint gradient", True, "5 directions at 1e-4 relative")

    # (c) optimality identity alpha*f = u_adj in the solid space
    Ms = assemble_matrix([state.Vs] * 2, [state.Vs] * 2,
                         [MatrixTerm("mass", 1.0, (0, 1), (0, 1))])
    lhs = ctrl.alpha * (Ms.mat @ np.concatenate([fx.values, fy.values]))
    rhs = Ms.mat @ np.concatenate([p0.matrix @ zu[AX], p0.matrix @ zu[AY]])
    dev = np.abs(lhs - rhs).max() / max(np.abs(rhs).max(), 1e-300)
    ok_c = dev <= 1e-9
    _report("8c optimality identity", ok_c, "max deviation %.2e" % dev)

    # (d) discrete divergence against the pressure test space
    B = assemble_matrix([state.V, state.V], [state.Q],
                        [MatrixTerm("divergence", -1.0, (0, 1), (0,))])
    u = np.concatenate([zu[UX], zu[UY]])
    div = np.delete(B @ u, 0)   # drop the pinned pressure row
    ok_d = np.linalg.norm(div) <= 1e-8 * max(np.linalg.norm(u), 1.0)
    _report("8d discrete divergence", ok_d,
            "||B u|| = %.2e" % np.linalg.norm(div))

    # (e) interpolation partition of unity and linear reproduction
    rowsum = np.asarray(p0.matrix.mat.sum(axis=1)).ravel()
    lin = state.V.dof_coords[:, 0] - 2.0 * state.V.dof_coords[:, 1]
    want = state.Vs.dof_coords[:, 0] - 2.0 * state.Vs.dof_coords[:, 1]
    dev_e = max(np.abs(rowsum - 1.0).max(),
                np.abs(p0.matrix @ lin - want).max())
    ok_e = dev_e <= 1e-12
    _report("8e interpolation identities", ok_e, "max deviation %.2e" % dev_e)


# ---------------------------------------------------------------------------
# criterion 9: sparse kernels against dense oracles

def test_criterion_9_dense_oracles():
    import scipy.sparse as sp
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(25):
        nb = rng.integers(5, 21)
        ns = rng.integers(3, nb + 1)
        K = rng.standard_normal((nb, nb)) * (rng.random((nb, nb)) < 0.4)
        Ks = rng.standard_normal((ns, ns)) * (rng.random((ns, ns)) < 0.5)
        P = rng.standard_normal((ns, nb)) * (rng.random((ns, nb)) < 0.4)
        g = rng.standard_normal(nb)
        gs = rng.standard_normal(ns)
        A, b = fc.compose_system(fc.SparseMatrix(sp.csr_matrix(K)),
                                 fc.SparseMatrix(sp.csr_matrix(Ks)),
                                 fc.SparseMatrix(sp.csr_matrix(P)), g, gs)
        dens = K + P.T @ Ks @ P
        scale = max(1.0, np.abs(dens).max())
        worst = max(worst, np.abs(A.toarray() - dens).max() / scale)
        worst = max(worst, np.abs(b - (g + P.T @ gs)).max())
        # spadd / transpose against dense arithmetic
        S = fc.spadd(fc.SparseMatrix(sp.csr_matrix(K)),
                     fc.sptranspose(fc.SparseMatrix(sp.csr_matrix(K))))
        worst = max(worst, np.abs(S.toarray() - (K + K.T)).max() / scale)
    ok = worst < 1e-13
    _report("9 dense-oracle kernels", ok, "worst deviation %.2e" % worst)
