# -*- coding: utf-8 -*-

"""
Experiment runner: drives the time loop of a configured run and owns all
file output (CSV log, VTK snapshots, checkpoints).
"""

import os
import time

import numpy as np

from . import solvers
from .config import ConfigError
from .io import CsvLog, write_solid_vtk, write_vtk

__all__ = ["run", "run_experiment", "RunResult"]


class RunResult:
    """In-memory outcome of a run: reports and the final state."""

    def __init__(self, reports, state):
        self.reports = reports
        self.state = state

    def series(self, name):
        return np.array([getattr(r, name) for r in self.reports])


def _out_dir(cfg):
    path = os.environ.get("FSICTRL_OUTDIR", cfg.output_dir)
    os.makedirs(path, exist_ok=True)
    return path


def run_experiment(cfg, log_path=None, progress=None):
    """
    Execute a configured run and return a RunResult.

    progress : callable(report) or None
        invoked after every step (used by the CLI for console output
        and by long tests for early assertions)
    """
    bc = cfg.build_bc()
    control = cfg.build_control()
    outdir = _out_dir(cfg)
    csv_path = log_path or os.path.join(outdir, "timeseries.csv")

    if cfg.experiment == "flow-control":
        bg, _ = cfg.build_meshes()
        state = solvers.make_flow_state(bg)
        u_g = control.d_g  # velocity objective of the reduced problem
        if u_g is None:
            raise ConfigError("flow-control requires an objective")
    else:
        if cfg.load_checkpoint:
            state = solvers.load_checkpoint(cfg.load_checkpoint)
        else:
            bg, solid = cfg.build_meshes()
            if solid is None:
                raise ConfigError("%s needs a solid mesh" % cfg.experiment)
            state = solvers.make_fsi_state(bg, solid, tip=cfg.tip)

    cache = {}
    reports = []
    nsteps = int(round((cfg.t_end - state.t) / cfg.dt))
    ck_saved = cfg.checkpoint_save_at is None
    with CsvLog(csv_path) as log:
        for step in range(1, nsteps + 1):
            if cfg.experiment == "flow-control":
                state, rep = solvers.step_flow_control(
                    state, cfg.materials, control.alpha, u_g, cfg.dt, bc,
                    cache=cache)
            else:
                controlled = (cfg.experiment == "fsi-control"
                              and control is not None
                              and control.active(state.t, cfg.dt))
                if controlled:
                    state, rep = solvers.step_control(
                        state, cfg.materials, control, cfg.dt, bc,
                        cache=cache)
                else:
                    state, rep = solvers.step_forward(
                        state, cfg.materials, cfg.dt, bc, cache=cache,
                        convection=cfg.convection, control=control)
            reports.append(rep)
            log.write(rep)
            if cfg.vtk_every and step % cfg.vtk_every == 0:
                _snapshot(outdir, step, cfg, state)
            if (not ck_saved and cfg.experiment != "flow-control"
                    and state.t >= cfg.checkpoint_save_at - 1e-12):
                path = os.path.join(outdir, cfg.checkpoint_path
                                    or "checkpoint.npz")
                solvers.save_checkpoint(path, state)
                ck_saved = True
            if progress is not None:
                progress(rep)
    return RunResult(reports, state)


def _snapshot(outdir, step, cfg, state):
    write_vtk(os.path.join(outdir, "fields_%06d.vtk" % step),
              state.mesh, state.ux, state.uy, state.p, adjoint=state.adjoint)
    if cfg.experiment != "flow-control":
        write_solid_vtk(os.path.join(outdir, "solid_%06d.vtk" % step),
                        state.solid_mesh, state.dx, state.dy,
                        state.usx, state.usy)


def run(cfg, progress=None):
    """
    CLI entry: run and summarise; exit status 0/2/3/4.

    2 = configuration error, 3 = numerical failure (with step time),
    4 = file output failure.
    """
    from .coupling import CouplingError
    from .linalg import LinearSolveError, SingularMatrixError
    from .mesh import InvertedElementError, MeshError
    from .solvers import BarrierInfeasibleError

    t0 = time.perf_counter()
    try:
        result = run_experiment(cfg, progress=progress)
    except ConfigError as exc:
        print("configuration error: %s" % exc)
        return 2
    except (BarrierInfeasibleError, CouplingError, InvertedElementError,
            LinearSolveError, MeshError, SingularMatrixError) as exc:
        print("numerical failure: %s" % exc)
        return 3
    except OSError as exc:
        print("output failure: %s" % exc)
        return 4
    wall = time.perf_counter() - t0
    last = result.reports[-1]
    fmax = max(r.force_l2 for r in result.reports)
    print("run %s finished: %d steps to t=%g in %.1fs" %
          (cfg.name, len(result.reports), last.t, wall))
    print("  final J_track=%.6e  tracking_rel_err=%.3e  max ||f||=%.6e"
          % (last.J_track, last.tracking_rel_err, fmax))
    return 0
