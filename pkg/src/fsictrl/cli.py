# -*- coding: utf-8 -*-

"""
Command line interface.

    fsictrl run <config.json>
    fsictrl run --preset <name> [--override key=value ...]
    fsictrl checkpoint save --preset <name> --at T --out state.npz
    fsictrl checkpoint load state.npz

`run` executes one experiment, writing timeseries.csv (every step) and
VTK snapshots (at the configured cadence) into the output directory;
FSICTRL_OUTDIR overrides the configured directory.
"""

import argparse
import sys

from .config import (ConfigError, PRESETS, load_config, preset_config)
from .runner import run

__all__ = ["main"]


def _build_parser():
    ap = argparse.ArgumentParser(prog="fsictrl")
    sub = ap.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run an experiment")
    runp.add_argument("config", nargs="?", help="JSON configuration file")
    runp.add_argument("--preset", choices=PRESETS)
    runp.add_argument("--override", action="append", default=[],
                      metavar="KEY=VALUE",
                      help="override a (dotted) config key")
    runp.add_argument("--from-checkpoint", metavar="PATH",
                      help="resume from a saved state")
    runp.add_argument("--quiet", action="store_true")

    ckp = sub.add_parser("checkpoint", help="save or inspect states")
    cksub = ckp.add_subparsers(dest="ck_command", required=True)
    save = cksub.add_parser("save", help="run a preset forward and save")
    save.add_argument("--preset", required=True, choices=PRESETS)
    save.add_argument("--at", type=float, required=True,
                      help="time at which to save")
    save.add_argument("--out", required=True)
    save.add_argument("--override", action="append", default=[])
    load = cksub.add_parser("load", help="print a checkpoint summary")
    load.add_argument("path")
    return ap


def _progress(quiet):
    if quiet:
        return None
    state = {"n": 0}

    def cb(rep):
        state["n"] += 1
        if state["n"] % 50 == 0:
            print("  t=%8.4f  J_track=%.4e  ||f||=%.4e  err=%.4e"
                  % (rep.t, rep.J_track, rep.force_l2, rep.tracking_rel_err))

    return cb


def main(argv=None):
    args = _build_parser().parse_args(argv)

    if args.command == "run":
        try:
            if args.preset:
                cfg = preset_config(args.preset, args.override)
            elif args.config:
                cfg = load_config(args.config)
            else:
                print("run needs a config file or --preset")
                return 2
            if args.from_checkpoint:
                cfg.load_checkpoint = args.from_checkpoint
        except ConfigError as exc:
            print("configuration error: %s" % exc)
            return 2
        return run(cfg, progress=_progress(args.quiet))

    if args.command == "checkpoint":
        if args.ck_command == "save":
            try:
                overrides = list(args.override)
                overrides += ["t_end=%r" % args.at,
                              "checkpoint.save_at=%r" % args.at,
                              "checkpoint.path=%s" % args.out]
                cfg = preset_config(args.preset, overrides)
                # saving is the whole point: run forward regardless of the
                # preset's control section
                cfg.experiment = "fsi-forward"
                cfg.control = None
            except ConfigError as exc:
                print("configuration error: %s" % exc)
                return 2
            return run(cfg)
        if args.ck_command == "load":
            from .solvers import load_checkpoint
            try:
                state = load_checkpoint(args.path)
            except (OSError, ValueError) as exc:
                print("cannot load checkpoint: %s" % exc)
                return 4
            print("checkpoint %s" % args.path)
            print("  t = %.6g" % state.t)
            print("  background: %d vertices, %d triangles"
                  % (state.mesh.num_vertices, state.mesh.num_triangles))
            print("  solid: %d vertices, %d triangles"
                  % (state.solid_mesh.num_vertices,
                     state.solid_mesh.num_triangles))
            print("  tip = (%.6g, %.6g)" % (state.tip[0], state.tip[1]))
            return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
