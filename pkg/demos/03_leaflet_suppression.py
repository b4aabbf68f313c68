#!/usr/bin/env python3
"""
Suppressing the leaflet oscillation with an activation force.

Starting from the t=3 checkpoint written by demo 02, a distributed
force on the leaflet (computed by the per-step optimality system with
zero objective displacement) damps the oscillation; the tip amplitude
drops to roughly half of the uncontrolled one within the first cycle.
The regularisation weight is aggressive (alpha = 1e-17): smaller values
reduce the objective further but eventually destabilise the scheme.

Expects out-leaflet/leaflet_t3.npz from demo 02 (pass --coarse here if
it was used there).
"""

import sys

from fsictrl.config import preset_config
from fsictrl.runner import run

overrides = ["output.dir=out-leaflet-control", "output.vtk_every=100",
             "checkpoint.load=out-leaflet/leaflet_t3.npz"]
if "--coarse" in sys.argv:
    overrides += ["geometry.background=asset:leaflet_bg_coarse",
                  "geometry.solid=asset:leaflet_solid_coarse"]
cfg = preset_config("leaflet-control", overrides)
raise SystemExit(run(cfg))
