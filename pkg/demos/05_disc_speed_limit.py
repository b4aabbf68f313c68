#!/usr/bin/env python3
"""
Displacement tracking with a hard bound on the solid speed.

Same cavity and disc as demo 04, but the controller additionally keeps
the L2 norm of the solid velocity below u_c = 0.08 through a barrier
term.  The barrier is singular at the bound, so the speed approaches
the bound from below rather than the unconstrained optimum; too small a
barrier weight oscillates, too large a weight over-damps the tracking.
The preset uses the middle value of a three-point sweep.

Run time: ~25 minutes (control window t in [4, 6]).
"""

from fsictrl.config import preset_config
from fsictrl.runner import run

cfg = preset_config("disc-speed-limit", ["output.dir=out-speed-limit"])
raise SystemExit(run(cfg))
