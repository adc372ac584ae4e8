"""Penalty and viscosity sweeps on the orbiting disk.

The disk is carried around the box center, so its boundary has a normal
velocity the penalty has to enforce.  The eps sweep shows the boundary flux
defect J shrinking roughly like eps; the mu sweep shows the Brinkman
velocity approaching the Darcy one while the flow energy stays put.

    python demos/orbit_sweeps.py [N]
"""
import sys

from tumorflow.config import orbit_config
from tumorflow.verify import eps_sweep, mu_sweep

N = int(sys.argv[1]) if len(sys.argv) > 1 else 64
cfg = orbit_config(N)
print(eps_sweep(cfg, [1e-1, 1e-2, 1e-3, 1e-4]).summary())
print()
print(mu_sweep(cfg, [1e-1, 1e-2, 1e-3, 1e-4, 0.0]).summary())
