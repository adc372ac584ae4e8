"""Run the static-disk scenario and print the monitor table.

The disk sits inside the rigid core of a swirl about its own center, so the
domain does not move while the box material around it rotates.  With the
birth and clearance rates off, every monitor, including the mixture
constraint, should pass.

    python demos/default_run.py [N]
"""
import sys
import time

from tumorflow.config import default_config
from tumorflow.scheme import max_drift, run_simulation

N = int(sys.argv[1]) if len(sys.argv) > 1 else 64
t0 = time.perf_counter()
res = run_simulation(default_config(N))
print(f"{N}x{N}: {res.state.step} steps to t = {res.state.t} in {time.perf_counter() - t0:.1f} s")
print(f"{'t':>8} {'drift':>10} {'volume':>10} {'J':>10} {'energy':>10} {'P max':>8} {'C max':>8}")
for r in res.diagnostics[::4]:
    print(f"{r.t:8.4f} {r.drift:10.2e} {r.volume:10.6f} {r.flux_defect:10.2e} "
          f"{r.energy_flow:10.4f} {r.ranges['P'][1]:8.4f} {r.ranges['C'][1]:8.4f}")
print(f"max drift {max_drift(res):.2e}")
for name, ok in res.monitors.items():
    print(f"  {'PASS' if ok else 'FAIL'} {name}")
