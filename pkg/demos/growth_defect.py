"""Births on: the mass production no longer integrates to zero.

An impermeable, volume-preserving domain cannot absorb net production, so
the flow solver removes the mean of the divergence source and reports it as
the compatibility defect.  The mixture constraint then drifts at about
dt * rho_f * defect per step; the drift monitor is skipped for this case.

    python demos/growth_defect.py
"""
from tumorflow.config import growth_config
from tumorflow.scheme import max_drift, run_simulation

res = run_simulation(growth_config(64), keep_snapshots=False)
print(f"{'t':>8} {'defect':>10} {'drift':>10}")
for r in res.diagnostics[::4]:
    print(f"{r.t:8.4f} {r.compat_defect:10.4f} {r.drift:10.2e}")
print(f"max drift {max_drift(res):.3e}; monitors: {res.monitors}")
