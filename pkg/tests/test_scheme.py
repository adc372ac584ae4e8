import math

import numpy as np
import pytest

from tumorflow.config import default_config, growth_config, orbit_config
from tumorflow.core import ModelParams, integrate_scalar, replace
from tumorflow.geometry import DomainMotion, geometry_masks
from tumorflow.scheme import (SimulationError, State, collect_diagnostics, drift, initial_state,
                              max_drift, run_simulation)


def _zero_initial(cfg):
    grid = cfg.make_grid()
    s = initial_state(cfg, grid)
    z = grid.zeros()
    return State(0.0, z, z.copy(), z.copy(), z.copy(), z.copy(), grid.zero_faces(), z.copy(),
                 s.phi)


def test_zero_trajectory():
    cfg = replace(default_config(32), motion=DomainMotion(),
                  time=replace(default_config(32).time, T=0.1, snapshot_dt=0.05))
    res = run_simulation(cfg, _zero_initial(cfg))
    for s in res.snapshots:
        for f in (s.P, s.Q, s.D, s.C, s.W, s.sigma):
            assert np.all(f == 0)
        assert all(np.all(c == 0) for c in s.v)
    assert all(r.flux_defect == 0 and r.drift == 0 for r in res.diagnostics)


def test_zero_state_diagnostics():
    cfg = default_config(32)
    g = cfg.make_grid()
    s = _zero_initial(cfg)
    chi, dg = geometry_masks(g, s.phi, cfg.numerics.delta_length(g))
    rec = collect_diagnostics(g, s, chi, dg, g.zero_faces(), cfg)
    assert rec.volume > 0
    assert rec.drift == rec.flux_defect == rec.energy_flow == rec.energy_C == rec.energy_W == 0
    assert rec.finite()


def test_exact_mixture_has_zero_drift():
    cfg = default_config(32)
    g = cfg.make_grid()
    s = initial_state(cfg, g)
    full = np.full(g.shape, 1 / 3)
    s = State(0.0, full, full, full, s.C, s.W, s.v, s.sigma, s.phi)
    assert drift(g, s, 1.0, cfg.numerics.delta_length(g)) == 0.0


def test_concentration_energy_matches_quadrature():
    cfg = default_config(32)
    g = cfg.make_grid()
    s = initial_state(cfg, g)
    chi, dg = geometry_masks(g, s.phi, cfg.numerics.delta_length(g))
    rec = collect_diagnostics(g, s, chi, dg, g.zero_faces(), cfg)
    by_hand = 0.5 * np.sum(s.C**2) * g.h**2
    assert rec.energy_C == pytest.approx(by_hand, rel=1e-13)


def test_default_run_monitors(default_run):
    res = default_run
    assert res.passed, res.monitors
    assert math.isclose(res.state.t, 0.5)
    assert len(res.snapshots) == 17
    assert [round(s.t, 12) for s in res.snapshots] == [round(0.03125 * k, 12) for k in range(17)]
    assert max_drift(res) <= 1e-6


def test_default_run_is_static(default_run):
    d = default_run.diagnostics
    assert abs(d[-1].volume - d[0].volume) <= 1e-3 * d[0].volume


def test_outside_fields_are_zero(default_run):
    s = default_run.state
    cfg = default_run.config
    g = cfg.make_grid()
    chi, _ = geometry_masks(g, s.phi, cfg.numerics.delta_length(g))
    off = chi < 1e-3
    for f in (s.P, s.Q, s.D, s.C, s.W):
        assert np.all(f[off] == 0)


def test_nutrient_energy_nonincreasing_without_motion():
    cfg = replace(default_config(32), motion=DomainMotion())
    res = run_simulation(cfg, keep_snapshots=False)
    e = [r.energy_C for r in res.diagnostics]
    assert all(b <= a + 1e-14 for a, b in zip(e, e[1:]))


def test_determinism():
    cfg = orbit_config(32)
    cfg = replace(cfg, time=replace(cfg.time, T=0.1))
    a = run_simulation(cfg)
    b = run_simulation(cfg)
    assert [r.row() for r in a.diagnostics] == [r.row() for r in b.diagnostics]
    for s, t in zip(a.snapshots, b.snapshots):
        for k in s.scalars():
            assert np.array_equal(s.scalars()[k], t.scalars()[k])


def test_growth_reports_compatibility_defect():
    cfg = growth_config(32)
    cfg = replace(cfg, time=replace(cfg.time, T=0.05, snapshot_dt=0.0))
    res = run_simulation(cfg)
    assert "drift" not in res.monitors
    assert all(r.compat_defect != 0 for r in res.diagnostics)


def test_failure_carries_step_and_diagnostics():
    cfg = orbit_config(32)
    s = initial_state(cfg, cfg.make_grid())
    s.C = 2.0 * s.C / s.C.max()  # above C_bar: the kinetics refuse it
    with pytest.raises(SimulationError, match="AdmissibilityError") as err:
        run_simulation(cfg, s)
    assert err.value.step == 0 and len(err.value.diagnostics) == 1


@pytest.mark.slow
def test_refined_default_run(default_run):
    fine = run_simulation(default_config(128))
    assert fine.passed, fine.monitors
    # compare the mixture constraint over the same physical core
    depth = 3 * default_run.config.numerics.delta_length(default_run.config.make_grid())

    def core_drift(res):
        return max(float(np.max(np.abs((s.P + s.Q + s.D)[s.phi <= -depth] - 1.0)))
                   for s in res.snapshots)

    assert core_drift(fine) <= core_drift(default_run)
    d = fine.diagnostics
    assert abs(d[-1].volume - d[0].volume) <= 1e-3 * d[0].volume
    assert max(r.flux_defect for r in d) <= 10 * fine.config.numerics.eps
