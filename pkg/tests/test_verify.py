import numpy as np
import pytest

from tumorflow.config import default_config, orbit_config
from tumorflow.core import ModelParams, make_grid, replace
from tumorflow.geometry import DomainMotion, ball_levelset
from tumorflow.scheme import State
from tumorflow.verify import (IDENTITIES, StudyReport, SupportError, TestFunction, check_support,
                              eps_sweep, fit_slope, make_test_functions, mu_sweep,
                              weak_residuals)


def _zero_trajectory(g, n=17):
    phi = ball_levelset(g, (0.5, 0.5), 0.3)
    z = g.zeros()
    return [State(0.5 * k / (n - 1), z, z, z, z, z, g.zero_faces(), z, phi) for k in range(n)]


def test_count_zero_and_determinism():
    g = make_grid(2, 1.0, 32)
    traj = _zero_trajectory(g)
    assert make_test_functions(0, 0, traj, g, 1.5 * g.h) == []
    a = make_test_functions(4, 5, traj, g, 1.5 * g.h)
    b = make_test_functions(4, 5, traj, g, 1.5 * g.h)
    assert a == b and len(a) == 5
    assert a != make_test_functions(5, 5, traj, g, 1.5 * g.h)


def test_supports_stay_in_core(small_orbit_run):
    cfg = small_orbit_run.config
    g = cfg.make_grid()
    delta = cfg.numerics.delta_length(g)
    tfs = make_test_functions(2, 8, small_orbit_run.snapshots, g, delta, r_min=1.5 * g.h)
    for tf in tfs:
        sup = tf.support(g)
        for s in small_orbit_run.snapshots:
            assert np.all(s.phi[sup] <= -2 * delta)


def test_support_violation():
    g = make_grid(2, 1.0, 32)
    traj = _zero_trajectory(g)
    tf = TestFunction((0.5, 0.8), 0.1, 0.5, (1.0, 0.0), 0.5)
    with pytest.raises(SupportError):
        check_support(tf, g, traj, 1.5 * g.h)
    with pytest.raises(SupportError):
        make_test_functions(0, 3, traj, g, 1.5 * g.h, r_min=0.3)


def test_time_factor_vanishes_at_final_time():
    tf = TestFunction((0.5, 0.5), 0.1, 0.7, (1.0, 0.0), 2.0)
    assert tf.time_factor(2.0)[0] == 0.0
    assert tf.time_factor(0.0) == pytest.approx((1.0, (0.7 - 1.0) / 2.0))


def test_bump_derivatives():
    g = make_grid(2, 1.0, 256)
    tf = TestFunction((0.5, 0.5), 0.2, 0.0, (1.0, 0.0), 1.0)
    sp = tf.spatial(g)
    fd = np.gradient(sp["val"], g.h)
    for a in range(2):
        assert np.max(np.abs(fd[a] - sp["grad"][a])) < 1e-2 * np.max(np.abs(sp["grad"][a]))
    lap = sum(np.gradient(gr, g.h)[a] for a, gr in enumerate(sp["grad"]))
    assert np.max(np.abs(lap - sp["lap"])[2:-2, 2:-2]) < 2e-2 * np.max(np.abs(sp["lap"]))


@pytest.mark.parametrize("which", IDENTITIES)
def test_zero_trajectory_residuals(which):
    g = make_grid(2, 1.0, 32)
    traj = _zero_trajectory(g)
    tfs = make_test_functions(1, 4, traj, g, 1.5 * g.h)
    assert weak_residuals(g, traj, tfs, which, default_config(32)) == [0.0] * 4


def test_residual_preconditions():
    g = make_grid(2, 1.0, 32)
    traj = _zero_trajectory(g)
    tfs = make_test_functions(1, 1, traj, g, 1.5 * g.h)
    with pytest.raises(ValueError, match="snapshots"):
        weak_residuals(g, traj[:5], tfs, "darcy", default_config(32))
    with pytest.raises(ValueError, match="unknown identity"):
        weak_residuals(g, traj, tfs, "energy", default_config(32))


def test_darcy_identity_manufactured():
    # steady Darcy field v = -(K/mu_tilde) grad sigma held fixed in time
    g = make_grid(2, 1.0, 64)
    p = ModelParams(mu=0.0)
    x, y = g.centers()
    phi = ball_levelset(g, (0.5, 0.5), 0.4)
    xu, yu = g.face_centers(0)
    xv, yv = g.face_centers(1)
    k = 2 * np.pi
    sigma = np.cos(k * x) * np.cos(k * y)
    v = ((p.K / p.mu_tilde) * k * np.sin(k * xu) * np.cos(k * yu),
         (p.K / p.mu_tilde) * k * np.cos(k * xv) * np.sin(k * yv))
    z = g.zeros()
    traj = [State(0.5 * i / 16, z, z, z, z, z, v, sigma, phi) for i in range(17)]
    tfs = make_test_functions(3, 6, traj, g, 1.5 * g.h, r_min=0.1)
    res = weak_residuals(g, traj, tfs, "darcy", replace(default_config(64), model=p))
    # midpoint quadrature and face averaging are both O(h^2)
    assert max(res) <= 10 * (k * g.h) ** 2


def test_residuals_normalized_on_run(small_orbit_run):
    cfg = small_orbit_run.config
    g = cfg.make_grid()
    tfs = make_test_functions(0, 4, small_orbit_run.snapshots, g, cfg.numerics.delta_length(g),
                              r_min=1.5 * g.h)
    for which in IDENTITIES:
        res = weak_residuals(g, small_orbit_run.snapshots, tfs, which, cfg)
        assert all(np.isfinite(res)) and all(0 <= r <= 1 for r in res)


def test_fit_slope():
    assert fit_slope([1, 2, 4], [1, 4, 16])[0] == pytest.approx(2.0)
    assert np.isnan(fit_slope([1], [1])[0])


def test_report_csv_and_summary():
    rep = StudyReport("eps", [0.1, 0.01], {"J": [1e-2, 1e-3]}, {"J": (1.0, 0.0)}, {"ok": True})
    assert rep.to_csv().splitlines() == ["eps,J", "0.1,0.01", "0.01,0.001"]
    assert "PASS ok" in rep.summary() and rep.passed


def test_sweep_preconditions():
    cfg = orbit_config(32)
    with pytest.raises(ValueError, match="need ≥ 4 values"):
        eps_sweep(cfg, [1e-2])
    with pytest.raises(ValueError):
        eps_sweep(cfg, [1e-4, 1e-3, 1e-2, 1e-1])
    with pytest.raises(ValueError):
        mu_sweep(cfg, [0.1, 0.01])


def _short(cfg):
    return replace(cfg, time=replace(cfg.time, T=0.05, snapshot_dt=0.0))


def test_mu_sweep_reference_only():
    rep = mu_sweep(_short(orbit_config(32)), [0.0])
    assert rep.metrics["v_diff"] == [0.0]
    assert all(rep.metrics[f"{n}_diff"] == [0.0] for n in "PQDCW")


def test_mu_sweep_equal_values():
    rep = mu_sweep(_short(orbit_config(32)), [0.01, 0.01, 0.0])
    assert rep.metrics["v_diff"][0] == rep.metrics["v_diff"][1]


def test_eps_sweep_motion_following():
    # no sources and motion equal to zero: v = V = 0 so J vanishes
    cfg = replace(_short(default_config(32)), motion=DomainMotion())
    rep = eps_sweep(cfg, [1e-1, 1e-2, 1e-3, 1e-4])
    assert rep.metrics["J"] == [0.0] * 4 and rep.passed
