import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tumorflow.core import ModelParams, NumericsParams, divergence, integrate_scalar, make_grid
from tumorflow.geometry import DomainMotion
from tumorflow.kinetics import SourceTriple, compute_sources
from tumorflow.transport import (CFLViolation, SchemeError, stable_dt, step_densities,
                                 upwind_divergence)

RATES = ModelParams(K_B=1.0, K_Q=0.5, K_A=0.2, K_P=0.8, K_D=0.4, K_R=0.3)
ROT = DomainMotion("rigid_rotation", (0.5, 0.5), 1.0, 0.0, 0.35, 0.45)


def _const(g, c):
    return np.full(g.shape, c)


def test_stable_dt_cfl_limited():
    g = make_grid(2, 1.0, 64)
    v = g.zero_faces()
    v[0][10, 10] = 2.0
    dt = stable_dt(g, v, None, ModelParams(K_B=0, K_Q=0, K_A=0, K_P=0, K_D=0, K_R=0, mu_1=0,
                                            mu_2=0, K_1=0, K_2=0), NumericsParams(cfl=0.4))
    assert dt == pytest.approx(0.003125)


def test_stable_dt_reaction_limited():
    g = make_grid(2, 1.0, 64)
    dt = stable_dt(g, g.zero_faces(), g.zero_faces(), RATES, NumericsParams())
    assert dt <= 0.5 / 5.2 + 1e-15


def test_zero_velocity_zero_source():
    g = make_grid(2, 1.0, 16)
    rng = np.random.default_rng(0)
    P, Q, D = rng.uniform(0, 0.3, (3,) + g.shape)
    zero = SourceTriple(g.zeros(), g.zeros(), g.zeros())
    out = step_densities(g, P, Q, D, g.zero_faces(), zero, 0.1, RATES)
    for a, b in zip(out[:3], (P, Q, D)):
        assert np.array_equal(a, b)


def test_constant_state_preserved_by_solenoidal_flow():
    g = make_grid(2, 1.0, 64)
    V = ROT.face_velocity(g)
    assert np.max(np.abs(divergence(g, V))) < 1e-12
    third = _const(g, 1 / 3)
    zero = SourceTriple(g.zeros(), g.zeros(), g.zeros())
    dt = 0.4 * g.h / ROT.max_speed()
    P, Q, D, _ = step_densities(g, third, third, third, V, zero, dt, RATES)
    for f in (P, Q, D):
        assert np.max(np.abs(f - 1 / 3)) < 1e-14


def test_source_update_example():
    g = make_grid(2, 1.0, 8)
    P, Q, D, C, W = (_const(g, c) for c in (0.3, 0.2, 0.5, 0.5, 0.1))
    src = compute_sources(P, Q, D, C, W, RATES)
    P1, Q1, D1, _ = step_densities(g, P, Q, D, g.zero_faces(), src, 0.1, RATES)
    assert P1[0, 0] == pytest.approx(0.3095, abs=1e-12)
    assert Q1[0, 0] == pytest.approx(0.1935, abs=1e-12)
    assert D1[0, 0] == pytest.approx(0.497, abs=1e-12)
    assert (P1 + Q1 + D1)[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_renormalization_records_correction():
    g = make_grid(2, 1.0, 8)
    P, Q, D = (_const(g, c) for c in (0.3, 0.2, 0.45))
    zero = SourceTriple(g.zeros(), g.zeros(), g.zeros())
    _, _, D1, info = step_densities(g, P, Q, D, g.zero_faces(), zero, 0.1, RATES, True)
    assert np.allclose(D1, 0.5)
    assert info["renorm"] == pytest.approx(0.05)


def test_cfl_violation():
    g = make_grid(2, 1.0, 16)
    v = g.zero_faces()
    v[0][5, 5] = 1.0
    with pytest.raises(CFLViolation):
        step_densities(g, g.zeros(), g.zeros(), g.zeros(), v, SourceTriple(0, 0, 0), 2 * g.h, RATES)


def test_negative_density_is_a_scheme_failure():
    g = make_grid(2, 1.0, 8)
    P = _const(g, 0.1)
    bad = SourceTriple(_const(g, -10.0), g.zeros(), g.zeros())
    with pytest.raises(SchemeError, match="went negative"):
        step_densities(g, P, P, P, g.zero_faces(), bad, 0.1, RATES)


def test_mass_conserved_without_sources():
    g = make_grid(2, 1.0, 64)
    V = ROT.face_velocity(g)
    x, y = g.centers()
    P = np.exp(-80 * ((x - 0.55) ** 2 + (y - 0.5) ** 2))
    zero = SourceTriple(g.zeros(), g.zeros(), g.zeros())
    dt = 0.4 * g.h / ROT.max_speed()
    m0 = integrate_scalar(g, P)
    for _ in range(30):
        P, _, _, _ = step_densities(g, P, P * 0, P * 0, V, zero, dt, RATES)
    assert integrate_scalar(g, P) == pytest.approx(m0, rel=1e-13)


def test_periodic_upwind_conserves():
    g = make_grid(2, 1.0, 16, periodic=True)
    rng = np.random.default_rng(5)
    rho = rng.uniform(size=g.shape)
    v = tuple(rng.normal(size=g.face_shape(a)) for a in range(2))
    assert abs(upwind_divergence(g, rho, v).sum()) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_positivity_and_bounds_random_states(seed):
    g = make_grid(2, 1.0, 32)
    rng = np.random.default_rng(seed)
    w = rng.uniform(size=(3,) + g.shape)
    P, Q, D = w / w.sum(axis=0) * RATES.rho_f
    C = rng.uniform(0, RATES.C_bar, g.shape)
    W = rng.uniform(0, 1.0, g.shape)
    # closed kinetics: the sources sum to zero, matching the solenoidal V
    kin = ModelParams(K_B=0.0, K_R=0.0, K_Q=0.5, K_A=0.2, K_P=0.8, K_D=0.4)
    V = ROT.face_velocity(g)
    dt = stable_dt(g, V, V, kin, NumericsParams(), 1.0)

    def sources(p, q, d):
        return compute_sources(p, q, d, C, W, kin)

    P1, Q1, D1, _ = step_densities(g, P, Q, D, V, sources, dt, kin)
    for f in (P1, Q1, D1):
        assert f.min() >= -1e-10 * kin.rho_f and f.max() <= kin.rho_f * (1 + 1e-10)
