import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tumorflow.core import ModelParams, NumericsParams, integrate_scalar, make_grid
from tumorflow.flow import coefficient_mask
from tumorflow.geometry import ball_levelset, geometry_masks
from tumorflow.reactdiff import (diffusion_energy, diffusion_matrix, implicit_diffusion,
                                 step_drug, step_nutrient)

NUM = NumericsParams()


def _setup(N=32):
    g = make_grid(2, 1.0, N)
    phi = ball_levelset(g, (0.5, 0.5), 0.3)
    chi, _ = geometry_masks(g, phi, 1.5 * g.h)
    return g, phi, chi


def test_absorbing_states():
    g, phi, chi = _setup()
    p = ModelParams()
    P = np.full(g.shape, 0.4)
    assert np.all(step_nutrient(g, g.zeros(), P, P, 0.01, chi, p, NUM) == 0)
    assert np.all(step_drug(g, g.zeros(), P, P, 0.01, chi, p, NUM) == 0)


def test_single_reaction_step_nutrient():
    g = make_grid(2, 1.0, 8)
    p = ModelParams(nu_1=0.0, K_1=1.0, K_P=0.8, C_bar=1.0)
    out = step_nutrient(g, np.ones(g.shape), np.full(g.shape, 0.5), np.full(g.shape, 0.37), 0.1,
                        np.ones(g.shape), p, NUM)
    assert np.allclose(out, 0.96, atol=1e-14)


def test_single_reaction_step_drug():
    g = make_grid(2, 1.0, 8)
    p = ModelParams(nu_2=0.0, mu_1=1.0, mu_2=1.0, drug_response_kind="linear")
    out = step_drug(g, np.full(g.shape, 0.5), np.full(g.shape, 0.3), np.full(g.shape, 0.2), 0.1,
                    np.ones(g.shape), p, NUM)
    assert np.allclose(out, 0.4875, atol=1e-14)


def test_dirichlet_outside():
    g, phi, chi = _setup()
    out = step_nutrient(g, np.full(g.shape, 0.5), g.zeros(), g.zeros(), 0.01, chi,
                        ModelParams(), NUM)
    assert np.all(out[chi < 1e-3] == 0)


def test_mass_nonincreasing():
    g, phi, chi = _setup(48)
    x, y = g.centers()
    C = 0.9 * np.exp(-60 * ((x - 0.5) ** 2 + (y - 0.5) ** 2)) * (chi > 0.5)
    p = ModelParams(nu_1=0.5)
    prev = integrate_scalar(g, C)
    for _ in range(20):
        C = step_nutrient(g, C, g.zeros(), g.zeros(), 0.005, chi, p, NUM)
        m = integrate_scalar(g, C)
        assert m <= prev + 1e-14
        prev = m


def test_uniform_drug_deep_interior():
    g = make_grid(2, 1.0, 48)
    phi = ball_levelset(g, (0.5, 0.5), 0.4)
    chi, _ = geometry_masks(g, phi, 1.5 * g.h)
    W = np.where(chi >= 1e-3, 0.5, 0.0)
    out = step_drug(g, W, g.zeros(), g.zeros(), 1e-4, chi, ModelParams(nu_2=0.1), NUM)
    deep = phi < -0.2
    assert np.max(np.abs(out[deep] - 0.5)) < 1e-8


def test_diffusion_matrix_symmetric_positive():
    g, phi, chi = _setup(16)
    L = diffusion_matrix(g, coefficient_mask(chi, 1e-3))
    assert abs(L - L.T).max() < 1e-12
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, g.ncells))
    assert a @ (L @ b) == pytest.approx(b @ (L @ a), rel=1e-12)
    assert a @ (L @ a) > 0
    # constants are the null space with Neumann walls
    assert np.max(np.abs(L @ np.ones(g.ncells))) < 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_maximum_principle(seed):
    g, phi, chi = _setup(24)
    rng = np.random.default_rng(seed)
    p = ModelParams(nu_1=float(rng.uniform(0.01, 1)), nu_2=float(rng.uniform(0.01, 1)))
    w = rng.uniform(size=(3,) + g.shape)
    P, Q, _ = w / w.sum(axis=0)
    C = rng.uniform(0, p.C_bar, g.shape)
    W = rng.uniform(0, 0.8, g.shape)
    dt = 0.05
    C1 = step_nutrient(g, C, P, Q, dt, chi, p, NUM)
    W1 = step_drug(g, W, P, Q, dt, chi, p, NUM)
    assert C1.min() >= -1e-10 and C1.max() <= p.C_bar + 1e-10
    assert W1.min() >= -1e-10 and W1.max() <= W.max() + 1e-10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_energy_decay(seed):
    g, phi, chi = _setup(24)
    rng = np.random.default_rng(seed)
    p = ModelParams(nu_1=0.3)
    C = rng.uniform(0, 1, g.shape) * (chi >= 1e-3)
    P, Q = rng.uniform(0, 0.5, (2,) + g.shape)
    dt = 0.02
    C1 = step_nutrient(g, C, P, Q, dt, chi, p, NUM)
    lhs = 0.5 * integrate_scalar(g, C1 * C1) + dt * diffusion_energy(g, C1, p.nu_1, chi, NUM.eta)
    assert lhs <= 0.5 * integrate_scalar(g, C * C) + 1e-14


def test_zero_diffusion_is_pointwise():
    g, phi, chi = _setup(16)
    u = np.random.default_rng(2).uniform(size=g.shape)
    out = implicit_diffusion(g, u, 0.0, 0.1, chi, 1e-3)
    free = chi >= 1e-3
    assert np.array_equal(out[free], u[free]) and np.all(out[~free] == 0)
