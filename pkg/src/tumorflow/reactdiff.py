"""Nutrient and drug steppers: explicit pointwise decay, implicit diffusion.

Diffusion uses the conservative operator ``-div(nu_m grad)`` with
``nu_m = nu (eta + (1 - eta) chi_in)`` averaged onto faces, homogeneous
Neumann at the box walls and hard zero rows wherever ``chi_in < 1e-3``.
The reduced matrix is a symmetric M-matrix, so the direct solve keeps
``0 <= C' <= max C*`` exactly up to round-off.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import Grid, ModelParams, NumericsParams, centers_to_faces, check_scalar
from .flow import coefficient_mask
from .kinetics import drug_response

DIRICHLET_CUTOFF = 1e-3


def diffusion_matrix(grid: Grid, coef: np.ndarray) -> sp.csr_matrix:
    """``-div(coef grad)`` on cell centers, face coefficients by averaging."""
    n = grid.ncells
    cells = np.arange(n).reshape(grid.shape)
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for a in range(grid.d):
        kf = centers_to_faces(coef, a, grid.periodic)
        if grid.periodic:
            p = cells.ravel()
            q = np.roll(cells, -1, axis=a).ravel()
            k = np.take(kf, range(1, grid.N + 1), axis=a).ravel()
        else:
            p = np.take(cells, range(0, grid.N - 1), axis=a).ravel()
            q = np.take(cells, range(1, grid.N), axis=a).ravel()
            k = np.take(kf, range(1, grid.N), axis=a).ravel()
        rows += [p, q]
        cols += [q, p]
        vals += [-k, -k]
        np.add.at(diag, p, k)
        np.add.at(diag, q, k)
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    return (M + sp.diags(diag)) / grid.h**2


def implicit_diffusion(grid: Grid, u_star: np.ndarray, nu: float, dt: float,
                       chi_in: np.ndarray, eta: float) -> np.ndarray:
    """Solve ``(I - dt div(nu_m grad)) u = u_star`` with ``u = 0`` off the tumor."""
    free = (chi_in >= DIRICHLET_CUTOFF).ravel()
    out = np.zeros(grid.ncells)
    if not free.any():
        return out.reshape(grid.shape)
    rhs = u_star.ravel()[free]
    if nu == 0.0:
        out[free] = rhs
        return out.reshape(grid.shape)
    L = diffusion_matrix(grid, nu * coefficient_mask(chi_in, eta))
    A = (sp.identity(grid.ncells, format="csr") + dt * L)[free][:, free]
    out[free] = spla.spsolve(A.tocsc(), rhs)
    return out.reshape(grid.shape)


def nutrient_reaction(C, P, Q, params: ModelParams):
    p = params
    return (p.K_1 * p.K_P * C * P + p.K_2 * p.K_Q * (p.C_bar - C) * Q) * C


def drug_reaction(W, P, Q, params: ModelParams):
    p = params
    g = drug_response(p.drug_response_kind, W, p.K_half)
    return (p.mu_1 * g * P + p.mu_2 * g * Q) * W


def step_nutrient(grid: Grid, C, P, Q, dt: float, chi_in, params: ModelParams,
                  numerics: NumericsParams) -> np.ndarray:
    C = check_scalar(grid, C, "C")
    C_star = C - dt * nutrient_reaction(C, P, Q, params)
    return implicit_diffusion(grid, C_star, params.nu_1, dt, chi_in, numerics.eta)


def step_drug(grid: Grid, W, P, Q, dt: float, chi_in, params: ModelParams,
              numerics: NumericsParams) -> np.ndarray:
    W = check_scalar(grid, W, "W")
    W_star = W - dt * drug_reaction(np.maximum(W, 0.0), P, Q, params)
    return implicit_diffusion(grid, W_star, params.nu_2, dt, chi_in, numerics.eta)


def diffusion_energy(grid: Grid, u: np.ndarray, nu: float, chi_in, eta: float) -> float:
    """``integral nu_m |grad_h u|^2`` as the quadratic form of the diffusion matrix."""
    L = diffusion_matrix(grid, nu * coefficient_mask(chi_in, eta))
    x = u.ravel()
    return float(x @ (L @ x) * grid.cell_volume)
