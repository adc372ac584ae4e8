"""Penalized Darcy/Brinkman velocity-pressure solve on the MAC grid.

The discrete system is

    A v + G sigma = f,         A = -div(mu_m grad) + alpha + chi_out / eps
    -G^T v       = g,          f = chi_out V / eps

with walls held at ``v = 0``.  Eliminating ``v`` leaves the SPD pressure
problem ``G^T A^{-1} G sigma = g + G^T A^{-1} f``, solved by preconditioned
CG.  The preconditioner is ``mu_m + (G^T A0^{-1} G)^{-1}`` where ``A0`` keeps
only the zeroth-order (drag + penalty) part of ``A``; for ``mu = 0`` it is
the exact inverse and CG converges in one step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (Grid, ModelParams, NumericsParams, centers_to_faces, check_faces,
                   check_scalar, divergence, faces_to_centers, integrate_scalar)
from .geometry import levelset_gradient


class SolverError(RuntimeError):
    pass


class IncompatibleSourceError(ValueError):
    pass


@dataclass
class FlowSolution:
    v: tuple
    sigma: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    info: dict = field(default_factory=dict)


def coefficient_mask(chi_in: np.ndarray, eta: float) -> np.ndarray:
    """``eta + (1 - eta) chi_in``: 1 inside the tumor, ``eta`` far outside."""
    return eta + (1.0 - eta) * chi_in


def project_source_compatible(grid: Grid, g: np.ndarray, chi_in: np.ndarray) -> tuple:
    """Remove the chi-weighted mean of ``g``; returns ``(g_tilde, defect)``."""
    g = check_scalar(grid, g, "g")
    chi_in = check_scalar(grid, chi_in, "chi_in")
    vol = integrate_scalar(grid, chi_in)
    if vol <= 0:
        raise ValueError("empty tumor region: cannot project the divergence source")
    mean = integrate_scalar(grid, g, chi_in) / vol
    return chi_in * (g - mean), mean


# ---------------------------------------------------------------- assembly

def _face_index(grid: Grid, axis: int) -> tuple:
    """Unknown numbering for one velocity component (-1 marks wall faces)."""
    shape = grid.face_shape(axis)
    idx = -np.ones(shape, dtype=np.int64)
    inner = [slice(None)] * grid.d
    if grid.periodic:
        inner[axis] = slice(0, grid.N)
        n = grid.N**grid.d
        idx[tuple(inner)] = np.arange(n).reshape(grid.shape)
        last = [slice(None)] * grid.d
        first = [slice(None)] * grid.d
        last[axis], first[axis] = grid.N, 0
        idx[tuple(last)] = idx[tuple(first)]
    else:
        inner[axis] = slice(1, grid.N)
        n = (grid.N - 1) * grid.N ** (grid.d - 1)
        idx[tuple(inner)] = np.arange(n).reshape(
            tuple(grid.N - 1 if b == axis else grid.N for b in range(grid.d)))
    return idx, n


def _viscous_block(grid: Grid, axis: int, mu_c: np.ndarray, idx: np.ndarray, n: int):
    """Symmetric ``-div(mu grad)`` for component ``axis`` as a sparse matrix."""
    N, d = grid.N, grid.d
    rows, cols, vals = [], [], []
    diag = np.zeros(n)

    def couple(p, q, c):
        both = (p >= 0) & (q >= 0)
        rows.extend([p[both], q[both]])
        cols.extend([q[both], p[both]])
        vals.extend([-c[both], -c[both]])
        np.add.at(diag, p[p >= 0], c[p >= 0])
        np.add.at(diag, q[q >= 0], c[q >= 0])

    mu_f = centers_to_faces(mu_c, axis, grid.periodic)  # mu at faces of this component
    for b in range(d):
        if b == axis:
            # neighbours i, i+1 straddle cell i
            p = np.take(idx, range(0, N), axis=b)
            q = np.take(idx, range(1, N + 1), axis=b)
            couple(p, q, mu_c)
            continue
        p = np.take(idx, range(0, N - 1), axis=b)
        q = np.take(idx, range(1, N), axis=b)
        c = 0.5 * (np.take(mu_f, range(0, N - 1), axis=b) + np.take(mu_f, range(1, N), axis=b))
        couple(p, q, c)
        first, last = np.take(idx, 0, axis=b), np.take(idx, N - 1, axis=b)
        if grid.periodic:
            c = 0.5 * (np.take(mu_f, 0, axis=b) + np.take(mu_f, N - 1, axis=b))
            couple(first, last, c)
        else:
            # no-slip ghost value -u at the wall doubles the half-cell flux
            for edge, m in ((first, np.take(mu_f, 0, axis=b)), (last, np.take(mu_f, N - 1, axis=b))):
                ok = edge >= 0
                np.add.at(diag, edge[ok], 2.0 * m[ok])
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cidx = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    v = np.concatenate(vals) if vals else np.zeros(0)
    M = sp.coo_matrix((v, (r, cidx)), shape=(n, n)).tocsr() + sp.diags(diag)
    return M / grid.h**2


def _gradient_block(grid: Grid, axis: int, idx: np.ndarray, n: int):
    """Face gradient ``(sigma_i - sigma_{i-1}) / h`` for one component."""
    N = grid.N
    cells = np.arange(grid.ncells).reshape(grid.shape)
    if grid.periodic:
        hi = cells
        lo = np.roll(cells, 1, axis=axis)
        rows = np.take(idx, range(0, N), axis=axis)
    else:
        hi = np.take(cells, range(1, N), axis=axis)
        lo = np.take(cells, range(0, N - 1), axis=axis)
        rows = np.take(idx, range(1, N), axis=axis)
    r = np.concatenate([rows.ravel(), rows.ravel()])
    c = np.concatenate([hi.ravel(), lo.ravel()])
    v = np.concatenate([np.ones(rows.size), -np.ones(rows.size)]) / grid.h
    return sp.coo_matrix((v, (r, c)), shape=(n, grid.ncells)).tocsr()


def _restrict(comp: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    ok = idx >= 0
    out[idx[ok]] = comp[ok]
    return out


def _prolong(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    out = np.zeros(idx.shape)
    ok = idx >= 0
    out[ok] = x[idx[ok]]
    return out


class FlowOperator:
    """Assembled blocks for one set of masks; reusable across right-hand sides."""

    def __init__(self, grid: Grid, chi_in: np.ndarray, params: ModelParams, eps: float,
                 eta: float = 1e-3):
        if not eps > 0:
            raise ValueError(f"penalty eps must be positive, got {eps}")
        self.grid = grid
        self.params = params
        self.eps = eps
        chi_in = check_scalar(grid, chi_in, "chi_in")
        self.chi_in = chi_in
        chi_out = 1.0 - chi_in
        alpha = params.friction
        self.mu_cell = params.mu * coefficient_mask(chi_in, eta)
        self.index = []
        a0 = []
        blocks = []
        grads = []
        self.chi_out_faces = []
        for a in range(grid.d):
            idx, n = _face_index(grid, a)
            self.index.append((idx, n))
            co = _restrict(centers_to_faces(chi_out, a, grid.periodic), idx, n)
            self.chi_out_faces.append(co)
            diag0 = alpha + co / eps
            a0.append(diag0)
            blk = sp.diags(diag0)
            if params.mu > 0:
                blk = blk + _viscous_block(grid, a, self.mu_cell, idx, n)
            blocks.append(blk)
            grads.append(_gradient_block(grid, a, idx, n))
        self.A0 = np.concatenate(a0)
        self.G = sp.vstack(grads).tocsr()
        self.offsets = np.cumsum([0] + [n for _, n in self.index])
        if params.mu > 0:
            self.A = sp.block_diag(blocks).tocsc()
            self._A_lu = [spla.splu(b.tocsc()) for b in blocks]
        else:
            self.A = None
            self._A_lu = None
        # Poisson-type part of the preconditioner, pinned at one deep-interior cell
        L0 = (self.G.T @ sp.diags(1.0 / self.A0) @ self.G).tocsr()
        self._pin = int(np.argmax(chi_in.ravel()))
        L0 = L0.tolil()
        L0[self._pin, :] = 0
        L0[:, self._pin] = 0
        L0[self._pin, self._pin] = 1.0
        self._L0_lu = spla.splu(L0.tocsc())

    def apply_Ainv(self, x: np.ndarray) -> np.ndarray:
        if self._A_lu is None:
            return x / self.A0
        out = np.empty_like(x)
        for a, lu in enumerate(self._A_lu):
            s = slice(self.offsets[a], self.offsets[a + 1])
            out[s] = lu.solve(x[s])
        return out

    def schur(self, s: np.ndarray) -> np.ndarray:
        return self.G.T @ self.apply_Ainv(self.G @ s)

    def precondition(self, r: np.ndarray) -> np.ndarray:
        r = r - r.mean()
        rr = r.copy()
        rr[self._pin] = 0.0
        z = self._L0_lu.solve(rr)
        z = z - z.mean()
        if self.params.mu > 0:
            z = z + self.mu_cell.ravel() * r
            z = z - z.mean()
        return z

    def pack(self, faces) -> np.ndarray:
        return np.concatenate([_restrict(c, idx, n) for c, (idx, n) in zip(faces, self.index)])

    def unpack(self, x: np.ndarray) -> tuple:
        return tuple(_prolong(x[self.offsets[a]:self.offsets[a + 1]], idx)
                     for a, (idx, _) in enumerate(self.index))


def solve_velocity(grid: Grid, chi_in: np.ndarray, g_tilde: np.ndarray, V, params: ModelParams,
                   numerics: NumericsParams, operator: FlowOperator = None) -> FlowSolution:
    """Solve the penalized flow problem for divergence ``g_tilde`` and motion ``V``."""
    g_tilde = check_scalar(grid, g_tilde, "g_tilde")
    V = check_faces(grid, V, "V")
    op = operator or FlowOperator(grid, chi_in, params, numerics.eps, numerics.eta)
    gnorm = float(np.linalg.norm(g_tilde))
    if abs(g_tilde.sum()) > 1e-9 * max(np.abs(g_tilde).sum(), 1e-300) + 1e-12:
        raise IncompatibleSourceError(
            f"divergence source has nonzero total {g_tilde.sum():.3e}; project it first")
    f = op.pack(V) * np.concatenate(op.chi_out_faces) / numerics.eps
    b = g_tilde.ravel() + op.G.T @ op.apply_Ainv(f)
    b = b - b.mean()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return FlowSolution(grid.zero_faces(), grid.zeros(), 0, 0.0, {"g_norm": gnorm})
    ref = gnorm if gnorm > 0 else bnorm
    target = numerics.tol * ref
    n = grid.ncells
    S = spla.LinearOperator((n, n), matvec=op.schur, dtype=float)
    M = spla.LinearOperator((n, n), matvec=op.precondition, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    x0 = op.precondition(b)
    sigma, info = spla.cg(S, b, x0=x0, rtol=min(target / bnorm, 0.5), atol=0.0,
                          maxiter=numerics.max_iter, M=M, callback=cb)
    res = float(np.linalg.norm(b - op.schur(sigma)))
    if info != 0 or res > 10 * target:
        raise SolverError(
            f"pressure solve did not converge: residual {res:.3e} > {target:.3e} "
            f"after {count[0]} iterations")
    vel = op.apply_Ainv(f - op.G @ sigma)
    sigma = sigma.reshape(grid.shape)
    sigma = sigma - integrate_scalar(grid, sigma, chi_in) / integrate_scalar(grid, chi_in)
    v = op.unpack(vel)
    return FlowSolution(v, sigma, count[0], res / ref, {"g_norm": gnorm})


def divergence_residual(grid: Grid, sol: FlowSolution, g_tilde: np.ndarray) -> float:
    return float(np.linalg.norm(divergence(grid, sol.v) - g_tilde))


def unit_normal(grid: Grid, phi: np.ndarray, band: np.ndarray) -> list:
    grad = levelset_gradient(grid, phi)
    norm = np.sqrt(sum(g * g for g in grad))
    if np.any(norm[band] < 1e-8):
        raise ValueError("degenerate level-set gradient inside the interface band")
    safe = np.where(norm > 1e-12, norm, 1.0)
    return [g / safe for g in grad]


def boundary_flux_defect(grid: Grid, v, V, delta_gamma: np.ndarray, phi: np.ndarray) -> float:
    """``J = integral |(v - V) . n|^2 delta_Gamma dx`` at cell centers."""
    v = check_faces(grid, v, "v")
    V = check_faces(grid, V, "V")
    band = delta_gamma > 0
    n = unit_normal(grid, phi, band)
    vc = faces_to_centers(v)
    Vc = faces_to_centers(V)
    slip = sum((a - b) * ni for a, b, ni in zip(vc, Vc, n))
    return integrate_scalar(grid, slip * slip, delta_gamma)


def flow_energy(grid: Grid, v, chi_in: np.ndarray, params: ModelParams) -> float:
    """``(mu_tilde/K) ||v||^2 + mu ||grad_h v||^2`` over the tumor (chi_in weighted)."""
    vc = faces_to_centers(v)
    kin = sum(integrate_scalar(grid, c * c, chi_in) for c in vc)
    out = params.friction * kin
    if params.mu > 0:
        grad2 = np.zeros(grid.shape)
        for c in vc:
            for g in np.gradient(c, grid.h):
                grad2 += g * g
        out += params.mu * integrate_scalar(grid, grad2, chi_in)
    return float(out)
