"""Grids, field containers, parameter sets and quadrature.

Scalars live at cell centers as ``ndarray`` of shape ``grid.shape``.
Face fields are tuples of ``d`` arrays; component ``a`` has ``N + 1``
entries along axis ``a`` (both walls included) and ``N`` along the others.
Arrays are indexed ``[i_x, i_y(, i_z)]``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

MIN_CELLS = 8


class ConfigurationError(ValueError):
    """Raised when parameters or configuration violate their invariants."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    d: int
    L: float
    N: int
    periodic: bool = False

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def ncells(self) -> int:
        return self.N**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def volume(self) -> float:
        return self.L**self.d

    def face_shape(self, axis: int) -> tuple:
        s = [self.N] * self.d
        s[axis] += 1
        return tuple(s)

    def centers(self) -> list:
        """Cell-center coordinate arrays, broadcast to ``shape`` (ij indexing)."""
        x = (np.arange(self.N) + 0.5) * self.h
        return np.meshgrid(*([x] * self.d), indexing="ij")

    def face_centers(self, axis: int) -> list:
        xc = (np.arange(self.N) + 0.5) * self.h
        xf = np.arange(self.N + 1) * self.h
        axes = [xf if b == axis else xc for b in range(self.d)]
        return np.meshgrid(*axes, indexing="ij")

    def nodes_for(self) -> list:
        """Coordinates of the edges where a z-directed potential is sampled.

        In 2D these are the cell corners.  In 3D they are the z-edges
        (corners in x and y, centers in z).
        """
        xc = (np.arange(self.N) + 0.5) * self.h
        xf = np.arange(self.N + 1) * self.h
        axes = [xf, xf] + [xc] * (self.d - 2)
        return np.meshgrid(*axes, indexing="ij")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def zero_faces(self) -> tuple:
        return tuple(np.zeros(self.face_shape(a)) for a in range(self.d))


def make_grid(d: int, L: float, N: int, periodic: bool = False) -> Grid:
    if d not in (2, 3):
        raise ConfigurationError(f"dimension must be 2 or 3, got {d}")
    if not L > 0:
        raise ConfigurationError(f"extent L must be positive, got {L}")
    if int(N) != N or N < MIN_CELLS:
        raise ConfigurationError(f"N too small: need N >= {MIN_CELLS}, got {N}")
    return Grid(int(d), float(L), int(N), bool(periodic))


def check_scalar(grid: Grid, f: np.ndarray, name: str = "field") -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise GridMismatchError(f"{name}: shape {f.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name}: non-finite values")
    return f


def check_faces(grid: Grid, v: Sequence[np.ndarray], name: str = "faces") -> tuple:
    if len(v) != grid.d:
        raise GridMismatchError(f"{name}: expected {grid.d} components, got {len(v)}")
    out = []
    for a, comp in enumerate(v):
        comp = np.asarray(comp, dtype=float)
        if comp.shape != grid.face_shape(a):
            raise GridMismatchError(
                f"{name}[{a}]: shape {comp.shape} does not match {grid.face_shape(a)}"
            )
        if not np.all(np.isfinite(comp)):
            raise ValueError(f"{name}[{a}]: non-finite values")
        out.append(comp)
    return tuple(out)


def faces_to_centers(v: Sequence[np.ndarray]) -> list:
    """Average each staggered component onto the cell centers."""
    out = []
    for a, comp in enumerate(v):
        lo = [slice(None)] * comp.ndim
        hi = [slice(None)] * comp.ndim
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        out.append(0.5 * (comp[tuple(lo)] + comp[tuple(hi)]))
    return out


def centers_to_faces(f: np.ndarray, axis: int, periodic: bool = False) -> np.ndarray:
    """Arithmetic mean of the two cells next to each face of ``axis``.

    Wall faces copy the adjacent cell (periodic grids wrap).
    """
    n = f.shape[axis]
    shape = list(f.shape)
    shape[axis] = n + 1
    out = np.empty(shape)
    inner = [slice(None)] * f.ndim
    inner[axis] = slice(1, n)
    out[tuple(inner)] = 0.5 * (
        np.take(f, range(0, n - 1), axis=axis) + np.take(f, range(1, n), axis=axis)
    )
    first = [slice(None)] * f.ndim
    last = [slice(None)] * f.ndim
    first[axis] = 0
    last[axis] = n
    if periodic:
        wrap = 0.5 * (np.take(f, 0, axis=axis) + np.take(f, n - 1, axis=axis))
        out[tuple(first)] = wrap
        out[tuple(last)] = wrap
    else:
        out[tuple(first)] = np.take(f, 0, axis=axis)
        out[tuple(last)] = np.take(f, n - 1, axis=axis)
    return out


def divergence(grid: Grid, v: Sequence[np.ndarray]) -> np.ndarray:
    """MAC divergence of a face field, at cell centers."""
    div = np.zeros(grid.shape)
    for a, comp in enumerate(v):
        div += np.diff(comp, axis=a)
    return div / grid.h


def integrate_scalar(grid: Grid, f: np.ndarray, w: Optional[np.ndarray] = None) -> float:
    """Midpoint rule ``sum(f * w) h^d``."""
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise GridMismatchError(f"integrand shape {f.shape} does not match grid {grid.shape}")
    if w is None:
        return float(f.sum() * grid.cell_volume)
    w = np.asarray(w, dtype=float)
    if w.shape != grid.shape:
        raise GridMismatchError(f"weight shape {w.shape} does not match grid {grid.shape}")
    return float(np.sum(f * w) * grid.cell_volume)


DRUG_RESPONSE_KINDS = ("linear", "saturating")


@dataclass
class ModelParams:
    """Biological and physical constants of the tumor model.

    Defaults are the closed-kinetics mixture used by the default scenario
    (no births, no clearance), which keeps the net mass production zero.
    """

    K_B: float = 0.0
    K_Q: float = 0.5
    K_A: float = 0.2
    K_P: float = 0.8
    K_D: float = 0.4
    K_R: float = 0.0
    K_1: float = 1.0
    K_2: float = 1.0
    nu_1: float = 0.01
    nu_2: float = 0.01
    mu_1: float = 1.0
    mu_2: float = 1.0
    i_1: float = 1.0
    i_2: float = 1.0
    C_bar: float = 1.0
    rho_f: float = 1.0
    mu_tilde: float = 1.0
    K: float = 0.01
    mu: float = 0.0
    drug_response_kind: str = "linear"
    K_half: float = 0.5

    @property
    def friction(self) -> float:
        """Darcy drag coefficient ``mu_tilde / K``."""
        return self.mu_tilde / self.K


_NONNEGATIVE = ("K_B", "K_Q", "K_A", "K_P", "K_D", "K_R", "K_1", "K_2",
                "nu_1", "nu_2", "mu_1", "mu_2", "i_1", "i_2", "mu")
_POSITIVE = ("C_bar", "rho_f", "mu_tilde", "K", "K_half")


def validate_params(params: ModelParams) -> ModelParams:
    problems = []
    for name in _NONNEGATIVE:
        val = getattr(params, name)
        if not (np.isfinite(val) and val >= 0):
            problems.append(f"{name} must be nonnegative, got {val}")
    for name in _POSITIVE:
        val = getattr(params, name)
        if not (np.isfinite(val) and val > 0):
            label = {"rho_f": "ρ_f", "C_bar": "C̄", "mu_tilde": "μ̃"}.get(name, name)
            problems.append(f"{label} must be positive, got {val}")
    if params.drug_response_kind not in DRUG_RESPONSE_KINDS:
        problems.append(
            f"drug_response_kind must be one of {DRUG_RESPONSE_KINDS}, "
            f"got {params.drug_response_kind!r}"
        )
    if problems:
        raise ConfigurationError(problems)
    return params


@dataclass
class NumericsParams:
    """Discretization controls.

    ``delta`` is the mask smoothing half-width in multiples of ``h`` and
    ``eta`` the floor applied to masked coefficients outside the tumor.
    ``dt_max`` caps the time step (refinement studies scale it with h).
    """

    cfl: float = 0.4
    eps: float = 1e-3
    delta: float = 1.5
    eta: float = 1e-3
    tol: float = 1e-8
    max_iter: int = 500
    renormalize_D: bool = False
    reinit_every: int = 20
    dt_max: float = 0.0
    interp_order: int = 3

    def delta_length(self, grid: Grid) -> float:
        return self.delta * grid.h


def validate_numerics(num: NumericsParams) -> NumericsParams:
    problems = []
    if not 0 < num.cfl <= 1:
        problems.append(f"cfl must lie in (0, 1], got {num.cfl}")
    if not num.eps > 0:
        problems.append(f"eps must be positive, got {num.eps}")
    if not num.delta >= 1:
        problems.append(f"delta must be at least one cell (delta >= 1), got {num.delta}")
    if not 0 < num.eta < 0.1:
        problems.append(f"eta must satisfy 0 < eta << 1, got {num.eta}")
    if not 0 < num.tol <= 1e-4:
        problems.append(f"tol must lie in (0, 1e-4], got {num.tol}")
    if num.max_iter < 1:
        problems.append(f"max_iter must be positive, got {num.max_iter}")
    if num.reinit_every < 0:
        problems.append(f"reinit_every must be nonnegative, got {num.reinit_every}")
    if num.dt_max < 0:
        problems.append(f"dt_max must be nonnegative, got {num.dt_max}")
    if num.interp_order not in (1, 3):
        problems.append(f"interp_order must be 1 or 3, got {num.interp_order}")
    if problems:
        raise ConfigurationError(problems)
    return num


def replace(obj, **changes):
    """``dataclasses.replace`` re-exported for config sweeps."""
    return dataclasses.replace(obj, **changes)
