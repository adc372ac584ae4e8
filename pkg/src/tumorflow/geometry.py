"""Tumor-domain tracking on the fixed box.

The boundary velocity is built from a z-directed stream function
``psi(r)`` (2D) or vector potential ``psi(r) e_z`` (3D), so it is
solenoidal by construction.  Face samples are taken as discrete curls of
``psi`` at the grid edges, which keeps the MAC divergence exactly zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
from numpy.polynomial import Polynomial
from scipy import ndimage

from .core import ConfigurationError, Grid

MOTION_KINDS = ("zero", "rigid_rotation", "stream_vortex")

# C^3 smoothstep, 0 -> 1 on [0, 1]
_S7 = Polynomial([0, 0, 0, 0, 35, -84, 70, -20])
_dS7 = _S7.deriv()


class BacktraceError(ConfigurationError):
    pass


@dataclass(frozen=True)
class DomainMotion:
    """Prescribed boundary velocity ``V(t, x)``.

    ``rigid_rotation`` turns at ``angular_rate`` about ``center`` inside
    radius ``r0`` and fades to rest at ``r1``.  ``stream_vortex`` has a
    stream function ``amplitude * (1 - S((r - r0) / (r1 - r0)))``, i.e. a
    sheared ring of swirl between the two radii.
    """

    kind: str = "zero"
    center: tuple = (0.5, 0.5)
    angular_rate: float = 0.0
    amplitude: float = 0.0
    r0: float = 0.3
    r1: float = 0.45

    def __post_init__(self):
        if self.kind not in MOTION_KINDS:
            raise ConfigurationError(f"motion kind must be one of {MOTION_KINDS}, got {self.kind!r}")
        if self.kind != "zero" and not (0 <= self.r0 < self.r1):
            raise ConfigurationError(f"motion cutoff radii need 0 <= r0 < r1, got {self.r0}, {self.r1}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.kind == "rigid_rotation":
            w = self.r1 - self.r0
            # integrand rho * s(rho) in the transition variable t, rho = r0 + w t
            p = Polynomial([self.r0, w]) * (1 - _S7)
            object.__setattr__(self, "_ramp", p.integ() * w)

    def _radius(self, x: Sequence[np.ndarray]) -> np.ndarray:
        # distance to the rotation axis (parallel to z in 3D)
        return np.sqrt(sum((xi - ci) ** 2 for xi, ci in zip(x[:2], self.center[:2])))

    def psi(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(r)
        t = np.clip((r - self.r0) / (self.r1 - self.r0), 0.0, 1.0)
        if self.kind == "rigid_rotation":
            inner = 0.5 * np.minimum(r, self.r0) ** 2
            return self.angular_rate * (inner + np.where(r > self.r0, self._ramp(t), 0.0))
        return self.amplitude * (1.0 - _S7(t))

    def swirl(self, r: np.ndarray) -> np.ndarray:
        """``psi'(r) / r``: the local angular velocity."""
        r = np.asarray(r, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(r)
        w = self.r1 - self.r0
        t = np.clip((r - self.r0) / w, 0.0, 1.0)
        if self.kind == "rigid_rotation":
            return self.angular_rate * (1.0 - _S7(t))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -self.amplitude * _dS7(t) / (w * r)
        return np.where(r > 0, out, 0.0)

    def velocity(self, t: float, x: Sequence[np.ndarray]) -> list:
        """Pointwise ``V(t, x)`` for coordinate arrays ``x``."""
        x = [np.asarray(xi, dtype=float) for xi in x]
        om = self.swirl(self._radius(x))
        out = [-om * (x[1] - self.center[1]), om * (x[0] - self.center[0])]
        if len(x) == 3:
            out.append(np.zeros_like(x[0]))
        return out

    def face_velocity(self, grid: Grid, t: float = 0.0) -> tuple:
        """Discretely solenoidal face samples of V."""
        if self.kind == "zero":
            return grid.zero_faces()
        psi = self.psi(self._radius(grid.nodes_for()))
        u = -np.diff(psi, axis=1) / grid.h
        v = np.diff(psi, axis=0) / grid.h
        if grid.d == 2:
            return (u, v)
        return (u, v, np.zeros(grid.face_shape(2)))

    def max_speed(self) -> float:
        if self.kind == "zero":
            return 0.0
        r = np.linspace(0.0, self.r1, 2001)
        return float(np.max(np.abs(self.swirl(r)) * r))


def flow_map(motion: DomainMotion, x0, t: float, n_steps: int = 1000, box: Grid = None) -> np.ndarray:
    """Classical RK4 integration of ``dX/dt = V(t, X)`` from ``X(0) = x0``."""
    x = np.array(x0, dtype=float)
    if t == 0 or motion.kind == "zero":
        return x
    dt = t / n_steps

    def f(s, y):
        return np.array(motion.velocity(s, list(y)))

    s = 0.0
    for _ in range(n_steps):
        k1 = f(s, x)
        k2 = f(s + dt / 2, x + dt / 2 * k1)
        k3 = f(s + dt / 2, x + dt / 2 * k2)
        k4 = f(s + dt, x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        s += dt
        if box is not None and (np.any(x < 0) or np.any(x > box.L)):
            raise BacktraceError(f"trajectory left the box at t={s:.6g}")
    return x


def advect_levelset(grid: Grid, phi: np.ndarray, motion: DomainMotion, t: float, dt: float,
                    order: int = 3) -> np.ndarray:
    """Semi-Lagrangian step: ``phi'(x) = phi(x_back)`` with a midpoint backtrace."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if motion.kind == "zero":
        return phi.copy()
    x = grid.centers()
    tm = t + 0.5 * dt
    vh = motion.velocity(tm, x)
    xm = [xi - 0.5 * dt * vi for xi, vi in zip(x, vh)]
    vm = motion.velocity(tm, xm)
    xb = [xi - dt * vi for xi, vi in zip(x, vm)]
    for xi in xb:
        if np.any(xi < 0) or np.any(xi > grid.L):
            raise BacktraceError("semi-Lagrangian backtrace left the reference box")
    coords = np.array([xi / grid.h - 0.5 for xi in xb])
    return ndimage.map_coordinates(phi, coords, order=order, mode="nearest")


def smoothed_heaviside(phi: np.ndarray, delta: float) -> np.ndarray:
    s = np.clip(phi / delta, -1.0, 1.0)
    return 0.5 * (1.0 + s + np.sin(np.pi * s) / np.pi)


def smoothed_heaviside_derivative(phi: np.ndarray, delta: float) -> np.ndarray:
    inside = np.abs(phi) < delta
    return np.where(inside, 0.5 / delta * (1.0 + np.cos(np.pi * phi / delta)), 0.0)


def levelset_gradient(grid: Grid, phi: np.ndarray) -> list:
    g = np.gradient(phi, grid.h)
    return [g] if grid.d == 1 else list(g)


def geometry_masks(grid: Grid, phi: np.ndarray, delta: float) -> tuple:
    """Return ``(chi_in, delta_gamma)`` for half-width ``delta`` (length units)."""
    if delta < grid.h * (1 - 1e-12):
        raise ValueError(f"mask width delta={delta} is below the grid spacing {grid.h}")
    chi_in = 1.0 - smoothed_heaviside(phi, delta)
    grad = levelset_gradient(grid, phi)
    norm = np.sqrt(sum(g * g for g in grad))
    delta_gamma = smoothed_heaviside_derivative(phi, delta) * norm
    return chi_in, delta_gamma


def region_volume(grid: Grid, phi: np.ndarray, delta: float = None) -> float:
    if delta is None:
        delta = 1.5 * grid.h
    return float(np.sum(1.0 - smoothed_heaviside(phi, delta)) * grid.cell_volume)


def ball_levelset(grid: Grid, center, radius: float) -> np.ndarray:
    x = grid.centers()
    return np.sqrt(sum((xi - c) ** 2 for xi, c in zip(x, center))) - radius


def gradient_band_ok(grid: Grid, phi: np.ndarray, delta: float, lo=0.5, hi=2.0) -> bool:
    grad = levelset_gradient(grid, phi)
    norm = np.sqrt(sum(g * g for g in grad))
    band = np.abs(phi) < 3 * delta
    return bool(np.all((norm[band] >= lo) & (norm[band] <= hi)))


def check_clearance(grid: Grid, phi: np.ndarray, margin_cells: int = 3) -> None:
    """Interior cells must stay ``margin_cells`` away from the box walls."""
    if grid.periodic:
        return
    inside = phi < 0
    if not inside.any():
        return
    m = margin_cells
    core = np.zeros(grid.shape, dtype=bool)
    core[(slice(m, grid.N - m),) * grid.d] = True
    if np.any(inside & ~core):
        raise ConfigurationError(
            f"tumor region comes within {m} cells of the reference box boundary"
        )


@numba.njit(cache=True)
def _sweep2d(u, fixed, h):
    n0, n1 = u.shape
    big = 1e30
    for sweep in range(4):
        r0 = range(n0) if sweep % 2 == 0 else range(n0 - 1, -1, -1)
        for i in r0:
            r1 = range(n1) if sweep < 2 else range(n1 - 1, -1, -1)
            for j in r1:
                if fixed[i, j]:
                    continue
                a = big
                if i > 0:
                    a = u[i - 1, j]
                if i < n0 - 1 and u[i + 1, j] < a:
                    a = u[i + 1, j]
                b = big
                if j > 0:
                    b = u[i, j - 1]
                if j < n1 - 1 and u[i, j + 1] < b:
                    b = u[i, j + 1]
                if a > b:
                    a, b = b, a
                if a >= big:
                    continue
                if b - a >= h:
                    cand = a + h
                else:
                    cand = 0.5 * (a + b + np.sqrt(2 * h * h - (a - b) ** 2))
                if cand < u[i, j]:
                    u[i, j] = cand


@numba.njit(cache=True)
def _sweep3d(u, fixed, h):
    n0, n1, n2 = u.shape
    big = 1e30
    for sweep in range(8):
        s0 = sweep & 1
        s1 = (sweep >> 1) & 1
        s2 = (sweep >> 2) & 1
        for ii in range(n0):
            i = ii if s0 == 0 else n0 - 1 - ii
            for jj in range(n1):
                j = jj if s1 == 0 else n1 - 1 - jj
                for kk in range(n2):
                    k = kk if s2 == 0 else n2 - 1 - kk
                    if fixed[i, j, k]:
                        continue
                    a = np.empty(3)
                    a[:] = big
                    if i > 0:
                        a[0] = u[i - 1, j, k]
                    if i < n0 - 1:
                        a[0] = min(a[0], u[i + 1, j, k])
                    if j > 0:
                        a[1] = u[i, j - 1, k]
                    if j < n1 - 1:
                        a[1] = min(a[1], u[i, j + 1, k])
                    if k > 0:
                        a[2] = u[i, j, k - 1]
                    if k < n2 - 1:
                        a[2] = min(a[2], u[i, j, k + 1])
                    a.sort()
                    if a[0] >= big:
                        continue
                    cand = a[0] + h
                    if cand > a[1]:
                        s = a[0] + a[1]
                        cand = 0.5 * (s + np.sqrt(2 * h * h - (a[0] - a[1]) ** 2))
                        if cand > a[2]:
                            s3 = a[0] + a[1] + a[2]
                            q = a[0] ** 2 + a[1] ** 2 + a[2] ** 2
                            cand = (s3 + np.sqrt(s3 * s3 - 3 * (q - h * h))) / 3.0
                    if cand < u[i, j, k]:
                        u[i, j, k] = cand


def reinitialize(grid: Grid, phi: np.ndarray, passes: int = 2) -> np.ndarray:
    """Rebuild ``phi`` as a signed distance by fast sweeping.

    Cells next to a sign change, plus one ring around them, are rescaled by
    the local gradient norm and frozen; the sweep fills in the rest.
    Freezing the second ring keeps the cubic backtrace near the interface
    from seeing first-order sweep errors.
    """
    sign = np.where(phi < 0, -1.0, 1.0)
    interface = np.zeros(grid.shape, dtype=bool)
    for a in range(grid.d):
        lo = [slice(None)] * grid.d
        hi = [slice(None)] * grid.d
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        change = sign[tuple(lo)] != sign[tuple(hi)]
        interface[tuple(lo)] |= change
        interface[tuple(hi)] |= change
    if not interface.any():
        return phi.copy()
    fixed = ndimage.binary_dilation(interface)
    grad = levelset_gradient(grid, phi)
    norm = np.maximum(np.sqrt(sum(g * g for g in grad)), 1e-12)
    u = np.full(grid.shape, 1e30)
    u[fixed] = np.abs(phi[fixed]) / norm[fixed]
    sweep = _sweep2d if grid.d == 2 else _sweep3d
    for _ in range(passes):
        sweep(u, fixed, grid.h)
    return sign * u
