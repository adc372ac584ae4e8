"""Donor-cell transport of the three cell densities plus kinetic sources."""
from __future__ import annotations

from typing import Callable, Union

import numpy as np

from .core import Grid, ModelParams, NumericsParams, check_faces, check_scalar
from .kinetics import (SourceTriple, density_rate_bound, drug_rate_bound,
                       nutrient_rate_bound)


class SchemeError(RuntimeError):
    pass


class CFLViolation(SchemeError):
    pass


TINY_SPEED = 1e-300


def max_face_speed(v) -> float:
    return float(max((np.max(np.abs(c)) if c.size else 0.0) for c in v))


def stable_dt(grid: Grid, v, V, params: ModelParams, numerics: NumericsParams,
              w_max: float = 1.0) -> float:
    """Largest step allowed by transport CFL and every explicit reaction bound.

    ``w_max`` bounds the drug concentration (its initial supremum); the drug
    response supremum entering the rate bound is taken over ``[0, w_max]``.
    """
    speed = max(max_face_speed(v), max_face_speed(V) if V is not None else 0.0, TINY_SPEED)
    dt = numerics.cfl * grid.h / speed
    for lam in (density_rate_bound(params, w_max), nutrient_rate_bound(params),
                drug_rate_bound(params, w_max)):
        if lam > 0:
            dt = min(dt, 0.5 / lam)
    if numerics.dt_max > 0:
        dt = min(dt, numerics.dt_max)
    return float(dt)


def upwind_divergence(grid: Grid, rho: np.ndarray, v) -> np.ndarray:
    """``div_h(rho v)`` with donor-cell face values."""
    out = np.zeros(grid.shape)
    for a, comp in enumerate(v):
        if grid.periodic:
            right = rho
            left = np.roll(rho, 1, axis=a)
            vf = np.take(comp, range(0, grid.N), axis=a)
            flux = np.maximum(vf, 0) * left + np.minimum(vf, 0) * right
            out += (np.roll(flux, -1, axis=a) - flux) / grid.h
            continue
        pad = [(0, 0)] * grid.d
        pad[a] = (1, 1)
        rp = np.pad(rho, pad)
        left = np.take(rp, range(0, grid.N + 1), axis=a)
        right = np.take(rp, range(1, grid.N + 2), axis=a)
        flux = np.maximum(comp, 0) * left + np.minimum(comp, 0) * right
        out += np.diff(flux, axis=a) / grid.h
    return out


def outflow_courant(grid: Grid, v, dt: float) -> float:
    """Max over cells of ``dt/h * sum of outgoing face speeds``."""
    out = np.zeros(grid.shape)
    for a, comp in enumerate(v):
        if grid.periodic:
            lo = np.take(comp, range(0, grid.N), axis=a)
            hi = np.roll(lo, -1, axis=a)
        else:
            lo = np.take(comp, range(0, grid.N), axis=a)
            hi = np.take(comp, range(1, grid.N + 1), axis=a)
        out += np.maximum(hi, 0) + np.maximum(-lo, 0)
    return float(out.max() * dt / grid.h)


SourceArg = Union[SourceTriple, Callable[[np.ndarray, np.ndarray, np.ndarray], SourceTriple]]


def step_densities(grid: Grid, P, Q, D, v, sources: SourceArg, dt: float,
                   params: ModelParams, renormalize_D: bool = False) -> tuple:
    """Advect P, Q, D by ``v``, then add ``dt * sources``.

    ``sources`` is either a precomputed :class:`SourceTriple` or a callable
    ``f(P, Q, D) -> SourceTriple``; the callable form is evaluated on the
    advected densities, which keeps every loss term proportional to the
    value it depletes.  Returns ``(P', Q', D', info)``.
    """
    P, Q, D = (check_scalar(grid, f, n) for f, n in ((P, "P"), (Q, "Q"), (D, "D")))
    v = check_faces(grid, v, "v")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    cou = outflow_courant(grid, v, dt)
    if cou > 1.0 + 1e-12:
        raise CFLViolation(f"outflow Courant number {cou:.4f} exceeds 1")
    adv = [f - dt * upwind_divergence(grid, f, v) for f in (P, Q, D)]
    src = sources(*adv) if callable(sources) else sources
    out = [a + dt * s for a, s in zip(adv, src)]
    info = {"courant": cou, "renorm": 0.0}
    if renormalize_D:
        target = np.maximum(params.rho_f - out[0] - out[1], 0.0)
        info["renorm"] = float(np.max(np.abs(target - out[2]), initial=0.0))
        out[2] = target
    floor = -1e-10 * params.rho_f
    for name, f in zip("PQD", out):
        if f.size and f.min() < floor:
            idx = tuple(int(i) for i in np.unravel_index(np.argmin(f), f.shape))
            raise SchemeError(f"density {name} went negative ({f.min():.3e}) at cell {idx}")
    return out[0], out[1], out[2], info
