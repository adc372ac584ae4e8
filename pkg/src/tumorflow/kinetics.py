"""Pointwise cell-phase kinetics.

Proliferating (P), quiescent (Q) and dead (D) densities exchange mass at
nutrient-dependent rates; the drug converts live cells to dead ones through
the response functions G_1, G_2.  Summing the three sources leaves only
births and clearance, ``K_B C P - K_R D``, which drives the divergence of
the tumor velocity.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core import ModelParams

CLAMP_TOL = 1e-10


class AdmissibilityError(ValueError):
    pass


class SourceTriple(NamedTuple):
    G_P: np.ndarray
    G_Q: np.ndarray
    G_D: np.ndarray

    def total(self) -> np.ndarray:
        return self.G_P + self.G_Q + self.G_D


def drug_response(kind: str, W, K_half: float = 0.5):
    W = np.asarray(W, dtype=float)
    if np.any(W < 0):
        raise AdmissibilityError("drug response needs W >= 0")
    if kind == "linear":
        return W.copy() if W.ndim else float(W)
    if kind == "saturating":
        out = W / (K_half + W)
        return out if W.ndim else float(out)
    raise ValueError(f"unknown drug response kind {kind!r}")


def sup_drug_response(kind: str, w_max: float, K_half: float = 0.5) -> float:
    """Supremum of G on ``[0, w_max]`` (both families are nondecreasing)."""
    return float(drug_response(kind, max(w_max, 0.0), K_half))


def _admit(name, x, lo, hi, scale):
    """Clamp round-off excursions, reject real ones with the offending cell."""
    x = np.asarray(x, dtype=float)
    tol = CLAMP_TOL * scale
    bad = (x < lo - tol) | ((x > hi + tol) if hi is not None else False)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise AdmissibilityError(f"{name}={x[idx]!r} outside admissible range at cell {idx}")
    if hi is None:
        return np.maximum(x, lo)
    return np.clip(x, lo, hi)


def compute_sources(P, Q, D, C, W, params: ModelParams, check: bool = True) -> SourceTriple:
    """Evaluate G_P, G_Q, G_D cellwise."""
    if check:
        rho = params.rho_f
        P = _admit("P", P, 0.0, rho, rho)
        Q = _admit("Q", Q, 0.0, rho, rho)
        D = _admit("D", D, 0.0, rho, rho)
        C = _admit("C", C, 0.0, params.C_bar, params.C_bar)
        W = _admit("W", W, 0.0, None, max(1.0, float(np.max(W, initial=0.0))))
    p = params
    starve = p.C_bar - C
    g1 = drug_response(p.drug_response_kind, W, p.K_half)
    g2 = g1  # both families share one response shape
    G_P = (p.K_B * C - p.K_Q * starve - p.K_A * starve) * P + p.K_P * C * Q - p.i_1 * g1 * P
    G_Q = p.K_Q * starve * P - (p.K_P * C + p.K_D * starve) * Q - p.i_2 * g2 * Q
    G_D = (p.K_A * starve * P + p.K_D * starve * Q - p.K_R * D
           + p.i_1 * g1 * P + p.i_2 * g2 * Q)
    return SourceTriple(G_P, G_Q, G_D)


def divergence_rhs(P, C, D, params: ModelParams) -> np.ndarray:
    """``(K_B C P - K_R D) / rho_f``, the velocity divergence the sources demand."""
    return (params.K_B * np.asarray(C) * np.asarray(P) - params.K_R * np.asarray(D)) / params.rho_f


def density_rate_bound(params: ModelParams, w_max: float) -> float:
    """Worst-case total rate Lambda over admissible states."""
    p = params
    sup_g = sup_drug_response(p.drug_response_kind, w_max, p.K_half)
    return (p.K_B * p.C_bar + (p.K_Q + p.K_A + p.K_P + p.K_D) * p.C_bar + p.K_R
            + p.i_1 * sup_g + p.i_2 * sup_g)


def nutrient_rate_bound(params: ModelParams) -> float:
    p = params
    return (p.K_1 * p.K_P + p.K_2 * p.K_Q) * p.C_bar * p.rho_f


def drug_rate_bound(params: ModelParams, w_max: float) -> float:
    p = params
    sup_g = sup_drug_response(p.drug_response_kind, w_max, p.K_half)
    return (p.mu_1 + p.mu_2) * sup_g * p.rho_f
