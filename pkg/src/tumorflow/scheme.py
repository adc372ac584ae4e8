"""One coupled time step and the run loop.

Per step, in this fixed order: masks from phi, divergence source and its
compatible projection, velocity solve, step size, density transport,
nutrient and drug updates, level-set advection (with periodic
reinitialization), zeroing of every field outside the tumor.  The flow is
re-solved for each stored state so a snapshot always carries the
velocity and pressure that belong to its densities.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import SimulationConfig, validate_config
from .core import Grid, integrate_scalar
from .flow import (FlowOperator, boundary_flux_defect, faces_to_centers, flow_energy,
                   project_source_compatible, solve_velocity)
from .geometry import (DomainMotion, advect_levelset, ball_levelset, check_clearance,
                       geometry_masks, region_volume, reinitialize)
from .kinetics import compute_sources, divergence_rhs
from .reactdiff import DIRICHLET_CUTOFF, step_drug, step_nutrient
from .transport import stable_dt, step_densities

log = logging.getLogger(__name__)

BOUND_TOL = 1e-10
CORE_BAND = 3.0  # drift is measured where phi <= -CORE_BAND * delta


class SimulationError(RuntimeError):
    def __init__(self, step: int, cause: Exception, diagnostics=None):
        self.step = step
        self.cause = cause
        self.diagnostics = diagnostics or []
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")


@dataclass
class State:
    t: float
    P: np.ndarray
    Q: np.ndarray
    D: np.ndarray
    C: np.ndarray
    W: np.ndarray
    v: tuple
    sigma: np.ndarray
    phi: np.ndarray
    step: int = 0

    def copy(self) -> "State":
        return State(self.t, self.P.copy(), self.Q.copy(), self.D.copy(), self.C.copy(),
                     self.W.copy(), tuple(c.copy() for c in self.v), self.sigma.copy(),
                     self.phi.copy(), self.step)

    def scalars(self) -> dict:
        return {"P": self.P, "Q": self.Q, "D": self.D, "C": self.C, "W": self.W,
                "sigma": self.sigma, "phi": self.phi}


@dataclass
class DiagnosticsRecord:
    t: float
    step: int = 0
    dt: float = 0.0
    drift: float = 0.0
    volume: float = 0.0
    flux_defect: float = 0.0
    compat_defect: float = 0.0
    energy_flow: float = 0.0
    energy_C: float = 0.0
    energy_W: float = 0.0
    sigma_L2: float = 0.0
    slip_rms: float = 0.0
    renorm: float = 0.0
    iterations: int = 0
    ranges: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {k: v for k, v in dataclasses.asdict(self).items() if k != "ranges"}
        for name, (lo, hi) in self.ranges.items():
            out[f"{name}_min"] = lo
            out[f"{name}_max"] = hi
        return out

    def finite(self) -> bool:
        return all(math.isfinite(float(x)) for x in self.row().values())


@dataclass
class SimulationResult:
    state: State
    snapshots: list
    diagnostics: list
    config: SimulationConfig
    monitors: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.monitors.values())


def initial_state(cfg: SimulationConfig, grid: Grid) -> State:
    ini = cfg.initial
    rho = cfg.model.rho_f
    phi = ball_levelset(grid, ini.center, ini.radius)
    check_clearance(grid, phi)
    chi, _ = geometry_masks(grid, phi, cfg.numerics.delta_length(grid))
    free = chi >= DIRICHLET_CUTOFF
    chi = np.where(free, chi, 0.0)
    # sharp densities keep P + Q + D = rho_f on every cell that carries mass
    ind = free.astype(float)
    return State(0.0, ini.alpha_P * rho * ind, ini.alpha_Q * rho * ind, ini.alpha_D * rho * ind,
                 ini.c0 * chi, ini.w0 * chi, grid.zero_faces(), grid.zeros(), phi)


def drift(grid: Grid, state: State, rho_f: float, delta: float) -> float:
    core = state.phi <= -CORE_BAND * delta
    total = state.P + state.Q + state.D
    if not core.any() or not np.any(total > 0):
        return 0.0
    return float(np.max(np.abs(total[core] - rho_f)))


def collect_diagnostics(grid: Grid, state: State, chi_in, delta_gamma, V, cfg: SimulationConfig,
                        compat_defect: float = 0.0, iterations: int = 0, dt: float = 0.0,
                        renorm: float = 0.0) -> DiagnosticsRecord:
    p = cfg.model
    delta = cfg.numerics.delta_length(grid)
    rec = DiagnosticsRecord(t=state.t, step=state.step, dt=dt, compat_defect=compat_defect,
                            iterations=iterations, renorm=renorm)
    rec.drift = drift(grid, state, p.rho_f, delta)
    rec.volume = region_volume(grid, state.phi, delta)
    if np.any(delta_gamma > 0):
        rec.flux_defect = boundary_flux_defect(grid, state.v, V, delta_gamma, state.phi)
        vc, Vc = faces_to_centers(state.v), faces_to_centers(V)
        slip2 = sum((a - b) ** 2 for a, b in zip(vc, Vc))
        gam = integrate_scalar(grid, np.ones(grid.shape), delta_gamma)
        rec.slip_rms = math.sqrt(integrate_scalar(grid, slip2, delta_gamma) / gam) if gam > 0 else 0.0
    rec.energy_flow = flow_energy(grid, state.v, chi_in, p)
    rec.energy_C = 0.5 * integrate_scalar(grid, state.C**2)
    rec.energy_W = 0.5 * integrate_scalar(grid, state.W**2)
    rec.sigma_L2 = math.sqrt(integrate_scalar(grid, state.sigma**2, chi_in))
    rec.ranges = {k: (float(f.min()), float(f.max())) for k, f in state.scalars().items()}
    speed = max(float(np.abs(c).max()) for c in state.v)
    rec.ranges["speed"] = (0.0, speed)
    return rec


class Simulator:
    """Holds the run configuration and advances a :class:`State`."""

    def __init__(self, cfg: SimulationConfig):
        self.cfg = validate_config(cfg)
        self.grid = cfg.make_grid()
        self.delta = cfg.numerics.delta_length(self.grid)
        self.w_bar = cfg.initial.w0

    def masks(self, phi):
        return geometry_masks(self.grid, phi, self.delta)

    def solve_flow(self, state: State, chi_in):
        cfg, grid = self.cfg, self.grid
        V = cfg.motion.face_velocity(grid, state.t)
        g = divergence_rhs(state.P, state.C, state.D, cfg.model)
        g_tilde, defect = project_source_compatible(grid, g, chi_in)
        op = FlowOperator(grid, chi_in, cfg.model, cfg.numerics.eps, cfg.numerics.eta)
        sol = solve_velocity(grid, chi_in, g_tilde, V, cfg.model, cfg.numerics, op)
        state.v, state.sigma = sol.v, sol.sigma
        return V, defect, sol.iterations

    def step(self, state: State, chi_in, V, t_stop: float) -> tuple:
        """Advance ``state`` (whose flow is current) to at most ``t_stop``."""
        cfg, grid, p, num = self.cfg, self.grid, self.cfg.model, self.cfg.numerics
        dt = stable_dt(grid, state.v, V, p, num, self.w_bar)
        if state.t + dt >= t_stop - 1e-12 * max(1.0, t_stop):
            dt = t_stop - state.t
        C0, W0 = state.C, state.W

        def sources(P, Q, D):
            return compute_sources(P, Q, D, C0, W0, p)

        P, Q, D, info = step_densities(grid, state.P, state.Q, state.D, state.v, sources, dt, p,
                                       num.renormalize_D)
        C = step_nutrient(grid, C0, state.P, state.Q, dt, chi_in, p, num)
        W = step_drug(grid, W0, state.P, state.Q, dt, chi_in, p, num)
        phi = advect_levelset(grid, state.phi, cfg.motion, state.t, dt, num.interp_order)
        n = state.step + 1
        if num.reinit_every and n % num.reinit_every == 0:
            phi = reinitialize(grid, phi)
        check_clearance(grid, phi)
        new_chi, new_dg = self.masks(phi)
        off = new_chi < DIRICHLET_CUTOFF
        for f in (P, Q, D, C, W):
            f[off] = 0.0
        t_new = t_stop if dt == t_stop - state.t else state.t + dt
        new = State(t_new, P, Q, D, C, W, state.v, state.sigma, phi, n)
        return new, new_chi, new_dg, dt, info["renorm"]


def _snapshot_times(cfg: SimulationConfig) -> list:
    T, cad = cfg.time.T, cfg.time.snapshot_dt
    if cad <= 0:
        return [T]
    k = int(math.floor(T / cad + 1e-9))
    times = [cad * i for i in range(1, k + 1)]
    if not times or abs(times[-1] - T) > 1e-12 * T:
        times.append(T)
    else:
        times[-1] = T
    return times


def run_simulation(cfg: SimulationConfig, initial: Optional[State] = None,
                   keep_snapshots: bool = True) -> SimulationResult:
    """Run to ``cfg.time.T``; snapshots land on multiples of ``snapshot_dt``."""
    sim = Simulator(cfg)
    grid = sim.grid
    state = initial.copy() if initial is not None else initial_state(cfg, grid)
    sim.w_bar = float(state.W.max()) if state.W.size else 0.0
    targets = _snapshot_times(cfg)
    diags, snaps = [], []
    chi, dg = sim.masks(state.phi)
    k = 0
    try:
        V, defect, iters = sim.solve_flow(state, chi)
        diags.append(collect_diagnostics(grid, state, chi, dg, V, cfg, defect, iters))
        if keep_snapshots:
            snaps.append(state.copy())
        while k < len(targets):
            state, chi, dg, dt, renorm = sim.step(state, chi, V, targets[k])
            V, defect, iters = sim.solve_flow(state, chi)
            diags.append(collect_diagnostics(grid, state, chi, dg, V, cfg, defect, iters, dt,
                                             renorm))
            if state.t == targets[k]:
                k += 1
                if keep_snapshots:
                    snaps.append(state.copy())
    except Exception as exc:  # noqa: BLE001 - rewrapped with step context
        raise SimulationError(state.step, exc, diags) from exc
    if not keep_snapshots:
        snaps = [state.copy()]
    result = SimulationResult(state, snaps, diags, cfg)
    result.monitors = evaluate_monitors(result, sim.w_bar)
    return result


def evaluate_monitors(result: SimulationResult, w_bar: float) -> dict:
    cfg = result.config
    rho, cbar = cfg.model.rho_f, cfg.model.C_bar
    d = result.diagnostics
    lo = -BOUND_TOL * rho
    hi = rho * (1 + BOUND_TOL)
    dens = all(r.ranges[k][0] >= lo and r.ranges[k][1] <= hi for r in d for k in "PQD")
    conc = all(r.ranges["C"][0] >= -BOUND_TOL and r.ranges["C"][1] <= cbar + BOUND_TOL
               and r.ranges["W"][0] >= -BOUND_TOL and r.ranges["W"][1] <= w_bar + BOUND_TOL
               for r in d)
    vol0 = d[0].volume
    vol = max(abs(r.volume - vol0) for r in d) <= 0.01 * vol0 if vol0 > 0 else True
    out = {"finite": all(r.finite() for r in d), "density_bounds": dens,
           "concentration_bounds": conc, "volume": vol}
    if cfg.model.K_B == 0 and cfg.model.K_R == 0:
        # the mixture constraint is only conserved when mass production vanishes
        out["drift"] = max(r.drift for r in d) <= 1e-6 * rho
    return out


def max_drift(result: SimulationResult) -> float:
    return max(r.drift for r in result.diagnostics)
