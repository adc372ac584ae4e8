"""Weak-form residuals and the parameter/refinement studies.

Test functions are tensor-product bumps ``prod_k (1 - s_k^2)^4`` times a
quadratic time factor that vanishes at the final time.  Integrals use the
midpoint rule in space and the trapezoid rule over snapshot times.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .config import SimulationConfig
from .core import ConfigurationError, Grid, faces_to_centers, integrate_scalar, replace
from .flow import boundary_flux_defect
from .geometry import geometry_masks
from .kinetics import compute_sources
from .reactdiff import drug_reaction, nutrient_reaction
from .scheme import run_simulation

IDENTITIES = ("transport_P", "transport_Q", "transport_D", "darcy", "nutrient", "drug")
MIN_SNAPSHOTS = 16
MAX_CELLS = 1 << 22


class SupportError(ValueError):
    pass


def _bump(s):
    """``(1 - s^2)^4`` and its first two derivatives, zero for ``|s| >= 1``."""
    inside = np.abs(s) < 1
    q = np.where(inside, 1 - s * s, 0.0)
    b = q**4
    db = -8 * s * q**3
    d2b = -8 * q**3 + 48 * s * s * q**2
    return b, np.where(inside, db, 0.0), np.where(inside, d2b, 0.0)


@dataclass(frozen=True)
class TestFunction:
    center: tuple
    radius: float
    beta: float  # time factor (1 - t/T)(1 + beta t/T)
    direction: tuple  # unit vector for the vector-valued (Darcy) variant
    T: float

    __test__ = False  # not a pytest class

    def time_factor(self, t: float) -> tuple:
        s = t / self.T
        th = (1 - s) * (1 + self.beta * s)
        dth = (-(1 + self.beta * s) + (1 - s) * self.beta) / self.T
        return th, dth

    def spatial(self, grid: Grid) -> dict:
        """Bump value, gradient and Laplacian at the cell centers."""
        x = grid.centers()
        parts = [_bump((xi - c) / self.radius) for xi, c in zip(x, self.center)]
        val = np.prod([p[0] for p in parts], axis=0)
        grad, lap = [], np.zeros(grid.shape)
        for k in range(grid.d):
            others = np.prod([parts[j][0] for j in range(grid.d) if j != k], axis=0)
            grad.append(parts[k][1] / self.radius * others)
            lap += parts[k][2] / self.radius**2 * others
        return {"val": val, "grad": grad, "lap": lap}

    def support(self, grid: Grid) -> np.ndarray:
        x = grid.centers()
        mask = np.ones(grid.shape, dtype=bool)
        for xi, c in zip(x, self.center):
            mask &= np.abs(xi - c) < self.radius + 0.5 * grid.h
        return mask

    def scaled(self, factor: float) -> "ScaledTestFunction":
        return ScaledTestFunction(self, factor)


@dataclass(frozen=True)
class ScaledTestFunction:
    base: TestFunction
    factor: float

    def __getattr__(self, name):
        return getattr(self.base, name)

    def time_factor(self, t):
        th, dth = self.base.time_factor(t)
        return self.factor * th, self.factor * dth

    def spatial(self, grid):
        return self.base.spatial(grid)

    def support(self, grid):
        return self.base.support(grid)


def _clearance(grid: Grid, trajectory, delta: float) -> np.ndarray:
    """Distance-like margin ``min_t (-phi) - 2 delta`` over all snapshots."""
    return np.min([-s.phi for s in trajectory], axis=0) - 2 * delta


def check_support(tf, grid: Grid, trajectory, delta: float) -> None:
    sup = tf.support(grid)
    for s in trajectory:
        if np.any(s.phi[sup] > -2 * delta):
            raise SupportError(f"test function at {tf.center} leaves the tumor core at t={s.t:.4g}")


def make_test_functions(seed: int, count: int, trajectory, grid: Grid, delta: float,
                        r_min: float = None, r_max: float = None, attempts: int = 2000) -> list:
    if count == 0:
        return []
    if not trajectory:
        raise ValueError("empty trajectory")
    rng = np.random.default_rng(seed)
    T = trajectory[-1].t
    margin = _clearance(grid, trajectory, delta) - 0.5 * grid.h
    r_min = 3 * grid.h if r_min is None else r_min
    r_max = 0.25 * grid.L if r_max is None else r_max
    root_d = math.sqrt(grid.d)
    ok = np.argwhere(margin > r_min * root_d)
    if len(ok) == 0:
        raise SupportError("tumor core too small to place test-function supports")
    x = grid.centers()
    out = []
    for _ in range(attempts):
        cell = tuple(ok[rng.integers(len(ok))])
        c = tuple(float(xi[cell]) for xi in x)
        hi = min(r_max, margin[cell] / root_d)
        r = float(rng.uniform(r_min, hi))
        direction = rng.normal(size=grid.d)
        direction /= np.linalg.norm(direction)
        tf = TestFunction(c, r, float(rng.uniform(0.0, 1.0)), tuple(float(a) for a in direction), T)
        try:
            check_support(tf, grid, trajectory, delta)
        except SupportError:
            continue
        out.append(tf)
        if len(out) == count:
            return out
    raise SupportError(f"could only place {len(out)} of {count} test functions")


def _trapezoid(times, values) -> float:
    return float(trapezoid(values, times)) if len(times) > 1 else 0.0


def weak_residuals(grid: Grid, trajectory, testfns, which: str, cfg: SimulationConfig) -> list:
    """Normalized residual of one integral identity for each test function."""
    if which not in IDENTITIES:
        raise ValueError(f"unknown identity {which!r}; choose from {IDENTITIES}")
    if len(trajectory) < MIN_SNAPSHOTS:
        raise ValueError(f"need at least {MIN_SNAPSHOTS} snapshots, got {len(trajectory)}")
    delta = cfg.numerics.delta_length(grid)
    p = cfg.model
    times = np.array([s.t for s in trajectory])
    out = []
    for tf in testfns:
        check_support(tf, grid, trajectory, delta)
        sp = tf.spatial(grid)
        terms = []  # integrals whose signed sum is the residual
        if which == "darcy":
            rows = []
            for s in trajectory:
                th, _ = tf.time_factor(s.t)
                vc = faces_to_centers(s.v)
                psi = [sp["val"] * e for e in tf.direction]
                div_psi = sum(g * e for g, e in zip(sp["grad"], tf.direction))
                a = integrate_scalar(grid, s.sigma * div_psi)
                b = -p.friction * sum(integrate_scalar(grid, vi * pi) for vi, pi in zip(vc, psi))
                c = p.mu * sum(integrate_scalar(grid, vi * sp["lap"] * e)
                               for vi, e in zip(vc, tf.direction))
                rows.append((th * a, th * b, th * c))
            rows = np.array(rows)
            terms = [_trapezoid(times, rows[:, k]) for k in range(3)]
        else:
            rows = []
            for s in trajectory:
                th, dth = tf.time_factor(s.t)
                if which.startswith("transport"):
                    name = which[-1]
                    f = getattr(s, name)
                    src = compute_sources(s.P, s.Q, s.D, s.C, s.W, p)
                    g = getattr(src, f"G_{name}")
                    vc = faces_to_centers(s.v)
                    adv = sum(vi * gi for vi, gi in zip(vc, sp["grad"]))
                    rows.append((dth * integrate_scalar(grid, f * sp["val"]),
                                 th * integrate_scalar(grid, f * adv),
                                 th * integrate_scalar(grid, g * sp["val"])))
                else:
                    f, nu, react = ((s.C, p.nu_1, nutrient_reaction(s.C, s.P, s.Q, p))
                                    if which == "nutrient" else
                                    (s.W, p.nu_2, drug_reaction(np.maximum(s.W, 0), s.P, s.Q, p)))
                    rows.append((dth * integrate_scalar(grid, f * sp["val"]),
                                 th * nu * integrate_scalar(grid, f * sp["lap"]),
                                 -th * integrate_scalar(grid, react * sp["val"])))
            rows = np.array(rows)
            field_name = {"nutrient": "C", "drug": "W"}.get(which, which[-1])
            th0, _ = tf.time_factor(trajectory[0].t)
            thT, _ = tf.time_factor(trajectory[-1].t)
            f0 = getattr(trajectory[0], field_name)
            fT = getattr(trajectory[-1], field_name)
            left = [thT * integrate_scalar(grid, fT * sp["val"]),
                    -th0 * integrate_scalar(grid, f0 * sp["val"])]
            right = [_trapezoid(times, rows[:, k]) for k in range(3)]
            terms = left + [-r for r in right]
        total = abs(sum(terms))
        scale = sum(abs(t) for t in terms)
        out.append(total / scale if scale > 0 else 0.0)
    return out


# ------------------------------------------------------------------ studies

def fit_slope(x: Sequence[float], y: Sequence[float]) -> tuple:
    """Least-squares slope of ``log y`` against ``log x`` and its rms misfit."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    good = (x > 0) & (y > 0)
    if len(np.unique(x[good])) < 2:
        return float("nan"), float("nan")
    lx, ly = np.log(x[good]), np.log(y[good])
    coef = np.polyfit(lx, ly, 1)
    misfit = float(np.sqrt(np.mean((np.polyval(coef, lx) - ly) ** 2)))
    return float(coef[0]), misfit


@dataclass
class StudyReport:
    kind: str
    parameters: list
    metrics: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.metrics)
        w.writerow([self.kind] + names)
        for i, par in enumerate(self.parameters):
            w.writerow([repr(par)] + [repr(float(self.metrics[n][i])) for n in names])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"{self.kind} study over {self.parameters}"]
        for name, vals in self.metrics.items():
            lines.append(f"  {name}: " + ", ".join(f"{float(v):.4e}" for v in vals))
        for name, (s, r) in self.slopes.items():
            lines.append(f"  slope[{name}] = {s:.3f} (fit misfit {r:.2e})")
        for name, ok in self.checks.items():
            lines.append(f"  {'PASS' if ok else 'FAIL'} {name}")
        return "\n".join(lines)


def _l2_faces(grid, a, b, w):
    return math.sqrt(sum(integrate_scalar(grid, (x - y) ** 2, w)
                         for x, y in zip(faces_to_centers(a), faces_to_centers(b))))


def mu_sweep(cfg: SimulationConfig, mus: Sequence[float]) -> StudyReport:
    mus = [float(m) for m in mus]
    if not mus or mus[-1] != 0.0 or any(a < b for a, b in zip(mus, mus[1:])):
        raise ValueError("mu list must be sorted descending and end at 0")
    runs = {}
    for m in mus:
        if m not in runs:
            runs[m] = run_simulation(replace(cfg, model=replace(cfg.model, mu=m)),
                                     keep_snapshots=False)
    grid = cfg.make_grid()
    ref = runs[0.0].state
    chi, _ = geometry_masks(grid, ref.phi, cfg.numerics.delta_length(grid))
    rep = StudyReport("mu", mus)
    rep.metrics["v_diff"] = [_l2_faces(grid, runs[m].state.v, ref.v, chi) for m in mus]
    for name in "PQDCW":
        rep.metrics[f"{name}_diff"] = [
            math.sqrt(integrate_scalar(grid, (getattr(runs[m].state, name) - getattr(ref, name)) ** 2))
            for m in mus]
    rep.metrics["energy"] = [runs[m].diagnostics[-1].energy_flow for m in mus]
    pos = [i for i, m in enumerate(mus) if m > 0]
    vd = [rep.metrics["v_diff"][i] for i in pos]
    rep.slopes["v_diff"] = fit_slope([mus[i] for i in pos], vd)
    distinct = [vd[i] for i in range(len(vd)) if i == 0 or mus[pos[i]] != mus[pos[i - 1]]]
    rep.checks["v_diff strictly decreasing"] = all(a > b for a, b in zip(distinct, distinct[1:]))
    if vd:
        rep.checks["final v_diff <= 10% of first"] = vd[-1] <= 0.1 * vd[0] or len(distinct) < 2
    en = rep.metrics["energy"]
    rep.checks["energy within factor 2"] = max(en) < 2 * min(en) if min(en) > 0 else max(en) == 0
    rep.checks["all runs passed monitors"] = all(r.monitors.get("finite", False) for r in runs.values())
    return rep


def eps_sweep(cfg: SimulationConfig, epss: Sequence[float]) -> StudyReport:
    epss = [float(e) for e in epss]
    if len(epss) < 4:
        raise ValueError("need ≥ 4 values of eps")
    if any(a <= b for a, b in zip(epss, epss[1:])):
        raise ValueError("eps list must be strictly descending")
    J = []
    for e in epss:
        res = run_simulation(replace(cfg, numerics=replace(cfg.numerics, eps=e)),
                             keep_snapshots=False)
        J.append(res.diagnostics[-1].flux_defect)
    rep = StudyReport("eps", epss, {"J": J, "J_over_eps": [j / e for j, e in zip(J, epss)]})
    if all(j == 0 for j in J):
        rep.slopes["J"] = (float("nan"), 0.0)
        rep.checks["J monotone nonincreasing"] = True
        rep.checks["slope >= 0.8"] = True
        return rep
    rep.slopes["J"] = fit_slope(epss, J)
    rep.checks["J monotone nonincreasing"] = all(a >= b for a, b in zip(J, J[1:]))
    rep.checks["slope >= 0.8"] = rep.slopes["J"][0] >= 0.8
    return rep


def level_config(cfg: SimulationConfig, level: int) -> SimulationConfig:
    """``cfg`` refined ``level`` times: h, snapshot spacing and dt caps halve."""
    f = 2**level
    return replace(cfg,
                   grid=replace(cfg.grid, N=cfg.grid.N * f),
                   numerics=replace(cfg.numerics, dt_max=cfg.numerics.dt_max / f),
                   time=replace(cfg.time, snapshot_dt=cfg.time.snapshot_dt / f))


def refinement_study(cfg: SimulationConfig, levels: int = 3, seed: int = None,
                     count: int = 8, identities=IDENTITIES) -> StudyReport:
    if levels < 3:
        raise ValueError("refinement study needs at least 3 levels")
    if (cfg.grid.N * 2 ** (levels - 1)) ** cfg.grid.d > MAX_CELLS:
        raise ConfigurationError(f"finest level exceeds the size guard of {MAX_CELLS} cells")
    if cfg.time.snapshot_dt <= 0 or cfg.time.T / cfg.time.snapshot_dt < MIN_SNAPSHOTS - 1:
        raise ConfigurationError(f"refinement needs snapshot_dt <= T/{MIN_SNAPSHOTS - 1}")
    seed = cfg.seed if seed is None else seed
    runs = [run_simulation(level_config(cfg, k)) for k in range(levels)]
    coarse = cfg.make_grid()
    delta0 = cfg.numerics.delta_length(coarse)
    tfs = make_test_functions(seed, count, runs[0].snapshots, coarse, delta0, r_min=1.5 * coarse.h)
    hs = [cfg.grid.L / (cfg.grid.N * 2**k) for k in range(levels)]
    rep = StudyReport("refine", [cfg.grid.N * 2**k for k in range(levels)])
    rep.metrics["h"] = hs
    for which in identities:
        vals = []
        for k, run in enumerate(runs):
            g = level_config(cfg, k).make_grid()
            vals.append(float(np.mean(weak_residuals(g, run.snapshots, tfs, which,
                                                     level_config(cfg, k)))) if tfs else 0.0)
        rep.metrics[which] = vals
        if all(v == 0 for v in vals):
            rep.checks[f"{which} order >= 0.8"] = True
            continue
        rep.slopes[which] = fit_slope(hs, vals)
        rep.checks[f"{which} order >= 0.8"] = rep.slopes[which][0] >= 0.8
    vol = [abs(r.diagnostics[-1].volume - r.diagnostics[0].volume) / r.diagnostics[0].volume
           if r.diagnostics[0].volume > 0 else 0.0 for r in runs]
    rep.metrics["volume_error"] = vol
    if any(v > 0 for v in vol):
        rep.slopes["volume_error"] = fit_slope(hs, vol)
    rep.testfunctions = tfs
    rep.runs = runs
    return rep


def rotation_volume_study(levels: Sequence[int] = (32, 64, 128), center=(0.5, 0.7),
                          radius: float = 0.15, turns: float = 1.0, cfl: float = 0.4,
                          reinit_every: int = 20) -> StudyReport:
    """Level set alone under rigid rotation about the box center, ``turns`` revolutions."""
    from .core import make_grid
    from .geometry import (DomainMotion, advect_levelset, ball_levelset, region_volume,
                           reinitialize)
    motion = DomainMotion("rigid_rotation", (0.5, 0.5), 2 * math.pi, 0.0, 0.42, 0.48)
    T = turns
    errs = []
    shape_err = []
    for N in levels:
        g = make_grid(2, 1.0, N)
        phi0 = ball_levelset(g, center, radius)
        phi = phi0.copy()
        nsteps = int(math.ceil(T / (cfl * g.h / motion.max_speed())))
        dt = T / nsteps
        for n in range(nsteps):
            phi = advect_levelset(g, phi, motion, n * dt, dt)
            if reinit_every and (n + 1) % reinit_every == 0:
                phi = reinitialize(g, phi)
        v0, v1 = region_volume(g, phi0), region_volume(g, phi)
        errs.append(abs(v1 - v0) / v0)
        near = np.abs(phi0) < 3 * g.h
        shape_err.append(float(np.max(np.abs(phi - phi0)[near])) / g.h)
    rep = StudyReport("rotation", list(levels), {"volume_error": errs, "shape_error_h": shape_err})
    rep.slopes["volume_error"] = fit_slope([1.0 / n for n in levels], errs)
    return rep
