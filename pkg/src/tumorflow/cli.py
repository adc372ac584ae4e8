"""Command-line entry point.

    tumorflow simulate CONFIG [--out DIR]
    tumorflow study mu CONFIG --mus 0.1 0.01 0.001 0.0001 0
    tumorflow study eps CONFIG --epss 0.1 0.01 0.001 0.0001
    tumorflow study refine CONFIG --levels 3 [--seed S --count M]
    tumorflow verify SNAPSHOT_DIR --seed S --count M [--rmin CELLS]
    tumorflow export SNAPSHOT --format vtk|csv [--out DIR]
    tumorflow template {default,orbit,growth}

Output lands under ``$TUMORFLOW_OUTPUT`` (default ``./tumorflow_out``)
unless ``--out`` is given.  The exit status is 0 only when every monitor
or study check passed.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import SCENARIOS, load_config, render_config
from .core import ConfigurationError
from .scheme import SimulationError, run_simulation
from .storage import (export_fields, read_snapshot, write_diagnostics_csv, write_snapshot)
from .verify import (IDENTITIES, SupportError, eps_sweep, make_test_functions, mu_sweep,
                     refinement_study, weak_residuals)

OUTPUT_ENV = "TUMORFLOW_OUTPUT"
log = logging.getLogger("tumorflow")


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "tumorflow_out"))


def _outdir(args, name: str) -> Path:
    out = Path(args.out) if getattr(args, "out", None) else output_root() / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(args, Path(args.config).stem)
    try:
        res = run_simulation(cfg)
    except SimulationError as exc:
        write_diagnostics_csv(exc.diagnostics, out / "diagnostics.csv")
        print(f"simulation failed at {exc}", file=sys.stderr)
        return 2
    grid = cfg.make_grid()
    h = cfg.params_hash()
    (out / "config.toml").write_text(render_config(cfg), encoding="utf-8")
    for i, s in enumerate(res.snapshots):
        write_snapshot(s, grid, out / f"snap_{i:05d}.tflo", h)
    write_diagnostics_csv(res.diagnostics, out / "diagnostics.csv")
    (out / "monitors.json").write_text(json.dumps(res.monitors, indent=2) + "\n")
    for name, ok in res.monitors.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"{len(res.snapshots)} snapshots, {res.state.step} steps, t = {res.state.t:.6g} -> {out}")
    return 0 if res.passed else 1


def _report(rep, out: Path) -> int:
    (out / f"study_{rep.kind}.csv").write_text(rep.to_csv(), encoding="utf-8")
    print(rep.summary())
    return 0 if rep.passed else 1


def cmd_study(args) -> int:
    cfg = load_config(args.config)
    if args.kind == "mu":
        rep = mu_sweep(cfg, args.mus)
    elif args.kind == "eps":
        rep = eps_sweep(cfg, args.epss)
    else:
        rep = refinement_study(cfg, args.levels, args.seed, args.count)
    return _report(rep, _outdir(args, f"{Path(args.config).stem}_{args.kind}"))


def cmd_verify(args) -> int:
    snapdir = Path(args.snapshot_dir)
    cfg = load_config(snapdir / "config.toml")
    grid = cfg.make_grid()
    files = sorted(snapdir.glob("snap_*.tflo"))
    traj = [read_snapshot(f, grid)[0] for f in files]
    if not traj:
        print(f"no snapshots in {snapdir}", file=sys.stderr)
        return 2
    delta = cfg.numerics.delta_length(grid)
    tfs = make_test_functions(args.seed, args.count, traj, grid, delta, r_min=args.rmin * grid.h)
    rows = []
    ok = True
    for which in IDENTITIES:
        res = weak_residuals(grid, traj, tfs, which, cfg)
        rows.append((which, res))
        good = all(np.isfinite(res))
        ok &= good
        worst = max(res) if res else 0.0
        print(f"{'PASS' if good else 'FAIL'} {which}: mean {np.mean(res) if res else 0:.4e} "
              f"max {worst:.4e}")
    out = _outdir(args, snapdir.name + "_verify")
    with open(out / "residuals.csv", "w", encoding="utf-8") as fh:
        fh.write("identity," + ",".join(f"tf{i}" for i in range(len(tfs))) + "\n")
        for which, res in rows:
            fh.write(which + "," + ",".join(repr(float(r)) for r in res) + "\n")
    return 0 if ok else 1


def cmd_export(args) -> int:
    state, grid, _ = read_snapshot(args.snapshot)
    out = Path(args.out) if args.out else Path(args.snapshot).parent / "export"
    files = export_fields(state, grid, out, args.format, Path(args.snapshot).stem)
    print(f"wrote {len(files)} files to {out}")
    return 0


def cmd_template(args) -> int:
    sys.stdout.write(render_config(SCENARIOS[args.scenario]()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tumorflow", description="Penalized tumor-growth simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one configuration")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="mu-, eps- or refinement study")
    ss = p.add_subparsers(dest="kind", required=True)
    q = ss.add_parser("mu")
    q.add_argument("config")
    q.add_argument("--mus", type=float, nargs="+", required=True)
    q = ss.add_parser("eps")
    q.add_argument("config")
    q.add_argument("--epss", type=float, nargs="+", required=True)
    q = ss.add_parser("refine")
    q.add_argument("config")
    q.add_argument("--levels", type=int, default=3)
    q.add_argument("--seed", type=int, default=None)
    q.add_argument("--count", type=int, default=8)
    for q in ss.choices.values():
        q.add_argument("--out")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("verify", help="weak residuals of a stored trajectory")
    p.add_argument("snapshot_dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--rmin", type=float, default=3.0, help="smallest test-function radius, in cells")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export", help="write VTK or CSV fields from a snapshot")
    p.add_argument("snapshot")
    p.add_argument("--format", choices=("vtk", "csv"), default="vtk")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("template", help="print a scenario config")
    p.add_argument("scenario", choices=sorted(SCENARIOS))
    p.set_defaults(func=cmd_template)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, SupportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
