"""Command line entry points: ``run``, ``convergence`` and ``filter-props``.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 property or stability violation.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import snapshot, verify
from .config import ConfigError, RawConfig, parse_run_config
from .filters import IndicatorKind
from .grid import FaceVectorField, random_divfree_field
from .linsolve import SolverError
from .stepper import (FlowState, StabilityViolation, StepError, StepperConfig, reports_to_csv,
                      run)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VIOLATION = 0, 2, 3, 4

log = logging.getLogger("filterproj")


def _out_dir(args, cfg_value) -> Path:
    out = Path(args.out if args.out is not None else cfg_value)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, cfg_seed):
    return cfg_seed if args.seed is None else args.seed


def cmd_run(args) -> int:
    raw = RawConfig.from_path(args.config)
    rc = parse_run_config(raw)
    seed = _seed(args, rc.seed)
    grid = rc.grid
    if rc.initial == "random_divfree":
        w0 = random_divfree_field(grid, np.random.default_rng(seed))
        w0 = w0 * (1.0 / max(np.abs(w0.u).max(), np.abs(w0.v).max(), 1e-300))
    elif rc.initial == "manufactured":
        w0 = verify.exact_velocity(0.0, grid)
    else:
        w0 = FaceVectorField.zeros(grid)
    forcing = verify.manufactured_forcing(rc.nu, grid) if rc.forcing == "manufactured" else None
    cfg = StepperConfig(grid, rc.dt, rc.nu, rc.filter_spec, mode=rc.filter_mode,
                        reproject=rc.reproject, forcing=forcing,
                        momentum_solver=rc.solver, poisson_solver=rc.solver)
    out = _out_dir(args, rc.out_dir)
    state = FlowState.from_velocity(w0, grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore" if args.quiet else "default")
        final, reports, ledger = run(state, cfg, rc.n_steps, check_stability=rc.check_stability,
                                     on_violation=rc.on_violation)
    with open(out / "steps.csv", "w", newline="\n") as fh:
        reports_to_csv(reports, fh)
    snapshot.write_snapshot(out / "final_u.csv", final.u.u, "u", grid)
    snapshot.write_snapshot(out / "final_v.csv", final.u.v, "v", grid)
    snapshot.write_snapshot(out / "final_p.csv", final.p, "p", grid)
    log.info("%d steps to t=%g, kinetic energy %.6e", len(reports), final.t,
             reports[-1].kinetic_energy)
    return EXIT_OK


def cmd_convergence(args) -> int:
    raw = RawConfig.from_path(args.config)
    rc = parse_run_config(raw, require_time=False)
    dt_list = raw.list("dt_list", float)
    if not dt_list or any(d <= 0 for d in dt_list):
        raw.fail("dt_list", "need positive time steps")
    if any(b >= a for a, b in zip(dt_list[:-1], dt_list[1:])):
        raw.fail("dt_list", "must be strictly decreasing")
    lo, hi = raw.float("rate_v_min", 0.7), raw.float("rate_v_max", 1.3)
    p_min = raw.float("rate_p_min", 0.4)
    if rc.delta is not None:
        rule = lambda g, dt: rc.delta  # noqa: E731
    elif raw.has("c_delta"):
        rule = lambda g, dt: min(rc.c_delta * g.h, dt ** 0.25)  # noqa: E731
    else:
        rule = None
    out = _out_dir(args, rc.out_dir)
    if rc.nx != rc.ny or rc.lx != 1.0 or rc.ly != 1.0:
        raw.fail("nx", "the manufactured solution needs a square unit-domain grid")

    def progress(row):
        log.info("dt=%g E_v=%.4e E_p=%.4e", row.dt, row.E_v, row.E_p)

    table = verify.convergence_study(dt_list, nx=rc.nx, nu=rc.nu, t_final=rc.t_final,
                                     chi0=rc.chi0, kind=rc.indicator, delta_rule=rule,
                                     mode=rc.filter_mode, reproject=rc.reproject,
                                     progress=progress, solver=rc.solver)
    (out / "convergence.csv").write_text(table.to_csv())
    rv, rp = table.fitted_rates()
    if not rv:
        print("verdict: INSUFFICIENT ROWS")
        return EXIT_OK
    ok = all(lo <= r <= hi for r in rv) and all(r >= p_min for r in rp)
    print(f"verdict: {'PASS' if ok else 'FAIL'} rate_v={','.join(f'{r:.3f}' for r in rv)} "
          f"rate_p={','.join(f'{r:.3f}' for r in rp)}")
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_filter_props(args) -> int:
    raw = RawConfig.from_path(args.config)
    seed = _seed(args, raw.int("seed", 0))
    sizes = raw.list("sizes", int, [8, 16, 32, 64])
    if not set(sizes) <= {8, 16, 32, 64}:
        raw.fail("sizes", "sizes must be drawn from 8, 16, 32, 64")
    kinds = raw.list("indicators", str, list(verify.DEFAULT_KINDS))
    eta = raw.float("eta", 1e-10)
    try:
        kinds = [IndicatorKind.parse(k, eta) for k in kinds]
    except ValueError as exc:
        raw.fail("indicators", str(exc))
    n_fields = raw.int("n_fields", 100)
    if n_fields < 1:
        raw.fail("n_fields", "must be >= 1")
    c_delta = raw.float("c_delta", 1.0)
    out = _out_dir(args, raw.get("out_dir", str, "out").strip())
    report = verify.property_suite(seed, sizes, kinds, n_fields, c_delta,
                                   with_dual=raw.bool("with_dual", True))
    (out / "properties.json").write_text(report.to_json() + "\n")
    print(f"seed={seed}")
    for note in report.notices:
        print(f"notice: {note}")
    if not args.quiet:
        for c in report.checks:
            status = "SKIP" if c.skipped else ("PASS" if c.passed else "FAIL")
            print(f"{status} {c.name} n={c.size} {c.kind} margin={c.margin:.3e}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_VIOLATION


COMMANDS = {"run": cmd_run, "convergence": cmd_convergence, "filter-props": cmd_filter_props}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="filterproj", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="configuration file")
        p.add_argument("--out", default=None, help="output directory (overrides out_dir)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides seed)")
        p.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepError, SolverError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except StabilityViolation as exc:
        print(f"stability violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
