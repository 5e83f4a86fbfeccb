"""Command-line interface: ``cqnls <command> [options]``.

Exit codes: 0 ok, 1 invariant failure, 2 validation error, 3 missing
artifact, 4 numeric failure.  Artifacts go to $CQNLS_OUTPUT (default
./cqnls_out) unless --out is given.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import (ConfigurationError, GaugeDegenerate, GridMismatch, NoGroundState, NumericError,
                     ProjectionError, ResonanceError, SpectralFailure, StepReject)
from .evolution import DIAGNOSTIC_COLUMNS, EvolveConfig, conserved_drift, evolve
from .functionals import evaluate
from .ground_state import (CUBIC_ONLY, CUBIC_QUINTIC, continue_branch, default_grid,
                           solve_ground_state)
from .linearized import LinearizedOperators, check_spectral_inequalities, dense_internal_mode, solve_internal_mode
from .modulation import ModulationContext
from .radial import RadialGrid

log = logging.getLogger("cqnls")

EXIT_OK, EXIT_INVARIANT, EXIT_VALIDATION, EXIT_MISSING, EXIT_NUMERIC = 0, 1, 2, 3, 4


class MissingArtifact(Exception):
    pass


# defaults shown by --print-config and accepted in --config files
DEFAULTS = {
    "omega": 0.05,
    "n": 5000,
    "decay_lengths": 22.0,
    "order": 6,
    "dt": 1e-3,
    "t_end": 1.0,
    "record_every": 10,
    "sponge": 0.0,
    "sponge_width": 0.1,
    "grad_blowup_factor": 1e3,
    "dt_floor": 1e-9,
    "resolution_tol": 1e-4,
    "k": 3,
    "level": 1e-3,
    "seed": 0,
    "omega_min": 0.02,
    "omega_max": 0.2,
    "points": 7,
}


def _validate_omega(omega: float):
    if not (math.isfinite(omega) and omega > 0):
        raise ConfigurationError(f"omega must be a positive number, got {omega}")


def _grid(args, omega) -> RadialGrid:
    if args.n < 20:
        raise ConfigurationError("n must be at least 20")
    if args.r_max is not None:
        return RadialGrid(args.r_max, args.n, args.order)
    return default_grid(omega, n=args.n, decay_lengths=args.decay_lengths, order=args.order)


def _out(args) -> Path:
    root = Path(args.out) if args.out else io.output_root()
    root.mkdir(parents=True, exist_ok=True)
    return root


def _tag(omega: float) -> str:
    return f"{omega:.6g}"


def _gs_path(args, omega) -> Path:
    return Path(args.fixture) if getattr(args, "fixture", None) else _out(args) / f"groundstate_{_tag(omega)}.json"


def _load_or_solve_gs(args, omega, require=False):
    path = _gs_path(args, omega)
    if path.exists():
        return io.ground_state_from_dict(io.read_json(path))
    if require:
        raise MissingArtifact(f"ground-state fixture {path} not found; run `cqnls groundstate --omega {omega}` first")
    return solve_ground_state(omega, grid=_grid(args, omega))


def _context(args, omega):
    gs = _load_or_solve_gs(args, omega, require=getattr(args, "require_fixture", False))
    return ModulationContext.build(gs)


# -- commands -----------------------------------------------------------------------------


def cmd_groundstate(args) -> int:
    _validate_omega(args.omega)
    mode = CUBIC_ONLY if args.cubic_only else CUBIC_QUINTIC
    gs = solve_ground_state(args.omega, mode=mode, grid=_grid(args, args.omega))
    suffix = "_cubic" if args.cubic_only else ""
    path = _out(args) / f"groundstate_{_tag(args.omega)}{suffix}.json"
    d = io.ground_state_to_dict(gs)
    d.update(nehari_defect=gs.nehari_defect(), k_defect=gs.k_defect(), center_value=gs.center_value(),
             l2_sq=2.0 * gs.values.mass)
    io.write_json(path, d)
    row = {"omega": gs.omega, "q0": gs.q0, "M": gs.values.mass, "E": gs.values.energy,
           "K": gs.values.K, "m_omega": gs.m_omega}
    print(io.table([row], list(row)))
    print(f"fixture: {path}")
    return EXIT_OK


def cmd_branch(args) -> int:
    _validate_omega(args.omega_min)
    if not args.omega_max > args.omega_min or args.points < 3:
        raise ConfigurationError("need omega_max > omega_min and at least 3 points")
    omegas = np.linspace(args.omega_min, args.omega_max, args.points)
    grid = _grid(args, args.omega_min)
    branch = continue_branch(omegas, grid=grid)
    slope = branch.mass_slope
    rows = []
    for i, gs in enumerate(branch.states):
        rows.append({"omega": gs.omega, "q0": gs.q0, "mass": gs.values.mass, "energy": gs.values.energy,
                     "m_omega": gs.m_omega, "K": gs.values.K,
                     "dM_domega": float(slope[i - 1]) if 0 < i < len(branch.states) - 1 else math.nan})
    cols = ["omega", "q0", "mass", "energy", "m_omega", "K", "dM_domega"]
    path = io.write_csv(_out(args) / "branch.csv", cols, rows)
    print(io.table(rows, cols))
    print(f"branch: {path}")
    interior = [r["dM_domega"] for r in rows[1:-1]]
    if any(not s < 0 for s in interior):
        print("slope condition violated at an interior point", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_spectrum(args) -> int:
    _validate_omega(args.omega)
    gs = _load_or_solve_gs(args, args.omega, require=True)
    ops = LinearizedOperators.from_ground_state(gs)
    mode = dense_internal_mode(ops) if args.dense else solve_internal_mode(ops)
    rep = check_spectral_inequalities(mode, gs)
    d = io.mode_to_dict(mode)
    d["checks"] = rep.checks
    d["margins"] = rep.margins
    path = io.write_json(_out(args) / f"spectrum_{_tag(args.omega)}.json", d)
    row = {"omega": mode.omega, "e_omega": mode.e_omega, "res_plus": mode.residuals[0],
           "res_minus": mode.residuals[1], "pairing": mode.pairing, "signQ2": mode.signQ2}
    print(io.table([row], list(row)))
    print(f"fixture: {path}")
    return EXIT_OK


def _initial_field(args, grid, omega):
    r = grid.r
    if args.init == "gaussian":
        return args.amp * np.exp(-(r / args.width) ** 2) + 0j
    if args.init == "checkpoint":
        if not args.checkpoint or not Path(args.checkpoint).exists():
            raise MissingArtifact(f"checkpoint {args.checkpoint} not found")
        cgrid, _, _, psi = io.read_checkpoint(args.checkpoint)
        if cgrid != grid:
            raise GridMismatch("checkpoint grid differs from the requested grid")
        return psi
    gs = _load_or_solve_gs(args, omega)
    if gs.grid != grid:
        raise GridMismatch("ground-state fixture grid differs from the requested grid")
    return args.amp * gs.Q + 0j


def cmd_evolve(args) -> int:
    _validate_omega(args.omega)
    if args.init == "gaussian" and args.r_max is None:
        grid = RadialGrid(40.0, min(args.n, 2000), args.order)
    elif args.init == "checkpoint" and args.checkpoint and Path(args.checkpoint).exists():
        grid = io.read_checkpoint(args.checkpoint)[0]
    else:
        grid = _grid(args, args.omega)
    psi0 = _initial_field(args, grid, args.omega)
    sponge = args.sponge if args.sponge is not None else (5.0 if args.init == "gaussian" else 0.0)
    cfg = EvolveConfig(dt0=args.dt, t_end=args.t_end, record_every=args.record_every,
                       sponge_strength=sponge, sponge_width=args.sponge_width,
                       grad_blowup_factor=args.grad_blowup_factor, dt_floor=args.dt_floor,
                       resolution_tol=args.resolution_tol, virial_R=args.virial_R)
    traj = evolve(grid, psi0, cfg, checkpoint_times=[args.t_end] if args.save_final else ())
    out = _out(args)
    cols = list(DIAGNOSTIC_COLUMNS) + ["verdict"]
    rows = [dict(row, verdict=traj.label if i == len(traj.rows) - 1 else "Running")
            for i, row in enumerate(traj.rows)]
    path = io.write_csv(out / "trajectory.csv", cols, rows)
    md, ed = conserved_drift(traj)
    summary = {"verdict": traj.label, "T_est": traj.T_est, "mass_drift": md, "energy_drift": ed,
               "notes": traj.notes, "grid": io.grid_to_dict(grid), "dt": args.dt, "t_end": args.t_end,
               "sponge": sponge}
    io.write_json(out / "trajectory_summary.json", summary)
    if traj.final is not None and args.save_final:
        io.write_checkpoint(out / "final_checkpoint.json", grid, args.omega, traj.times[-1], traj.final)
    print(f"verdict: {traj.label}")
    print(f"mass drift {md:.9g}, energy drift {ed:.9g}")
    print(f"trajectory: {path}")
    return EXIT_OK


def cmd_special(args) -> int:
    from .special import special_run

    _validate_omega(args.omega)
    ctx = _context(args, args.omega)
    rep = special_run(ctx, args.A, k=args.k, level=args.level, backward=not args.no_backward)
    d = {"omega": args.omega, "A": rep.A, "k": args.k, "e_omega": ctx.e, "t0": rep.t0,
         "series_residual_order": rep.series_order, "series_order_ratio": rep.series_order / ((args.k + 1) * ctx.e),
         "K0": rep.K0, "forward_rate": rep.forward_rate, "forward_rate_ratio": rep.forward_rate / ctx.e,
         "forward_r2": rep.forward_r2, "window": list(rep.window),
         "backward_verdict": rep.backward_verdict, "backward_T": rep.backward_T, "notes": rep.notes}
    path = io.write_json(_out(args) / f"special_{_tag(args.omega)}_A{args.A:+g}.json", d)
    print(io.table([{k: d[k] for k in ("A", "e_omega", "series_order_ratio", "forward_rate_ratio", "K0")}],
                   ["A", "e_omega", "series_order_ratio", "forward_rate_ratio", "K0"]))
    print(f"backward: {rep.backward_verdict}")
    print(f"report: {path}")
    return EXIT_OK


def cmd_classify(args) -> int:
    from .special import (build_profile_series, classify, make_special_initial_data, t0_for_level,
                          threshold_projection)

    _validate_omega(args.omega)
    ctx = _context(args, args.omega)
    g = ctx.grid
    if args.checkpoint:
        if not Path(args.checkpoint).exists():
            raise MissingArtifact(f"checkpoint {args.checkpoint} not found")
        cgrid, _, _, psi0 = io.read_checkpoint(args.checkpoint)
        if cgrid != g:
            raise GridMismatch("checkpoint grid differs from the ground-state grid")
        psi0 = threshold_projection(psi0, ctx.gs).field
        source = str(args.checkpoint)
    elif args.A == 0:
        psi0 = ctx.gs.Q + 0j
        source = "orbit"
    else:
        series = build_profile_series(args.A, args.k, ctx.mode, ctx.ops, measure=False)
        psi0 = make_special_initial_data(series, t0_for_level(ctx.e, args.level), ctx.gs)
        source = f"special(A={args.A:+g})"
    direction = 1 if args.direction == "forward" else -1
    res = classify(psi0, ctx, direction)
    d = {"omega": args.omega, "source": source, "direction": args.direction, "label": res.label,
         "K0": res.K0, "evidence": {k: v for k, v in res.evidence.items() if not k.startswith("K_sign")}}
    path = io.write_json(_out(args) / f"classify_{_tag(args.omega)}_{source.replace('/', '_')}_{args.direction}.json", d)
    print(f"label: {res.label}  (K0 = {res.K0:.9g})")
    print(f"report: {path}")
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_suite

    _validate_omega(args.omega)
    suite = run_suite(args.omega, fast=args.fast, n=args.n_check, seed=args.seed)
    rows = [r.row() for r in suite.results]
    print(io.table(rows, ["check", "status", "value", "tolerance"]))
    io.write_csv(_out(args) / f"check_{_tag(args.omega)}.csv", ["check", "status", "value", "tolerance", "note"], rows)
    if suite.failed:
        print("failed: " + ", ".join(suite.failed), file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------


def _common(p, omega=True):
    if omega:
        p.add_argument("--omega", type=float, default=DEFAULTS["omega"])
    p.add_argument("--n", type=int, default=DEFAULTS["n"], help="grid points")
    p.add_argument("--r-max", type=float, default=None, help="grid radius (default decay_lengths/sqrt(omega))")
    p.add_argument("--decay-lengths", type=float, default=DEFAULTS["decay_lengths"])
    p.add_argument("--order", type=int, default=DEFAULTS["order"], choices=(2, 4, 6, 8))
    p.add_argument("--out", default=None, help="output directory (default $CQNLS_OUTPUT or ./cqnls_out)")
    p.add_argument("--fixture", default=None, help="ground-state fixture to load")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cqnls", description="Radial cubic-quintic NLS threshold laboratory")
    p.add_argument("--config", default=None, help="key = value file supplying option defaults")
    p.add_argument("--print-config", action="store_true", help="print all defaults and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("groundstate", help="solve for Q_omega and write a JSON fixture")
    _common(s)
    s.add_argument("--cubic-only", action="store_true", help="drop the quintic term")
    s.set_defaults(func=cmd_groundstate)

    s = sub.add_parser("branch", help="continue the ground-state branch over an omega range")
    _common(s, omega=False)
    s.add_argument("--omega-min", type=float, default=DEFAULTS["omega_min"])
    s.add_argument("--omega-max", type=float, default=DEFAULTS["omega_max"])
    s.add_argument("--points", type=int, default=DEFAULTS["points"])
    s.set_defaults(func=cmd_branch)

    s = sub.add_parser("spectrum", help="internal mode of the linearization (needs a ground-state fixture)")
    _common(s)
    s.add_argument("--dense", action="store_true", help="dense eigen-solver (n <= 800)")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("evolve", help="integrate the equation and write the trajectory CSV")
    _common(s)
    s.add_argument("--init", choices=("groundstate", "gaussian", "checkpoint"), default="groundstate")
    s.add_argument("--amp", type=float, default=1.0)
    s.add_argument("--width", type=float, default=1.0)
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--dt", type=float, default=DEFAULTS["dt"])
    s.add_argument("--t-end", type=float, default=DEFAULTS["t_end"])
    s.add_argument("--record-every", type=int, default=DEFAULTS["record_every"])
    s.add_argument("--sponge", type=float, default=None, help="absorbing-layer strength (gaussian default 5)")
    s.add_argument("--sponge-width", type=float, default=DEFAULTS["sponge_width"])
    s.add_argument("--grad-blowup-factor", type=float, default=DEFAULTS["grad_blowup_factor"])
    s.add_argument("--dt-floor", type=float, default=DEFAULTS["dt_floor"])
    s.add_argument("--resolution-tol", type=float, default=DEFAULTS["resolution_tol"])
    s.add_argument("--virial-R", type=float, default=None)
    s.add_argument("--save-final", action="store_true", help="write a checkpoint of the final field")
    s.set_defaults(func=cmd_evolve)

    s = sub.add_parser("special", help="special solution U^A: series, forward rate, backward fate")
    _common(s)
    s.add_argument("--A", type=float, default=1.0)
    s.add_argument("--k", type=int, default=DEFAULTS["k"])
    s.add_argument("--level", type=float, default=DEFAULTS["level"], help="e^{-e t0}")
    s.add_argument("--no-backward", action="store_true")
    s.set_defaults(func=cmd_special)

    s = sub.add_parser("classify", help="classify threshold data (special U^A, orbit A=0, or a checkpoint)")
    _common(s)
    s.add_argument("--A", type=float, default=1.0)
    s.add_argument("--k", type=int, default=DEFAULTS["k"])
    s.add_argument("--level", type=float, default=DEFAULTS["level"])
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--direction", choices=("forward", "backward"), default="forward")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("check", help="run the invariant suite and print a pass/fail table")
    _common(s)
    s.add_argument("--fast", action="store_true", help="coarser grid, skip the long reruns")
    s.add_argument("--n-check", type=int, default=None, help="grid size for the suite")
    s.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    s.set_defaults(func=cmd_check)
    return p


def _apply_config_file(parser, argv):
    """Pre-parse --config and install its values as parser defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    path = Path(known.config)
    if not path.exists():
        raise MissingArtifact(f"config file {path} not found")
    values = io.parse_config(path.read_text())
    unknown = set(values) - set(DEFAULTS)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    typed = {k: type(DEFAULTS[k])(float(v)) if isinstance(DEFAULTS[k], (int, float)) and not isinstance(DEFAULTS[k], bool)
             else v for k, v in values.items()}
    parser.set_defaults(**typed)
    for action in parser._subparsers._group_actions:  # propagate into every subcommand
        for sp in action.choices.values():
            sp.set_defaults(**{k: v for k, v in typed.items()
                               if any(a.dest == k for a in sp._actions)})


def _error(code, kind, message):
    print(io.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr, end="")
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except MissingArtifact as exc:
        return _error(EXIT_MISSING, "MissingArtifact", str(exc))
    except (ConfigurationError, ValueError) as exc:
        return _error(EXIT_VALIDATION, type(exc).__name__, str(exc))
    except SystemExit as exc:  # argparse usage errors
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_config:
        print(io.format_config(DEFAULTS), end="")
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except MissingArtifact as exc:
        return _error(EXIT_MISSING, "MissingArtifact", str(exc))
    except (ConfigurationError, GridMismatch) as exc:
        return _error(EXIT_VALIDATION, type(exc).__name__, str(exc))
    except (NumericError, NoGroundState, SpectralFailure, GaugeDegenerate, StepReject, ResonanceError,
            ProjectionError, FloatingPointError) as exc:
        return _error(EXIT_NUMERIC, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
