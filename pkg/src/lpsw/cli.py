"""Command line entry point: ``lpsw lp | norm | lab | solve | swe``.

Exit codes: 0 success, 1 error, 2 a diagnostic failed (regime exit, an
estimate not satisfied, a budget or contraction check failing).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import build_linear_problem, build_sw_config, parse_config
from .errors import ConfigurationError, LpswError
from .grid import Field, Grid, read_field, write_field
from .lab import CHECKS, Calibration, RandomFieldSpec, calibrate, run_check
from .norms import BesovParams, besov_norm, chemin_lerner_norm, lp_norm, sobolev_norm
from .partition import build_partition, dump_partition_rows
from .reports import emit_csv, emit_report

log = logging.getLogger("lpsw")

EXIT_OK, EXIT_ERROR, EXIT_DIAGNOSTIC = 0, 1, 2
INTERPOLATION_TOL = 1e-10


def _length(text):
    from .config import _length as parse

    try:
        return parse(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"invalid length {text!r} (use a number or e.g. 8pi)")


def _common(parser, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(None), help="master seed (overrides config seeds)")
    parser.add_argument("--out-dir", type=Path, default=d(Path(".")), help="directory for reports")
    parser.add_argument("--constants", type=Path, default=d(None), help="calibration file from `lab calibrate`")
    parser.add_argument("--force", action="store_true", default=d(False), help="overwrite existing reports")
    parser.add_argument("--log-level", default=d("WARNING"), choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _grid_args(parser, n=64, length="8pi"):
    parser.add_argument("--n", type=int, default=n, help="grid points per side")
    parser.add_argument("--length", type=_length, default=_length(length), help="torus side, e.g. 8pi")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpsw", description="Littlewood-Paley analysis, inequality lab and shallow water solvers on the 2D torus."
    )
    _common(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _common(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    lp = sub.add_parser("lp", help="dyadic partition tools").add_subparsers(dest="action", required=True)
    dump = lp.add_parser("dump-partition", parents=[common], help="write the multiplier tables as CSV")
    _grid_args(dump)

    norm = sub.add_parser("norm", parents=[common], help="Besov/Sobolev/L^p norms of a stored field")
    norm.add_argument("--field", type=Path, help="field binary")
    norm.add_argument("--trajectory", type=Path, help="solve index JSON for a Chemin-Lerner norm")
    norm.add_argument("--s", type=float, default=0.0)
    norm.add_argument("--p", default="2")
    norm.add_argument("--r", default="2")
    norm.add_argument("--rho", default="inf", help="time exponent for --trajectory")

    lab = sub.add_parser("lab", help="inequality lab").add_subparsers(dest="action", required=True)
    run = lab.add_parser("run", parents=[common], help="run one inequality check")
    run.add_argument("--check", required=True, choices=sorted(CHECKS))
    run.add_argument("--trials", type=int, default=100)
    run.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="override a parameter")
    run.add_argument("--beta", type=float, default=3.0)
    run.add_argument("--amplitude", type=float, default=0.1)
    _grid_args(run)
    cal = lab.add_parser("calibrate", parents=[common], help="calibrate C0 and C_sp")
    cal.add_argument("--trials", type=int, default=200)
    cal.add_argument("--shear-cases", type=int, default=8)
    cal.add_argument("--s", type=float, default=2.0)
    cal.add_argument("--p", default="2")
    cal.add_argument("--r", default="2")
    _grid_args(cal)

    solve = sub.add_parser("solve", help="linear transport solvers")
    solve.add_argument("kind", choices=["transport", "tdiff"])
    solve.add_argument("--config", type=Path, required=True)
    _common(solve, suppress=True)

    swe = sub.add_parser("swe", help="shallow water iteration and direct runs")
    swe.add_argument("mode", choices=["iterate", "direct", "global", "uniqueness"])
    swe.add_argument("--config", type=Path, required=True)
    swe.add_argument("--horizon", type=float, default=None)
    _common(swe, suppress=True)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _out(args, name) -> Path:
    return Path(args.out_dir) / name


def _load_constants(args, cfg=None, required=True):
    path = args.constants
    if path is None and cfg is not None and cfg["constants"]:
        path = Path(cfg["constants"])
        if not path.is_absolute() and cfg.source != "<dict>":
            path = Path(cfg.source).parent / path
    if path is None:
        if required:
            raise ConfigurationError("calibrated constants are required: pass --constants (see `lpsw lab calibrate`)")
        return Calibration(math.nan, math.nan, {}, {"note": "uncalibrated"}, 0, 0, {})
    return Calibration.load(path)


def _parse_param(text):
    if "=" not in text:
        raise ConfigurationError(f"--param {text!r} must look like KEY=VALUE")
    key, value = text.split("=", 1)
    value = value.strip()
    if value.lower() in ("inf", "infinity"):
        return key.strip(), math.inf
    try:
        return key.strip(), float(value)
    except ValueError:
        raise ConfigurationError(f"--param {key}: {value!r} is not a number")


def _plot(fn, *a, **kw):
    from . import plotting

    try:
        return getattr(plotting, fn)(*a, **kw)
    except Exception as exc:  # figures are a convenience; never fail a run on them
        log.warning("figure %s skipped: %s", a[0] if a else "", exc)


def _guard_existing(args, *names):
    if args.force:
        return
    for name in names:
        p = _out(args, name)
        if p.exists():
            raise LpswError(f"{p} exists; rerun with --force to overwrite")


# ---------------------------------------------------------------------------
# commands


def cmd_dump_partition(args):
    _guard_existing(args, "partition.json", "partition.csv")
    P = build_partition(Grid(args.n, args.length))
    rows = dump_partition_rows(P)
    emit_csv(_out(args, "partition.csv"), ["j", "k_norm", "multiplier"], rows, args.force)
    summary = {
        "grid": P.grid.to_dict(),
        "j_max": P.j_max,
        "blocks": list(P.block_indices),
        "coverage_radius": P.coverage_radius,
        "partition_residual": P.partition_residual(),
        "orthogonality_residual": P.orthogonality_residual(),
        "rows": len(rows),
    }
    emit_report(_out(args, "partition.json"), "partition", summary, args.force)
    _plot("plot_partition", _out(args, "partition.png"), rows)
    print(f"j = -1..{P.j_max}: {len(rows)} rows -> {_out(args, 'partition.csv')}")
    return EXIT_OK


def cmd_norm(args):
    params = BesovParams(args.s, args.p, args.r)
    if args.trajectory:
        from .reports import load_report

        doc = load_report(args.trajectory)["report"]
        base = Path(args.trajectory).parent
        pairs = [(s["t"], read_field(base / s["file"])) for s in doc["snapshots"]]
        P = build_partition(pairs[0][1].grid)
        tn = chemin_lerner_norm(P, pairs, args.rho, params)
        _guard_existing(args, "norm.json")
        emit_report(_out(args, "norm.json"), "chemin_lerner_norm", tn, args.force)
        print(f"{tn.total!r}")
        return EXIT_OK
    if not args.field:
        raise ConfigurationError("norm needs --field or --trajectory")
    f = read_field(args.field)
    P = build_partition(f.grid)
    rep = besov_norm(P, f, params)
    payload = rep.to_dict()
    payload["lp"] = lp_norm(f, params.p)
    payload["sobolev"] = sobolev_norm(f, params.s)
    _guard_existing(args, "norm.json", "norm-blocks.csv")
    emit_report(_out(args, "norm.json"), "norm", payload, args.force)
    emit_csv(_out(args, "norm-blocks.csv"), ["j", "weighted_block_norm"], rep.per_block, args.force)
    _plot("plot_blocks", _out(args, "norm-blocks.png"), rep.per_block)
    print(f"{rep.total!r}")
    return EXIT_OK


def cmd_lab_run(args):
    seed = args.seed if args.seed is not None else 0
    overrides = dict(_parse_param(p) for p in args.param)
    name = f"lab-{args.check}"
    _guard_existing(args, f"{name}.json", f"{name}.csv")
    P = build_partition(Grid(args.n, args.length))
    rep = run_check(args.check, P, RandomFieldSpec(args.beta, seed, args.amplitude), args.trials, **overrides)
    payload = rep.to_dict()
    payload["grid"] = P.grid.to_dict()
    payload["field_spec"] = {"beta": args.beta, "seed": seed, "amplitude": args.amplitude}
    emit_report(_out(args, f"{name}.json"), "estimate", payload, args.force)
    emit_csv(_out(args, f"{name}.csv"), ["trial", "form", "lhs", "rhs", "ratio"],
             [(s["trial"], s["form"], s["lhs"], s["rhs"], s["ratio"]) for s in rep.samples], args.force)
    _plot("plot_running_worst", _out(args, f"{name}.png"), rep)
    print(f"{args.check}: worst_ratio={rep.worst_ratio!r} over {rep.trials} trials")
    if args.check == "interpolation" and rep.worst_ratio > 1 + INTERPOLATION_TOL:
        return EXIT_DIAGNOSTIC
    return EXIT_OK


def cmd_lab_calibrate(args):
    seed = args.seed if args.seed is not None else 0
    _guard_existing(args, "calibration.json")
    P = build_partition(Grid(args.n, args.length))
    cal = calibrate(P, args.s, args.p, args.r, args.trials, seed, args.shear_cases)
    path = _out(args, "calibration.json")
    emit_report(path, "calibration", cal, args.force)
    emit_csv(_out(args, "calibration.csv"), ["source", "value"], sorted(cal.sources.items()), args.force)
    print(f"C0={cal.C0!r} C_sp={cal.C_sp!r} -> {path}")
    return EXIT_OK


def cmd_solve(args):
    from .linear import check_smoothing_estimate, check_transport_estimate, solve_transport, solve_transport_diffusion

    cfg = parse_config(args.config, "solve")
    prob, P = build_linear_problem(cfg, args.seed)
    if args.kind == "transport" and prob.nu != 0:
        raise ConfigurationError(f"solve transport needs nu = 0 (config has nu={prob.nu}); use solve tdiff")
    if args.kind == "tdiff" and not prob.nu > 0:
        raise ConfigurationError("solve tdiff needs nu > 0")
    name = f"solve-{args.kind}"
    _guard_existing(args, f"{name}.json", f"{name}.csv")
    traj = solve_transport(prob) if args.kind == "transport" else solve_transport_diffusion(prob)
    fdir = _out(args, f"{name}-fields")
    fdir.mkdir(parents=True, exist_ok=True)
    snaps = []
    for i, (t, f) in enumerate(traj):
        fname = f"f_{i:05d}.bin"
        write_field(fdir / fname, f)
        snaps.append({"t": t, "file": f"{fdir.name}/{fname}"})
    est = cfg["estimate"]
    estimate = None
    code = EXIT_OK
    if est["enabled"]:
        C0 = est["C0"]
        if C0 is None:
            C0 = _load_constants(args).C0
        if args.kind == "transport":
            estimate = check_transport_estimate(P, traj, prob, est["s"], est["p"], est["p1"], est["r"], C0)
        else:
            estimate = check_smoothing_estimate(P, traj, prob, est["s"], est["p"], est["p1"], est["r"],
                                                est["rho"], est["rho1"], C0)
        if not estimate.satisfied:
            code = EXIT_DIAGNOSTIC
    params = BesovParams(est["s"], est["p"], est["r"])
    rows = []
    from .norms import besov

    for t, f in traj:
        rows.append((t, lp_norm(f, 2), lp_norm(f, math.inf), besov(P, f, params.s, params.p, params.r)))
    payload = {"config": cfg.values, "metadata": traj.metadata, "snapshots": snaps,
               "estimate": estimate.to_dict() if estimate else None}
    emit_report(_out(args, f"{name}.json"), "trajectory", payload, args.force)
    emit_csv(_out(args, f"{name}.csv"), ["t", "l2", "linf", "besov"], rows, args.force)
    _plot("plot_series", _out(args, f"{name}.png"), [r[0] for r in rows],
          {"L2": [r[1] for r in rows], "B^s_{p,r}": [r[3] for r in rows]}, "t", "norm")
    print(f"{len(snaps)} snapshots -> {_out(args, name + '.json')}")
    if estimate is not None:
        print(f"estimate {estimate.name}: satisfied={estimate.satisfied} lhs={estimate.lhs:.6g} rhs={estimate.rhs:.6g}")
    return code


def _swe_iterate(args, cfg, run):
    from .iteration import compute_budgets, run_iteration

    sw = build_sw_config(cfg, _load_constants(args, cfg), args.seed)
    rep = run_iteration(sw, compare_direct=run["compare_direct"])
    d = rep.to_dict()
    emit_report(_out(args, "swe-iterate.json"), "iteration", d, args.force)
    emit_csv(_out(args, "swe-iterate.csv"), ["n", "u_linf", "u_l2", "h_linf", "in_chi", "delta", "min_depth"],
             [(r["n"], r["u_linf"], r["u_l2"], r["h_linf"], r["in_chi"], r["delta"], r["min_depth"])
              for r in rep.iterates], args.force)
    deltas = [(r["n"], r["delta"]) for r in rep.iterates if r["delta"]]
    if deltas:
        _plot("plot_series", _out(args, "swe-iterate.png"), [n for n, _ in deltas],
              {"delta_n": [d for _, d in deltas]}, "iterate n", "difference norm", logy=True)
    print(f"q={rep.q:.4g} chi_ok={rep.chi_ok} gap_ok={rep.gap_ok} residual={rep.residual:.3g}")
    ok = rep.chi_ok and rep.contraction and rep.gap_ok is not False
    return EXIT_OK if ok else EXIT_DIAGNOSTIC


def _swe_direct(args, cfg, run, horizon):
    from .iteration import direct_spectral, mass, mass_drift
    from .norms import besov

    sw = build_sw_config(cfg, _load_constants(args, cfg, required=False), args.seed)
    P, prm, grid = sw.partition, sw.params, sw.grid
    every = run["checkpoint_every"]
    dt = run["dt"] or run["global_dt"]
    from .linear import step_count

    nsteps = step_count(horizon, dt)
    times, snaps, dt = direct_spectral(sw, horizon, dt, snapshot_every=every or nsteps)
    fdir = _out(args, "swe-direct-fields")
    fdir.mkdir(parents=True, exist_ok=True)
    rows, files = [], []
    for i, (t, (U, H)) in enumerate(zip(times, snaps)):
        u, h = Field(grid, grid.ifft(U)), Field(grid, grid.ifft(H))
        rows.append((t, besov(P, u, prm.s, prm.p, prm.r), besov(P, h, prm.s, prm.p, prm.r), mass(grid, H)))
        for name, f in (("u", u), ("h", h)):
            fname = f"{name}_{i:05d}.bin"
            write_field(fdir / fname, f)
            files.append({"t": t, "field": name, "file": f"{fdir.name}/{fname}"})
    payload = {"config": sw.summary(), "horizon": horizon, "dt": dt, "mass_drift": mass_drift([r[3] for r in rows], grid.length**2),
               "snapshots": files}
    emit_report(_out(args, "swe-direct.json"), "direct", payload, args.force)
    emit_csv(_out(args, "swe-direct.csv"), ["t", "u_besov", "h_besov", "mass"], rows, args.force)
    _plot("plot_series", _out(args, "swe-direct.png"), [r[0] for r in rows],
          {"u": [r[1] for r in rows], "h": [r[2] for r in rows]}, "t", "B^s_{p,r} norm")
    print(f"mass drift {payload['mass_drift']:.3g} over T={horizon}")
    return EXIT_OK


def _swe_global(args, cfg, run, horizon):
    from .iteration import global_run

    sw = build_sw_config(cfg, _load_constants(args, cfg, required=False), args.seed)
    fdir = _out(args, "swe-global-checkpoints")
    every = run["checkpoint_every"]

    def checkpoint(t, k, U, H):
        fdir.mkdir(parents=True, exist_ok=True)
        write_field(fdir / f"u_{k:06d}.bin", Field(sw.grid, sw.grid.ifft(U)))
        write_field(fdir / f"h_{k:06d}.bin", Field(sw.grid, sw.grid.ifft(H)))

    rep = global_run(sw, horizon, dt=run["global_dt"], checkpoint_every=every,
                     checkpoint=checkpoint if every else None, eta=run["eta"])
    d = rep.to_dict()
    emit_report(_out(args, "swe-global.json"), "global", d, args.force)
    emit_csv(_out(args, "swe-global.csv"), ["t", "u_besov", "h_besov", "u_hs1", "u_l2hs1", "mass"],
             zip(rep.times, rep.u_besov, rep.h_besov, rep.u_hs1, rep.u_l2hs1, rep.mass), args.force)
    t = np.asarray(rep.times)
    _plot("plot_series", _out(args, "swe-global.png"), t,
          {"||u||+||h||": np.add(rep.u_besov, rep.h_besov),
           "C e^{Ct}": rep.envelope_C * np.exp(rep.envelope_C * t)}, "t", "B^s_{p,r} norm", logy=True)
    if rep.regime_exit is not None:
        print(f"regime exit at t={rep.regime_exit}")
        return EXIT_DIAGNOSTIC
    print(f"sup norm {d['sup_norm']:.4g}, envelope C={rep.envelope_C:.4g}, below={rep.below_envelope}")
    return EXIT_OK if rep.below_envelope else EXIT_DIAGNOSTIC


def _swe_uniqueness(args, cfg, run, horizon):
    from dataclasses import replace

    from .iteration import uniqueness_probe
    from .lab import random_field

    sw = build_sw_config(cfg, _load_constants(args, cfg, required=False), args.seed)
    gap = run["uniqueness_gap"] or 0.1
    P = sw.partition
    spec = RandomFieldSpec(3.0, sw.seed + 1, 1.0)
    du = random_field(P, spec, 0, 0, components=2)
    dh = random_field(P, spec, 0, 1)
    scale_u = gap * max(float(np.max(np.abs(sw.u0.values))), 1e-12)
    scale_h = gap * max(float(np.max(np.abs(sw.h0.values))), 1e-12)
    other = replace(sw, u0=sw.u0 + du * scale_u, h0=sw.h0 + dh * scale_h)
    rep = uniqueness_probe(sw, other, horizon, run["global_dt"])
    emit_report(_out(args, "swe-uniqueness.json"), "uniqueness", rep, args.force)
    emit_csv(_out(args, "swe-uniqueness.csv"), ["initial_gap", "trajectory_gap"],
             zip(rep.gaps, rep.trajectory_gaps), args.force)
    print("gap ratios " + ", ".join(f"{r:.3g}" for r in rep.ratios))
    return EXIT_OK if all(r >= 1.5 for r in rep.ratios) else EXIT_DIAGNOSTIC


def cmd_swe(args):
    cfg = parse_config(args.config, "swe")
    run = cfg["run"]
    horizon = args.horizon if args.horizon is not None else run["horizon"]
    name = f"swe-{args.mode}"
    _guard_existing(args, f"{name}.json", f"{name}.csv")
    if args.mode == "iterate":
        return _swe_iterate(args, cfg, run)
    if args.mode == "direct":
        return _swe_direct(args, cfg, run, horizon)
    if args.mode == "global":
        return _swe_global(args, cfg, run, horizon)
    return _swe_uniqueness(args, cfg, run, horizon)


def dispatch(args) -> int:
    if args.command == "lp":
        return cmd_dump_partition(args)
    if args.command == "norm":
        return cmd_norm(args)
    if args.command == "lab":
        return cmd_lab_run(args) if args.action == "run" else cmd_lab_calibrate(args)
    if args.command == "solve":
        return cmd_solve(args)
    return cmd_swe(args)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        return dispatch(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except LpswError as exc:
        from .errors import RegimeExitError

        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC if isinstance(exc, RegimeExitError) else EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
