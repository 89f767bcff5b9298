"""
Command line: ``tubesolve {analyze,solve,forge} --symbol CONFIG.toml [flags]``.

Exit codes: 0 success (a "not solvable" verdict is a success), 2 bad
configuration, input or resolution, 3 right-hand side outside the closure
of the range, 4 no counterexample witnesses at this cutoff.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import conditions, counterexample, homogeneous, io, solver
from .config import ConfigError, RunConfig, resolve_config, section, symbol_from_config
from .expr import ExpressionError
from .spectral import ResolutionError
from .symbol import HomogeneousPlusLower, HomogeneousSymbol, evaluate

EXIT_OK, EXIT_CONFIG, EXIT_CLOSURE, EXIT_NO_WITNESS = 0, 2, 3, 4

CONDITION_COLUMNS = ["xi", "norm", "resonant", "margin", "Dplus", "Dminus", "Dbeta", "vacuous"]
HOMOGENEOUS_COLUMNS = ["signChange", "maxComponents", "corollaryReason"]


def _fit_dict(fit):
    if fit is None:
        return None
    return {"exponent": fit.exponent, "constant": fit.constant, "log_constant": fit.log_constant, "residual": fit.residual,
            "n_points": fit.n_points, "identically_zero": fit.identically_zero}


def _dio_dict(dio):
    if dio is None:
        return None
    return {"C_hat": dio.C_hat, "M_hat": dio.M_hat, "vacuous": dio.vacuous, "n_points": dio.n_points,
            "offenders": [list(x) for x in dio.offenders],
            "worst_offender": list(dio.worst_offender) if dio.worst_offender else None,
            "M_exp1": dio.M_exp1, "M_exp2": dio.M_exp2, "lemma_consistent": dio.lemma_consistent}


def _setup(args, need_order=True):
    flags = {k: getattr(args, k, None) for k in ("nt", "K", "eps_z", "d_floor", "out", "threads", "format")}
    cfg, raw = resolve_config(args.symbol, flags)
    spec, N = symbol_from_config(raw, args.symbol)
    cfg.validate(spec.order if need_order else None)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, raw, spec, N, out


def _profiles(spec, cfg: RunConfig, grid, box):
    try:
        return evaluate(spec, grid, box, cfg.eps_z)
    except ValueError as exc:
        raise ConfigError(f"symbol: {exc}") from None


def cmd_analyze(args) -> int:
    cfg, raw, spec, N, out = _setup(args)
    grid, box = cfg.grid, cfg.box(N)
    profiles = _profiles(spec, cfg, grid, box)
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        verdict = conditions.check_conditions(
            profiles, spec.order, cfg.K, d_floor=cfg.d_floor, map_fn=pool.map,
            slope_tol=cfg.slope_tol, quantile=cfg.quantile, offender_factor=cfg.offender_factor,
        )
    rows = verdict.table()
    columns = list(CONDITION_COLUMNS)
    summary = {
        "K": cfg.K, "n_t": cfg.nt, "order": spec.order, "variant": spec.variant, "eps_z": cfg.eps_z,
        "d_floor": cfg.d_floor, "solvable_at_cutoff": verdict.solvable, "supD": verdict.supD,
        "envelope_slope": verdict.envelope_slope, "reasons": verdict.reasons, "dio_fit": _dio_dict(verdict.dio),
    }
    if isinstance(spec, HomogeneousSymbol) and spec.order > 0 and float(spec.order).is_integer():
        cor, cols = homogeneous.homogeneous_columns(spec, grid, box, cfg.eps_z)
        for r in rows:
            r.update(cols[r["xi"]])
        columns += HOMOGENEOUS_COLUMNS
        summary["corollary"] = {"solvable": cor.solvable, "reasons": cor.reasons,
                                "agrees_with_conditions": cor.solvable == verdict.solvable}
    elif isinstance(spec, HomogeneousPlusLower):
        chk = homogeneous.perturbed_principal_check(spec, grid, box)
        summary["principal_part"] = {"status": chk.status, "reasons": chk.reasons,
                                     "witness": list(chk.witness) if chk.witness else None}
    io.write_table(out / "conditions.csv", rows, columns)
    io.write_table(out / "plot_margin.csv", [{"norm": r["norm"], "margin": r["margin"]} for r in rows
                                              if not r["resonant"]], ["norm", "margin"])
    io.write_table(out / "plot_dstar.csv",
                   [{"norm": c.norm, "resonant": c.resonant, "D": c.governing} for c in verdict.constants],
                   ["norm", "resonant", "D"])
    io.write_json(out / "verdict.json", summary)
    flag = "true" if verdict.solvable else "false"
    print(f"solvable_at_cutoff={flag} K={cfg.K:g} supD={verdict.supD:.6g} slope={verdict.envelope_slope:.4g}")
    for r in verdict.reasons:
        print(f"reason: {r}")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg, raw, spec, N, out = _setup(args, need_order=False)
    rhs = args.rhs or section(raw, "solve").get("rhs")
    if not rhs:
        raise ConfigError("solve.rhs: no right-hand side file given (--rhs)")
    try:
        f = io.read_field(rhs)
    except OSError as exc:
        raise ConfigError(f"solve.rhs: cannot read {rhs}: {exc.strerror}") from None
    if f.box.N != N:
        raise ConfigError(f"solve.rhs: field has N={f.box.N}, symbol has N={N}")
    profiles = _profiles(spec, cfg, f.grid, f.box)
    if args.project or section(raw, "solve").get("project", False):
        f = solver.project_field(f, profiles)
    try:
        sol = solver.solve_global(f, profiles, compat_tol=cfg.compat_tol, threads=cfg.workers)
    except solver.ClosureError as exc:
        io.write_json(out / "closure_report.json",
                      {"member": False, "offenders": [list(x) for x in exc.offenders], "message": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        for xi in exc.offenders:
            print(f"offender: xi={tuple(xi)}", file=sys.stderr)
        return EXIT_CLOSURE
    path = io.write_field(out / ("u" + io.field_suffix(cfg.format)), sol.u, cfg.format)
    report = {
        "residual": sol.residual, "relative_residual": sol.relative_residual,
        "scaled_residual": sol.scaled_residual, "under_resolved": [list(x) for x in sol.under_resolved],
        "saturated": [list(x) for x in sol.saturated], "small_divisors": [list(x) for x in sol.small_divisors],
        "decay_u": _fit_dict(sol.decay_u), "decay_u_dt": _fit_dict(sol.decay_u1), "decay_f": _fit_dict(sol.decay_f),
        "modes": [{"xi": list(m.xi), "branch": m.branch, "method": m.method, "saturated": m.saturated,
                   "sup_norm": m.sup_norm, "log_sup": m.log_sup} for m in sol.modes],
    }
    io.write_json(out / "solve_report.json", report)
    print(f"wrote {path} residual={sol.residual:.3e} relative={sol.relative_residual:.3e} "
          f"saturated={len(sol.saturated)} under_resolved={len(sol.under_resolved)}")
    return EXIT_OK


def _sequence(text, N):
    if not text:
        return None
    seq = []
    for k, item in enumerate(text, start=1):
        xi = tuple(int(v) for v in (item if isinstance(item, (list, tuple)) else str(item).split(",")))
        if len(xi) != N:
            raise ConfigError(f"forge.sequence: {xi} does not have {N} components")
        seq.append((k, xi))
    return seq


def cmd_forge(args) -> int:
    cfg, raw, spec, N, out = _setup(args)
    opts = section(raw, "forge")
    tag = args.tag or opts.get("tag")
    if tag not in ("dc", "alpha", "beta"):
        raise ConfigError(f"forge.tag: expected dc, alpha or beta, got {tag!r}")
    terms = args.terms if args.terms is not None else opts.get("terms")
    seq = _sequence(args.sequence.split(";") if args.sequence else opts.get("sequence"), N)
    grid, box = cfg.grid, cfg.box(N)
    profiles = _profiles(spec, cfg, grid, box)
    if tag == "dc":
        interval = args.interval or opts.get("interval")
        forged = counterexample.forge_dc(profiles, box, sequence=seq, interval=interval, K_terms=terms)
    elif tag == "alpha":
        forged = counterexample.forge_alpha(profiles, box, spec.order, sequence=seq, K_terms=terms)
    else:
        forged = counterexample.forge_beta(profiles, box, spec.order, sequence=seq, K_terms=terms)
    report = counterexample.verify_forged(forged, profiles)
    path = io.write_field(out / (f"forged_{tag}" + io.field_suffix(cfg.format)), forged.field, cfg.format)
    meta = forged.metadata()
    meta.update({"all_hold": report.all_hold, "closure_member": report.closure_member,
                 "closure_worst": report.closure_worst, "decay_f": _fit_dict(report.f_decay),
                 "decay_u": _fit_dict(report.u_decay), "field_file": path.name,
                 "underflowed": [list(x) for x in report.underflowed]})
    io.write_json(out / f"forged_{tag}.json", meta)
    io.write_table(out / f"bounds_{tag}.csv", report.rows, ["xi", "k", "t_index", "target", "measured", "holds"])
    print(f"wrote {path} terms={len(forged.modes)} all_hold={'true' if report.all_hold else 'false'} "
          f"closure={'true' if report.closure_member else 'false'} underflowed={len(report.underflowed)}")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--symbol", metavar="PATH", required=True, help="TOML symbol/run config")
    common.add_argument("--nt", type=int, help="time grid size")
    common.add_argument("--K", type=float, help="frequency cutoff |xi| <= K")
    common.add_argument("--eps-z", dest="eps_z", type=float, help="resonance tolerance")
    common.add_argument("--d-floor", dest="d_floor", type=float, help="smallest |xi| entering the verdict")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
    common.add_argument("--format", choices=("csv", "binary"), help="field file format")

    p = argparse.ArgumentParser(prog="tubesolve", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="check the solvability conditions at the cutoff")
    s = sub.add_parser("solve", parents=[common], help="solve P u = f for a field file")
    s.add_argument("--rhs", metavar="PATH", help="right-hand side field file")
    s.add_argument("--project", action="store_true", help="project resonant modes onto the compatible subspace")
    fg = sub.add_parser("forge", parents=[common], help="build a counterexample right-hand side")
    fg.add_argument("--tag", choices=("dc", "alpha", "beta"))
    fg.add_argument("--terms", type=int, help="number of terms in the partial sum")
    fg.add_argument("--sequence", help="frequencies as 'a,b;c,d;...'")
    fg.add_argument("--interval", type=float, nargs=2, metavar=("ALPHA", "BETA"), help="bump arc for dc")
    return p


COMMANDS = {"analyze": cmd_analyze, "solve": cmd_solve, "forge": cmd_forge}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ExpressionError, io.FieldFormatError, ResolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except counterexample.NoWitnessError as exc:
        print(f"error: no witnesses: {exc}", file=sys.stderr)
        return EXIT_NO_WITNESS


if __name__ == "__main__":
    sys.exit(main())
