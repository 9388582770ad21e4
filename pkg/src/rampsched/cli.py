"""Command-line surface: solve schedules, verify, report economics.

Exit codes: 0 success, 1 input error, 2 solver non-convergence,
3 verification gap.  Outputs are written to temp names and renamed on
success, so a crashed run never leaves partial files.  Verbosity comes
from the RAMP_SCHED_LOG environment variable (error|warn|info|debug).
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import costmodel as cmod
from . import econ, oracle, pmp, profiles
from .errors import DivergenceError, RampSchedError, ValidationError

logger = logging.getLogger("rampsched.cli")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
EXIT_VERIFICATION = 3

DEFAULT_OBJECTIVE_GAP = 0.005     # relative objective tolerance for checks
DEFAULT_PM_GAP_FRACTION = 0.02    # trajectory gap tolerance as share of Pbar

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _configure_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("RAMP_SCHED_LOG", "warn").lower(),
                            logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _parse_schedule(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"bad --alpha-schedule {text!r}") from exc


def _load_net_profile(path: str, dt: float | None,
                      scale: float = 1.0) -> profiles.SampledProfile:
    """Read the dispatch load; nets out a pv_kw column when present."""
    cols = profiles.load_csv(path, scale=scale)
    if "load" not in cols:
        raise ValidationError(f"{path}: no load_kw column")
    load = cols["load"]
    if "pv" in cols:
        load = load.with_values(np.maximum(load.values - cols["pv"].values, 0.0))
    if dt is not None:
        load = profiles.resample_periodic(load, dt)
    return load


def _build_scenario(args) -> tuple[pmp.Scenario, cmod.MachineSpec]:
    cfg = cmod.load_config(args.machine)
    fleet = cmod.fleet_from_config(cfg, count_override=args.fleet_count)
    load = _load_net_profile(args.load, args.dt, args.load_scale)
    if args.alpha_schedule is not None:
        schedule = _parse_schedule(args.alpha_schedule)
    elif "alpha" in cfg:
        schedule = (float(cfg["alpha"]),)
    else:
        schedule = pmp.DEFAULT_ALPHA_SCHEDULE
    tol = pmp.Tolerances(tol_bc=args.tol_bc, tol_stat=args.tol_stat)
    sc = pmp.make_scenario(
        load, fleet,
        g=cfg.get("g_override"),
        d=cfg.get("d", 1.0),
        alpha_schedule=schedule,
        tolerances=tol,
    )
    return sc, fleet.machine


def cmd_solve(args) -> int:
    out = Path(args.out)
    sc, _ = _build_scenario(args)
    try:
        sol = pmp.solve(sc)
    except DivergenceError as exc:
        print(f"error: integration diverged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    diagnostics = pmp.solution_diagnostics(sol, sc)
    _write_atomic(out / "solution.csv", pmp.solution_to_csv(sol, sc))
    _write_atomic(out / "diagnostics.json", _json_text(diagnostics))
    if args.format == "json":
        print(_json_text(diagnostics), end="")
    if not sol.converged:
        print(f"not converged: residual {sol.periodic_residual:.3g} at "
              f"alpha {sol.alpha_used:g}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    logger.info("converged in %d Newton iterations at alpha %g",
                sol.newton_iters, sol.alpha_used)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    out = Path(args.out)
    sc, _ = _build_scenario(args)
    if args.n is not None:
        load = profiles.resample_periodic(sc.load, sc.load.period_T / args.n)
        sc = pmp.make_scenario(load, sc.fleet, g=sc.cost.g, d=sc.cost.d,
                               cm=sc.cost.cm, alpha_schedule=sc.alpha_schedule,
                               tolerances=sc.tolerances)
    try:
        sol = pmp.solve(sc)
    except DivergenceError as exc:
        print(f"error: integration diverged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    ref = oracle.solve_projected_gradient(sc, max_iters=args.oracle_iters)

    j_pmp = pmp.evaluate(sol, sc)
    # penalty excluded: the discrete program enforces the box exactly
    j_pmp_cmp = (j_pmp.generation_usd + j_pmp.ramping_usd - j_pmp.revenue_usd)
    obj_gap = abs(j_pmp_cmp - ref.objective) / (1.0 + abs(ref.objective))
    pm_gap = float(np.max(np.abs(sol.pm_clipped[:-1] - ref.pm)))
    pm_gap_frac = pm_gap / sc.cost.pbar_kw
    ok = (sol.converged and obj_gap <= args.obj_tol
          and pm_gap_frac <= args.pm_tol)

    doc = {
        "n": sc.load.count,
        "solver_converged": sol.converged,
        "objective_solver_usd": j_pmp_cmp,
        "objective_oracle_usd": ref.objective,
        "objective_gap_rel": obj_gap,
        "pm_gap_linf_kw": pm_gap,
        "pm_gap_fraction_of_pbar": pm_gap_frac,
        "oracle_iterations": ref.iterations,
        "oracle_grad_norm": ref.grad_norm,
        "tolerances": {"objective_gap_rel": args.obj_tol,
                       "pm_gap_fraction_of_pbar": args.pm_tol},
        "within_tolerance": ok,
    }
    _write_atomic(out / "comparison.json", _json_text(doc))
    _write_atomic(out / "oracle_solution.csv", oracle.oracle_to_csv(ref, sc))
    _write_atomic(out / "oracle_diagnostics.json",
                  _json_text(oracle.oracle_diagnostics(ref, sc)))
    _write_atomic(out / "solution.csv", pmp.solution_to_csv(sol, sc))
    _write_atomic(out / "diagnostics.json",
                  _json_text(pmp.solution_diagnostics(sol, sc)))
    if not ok:
        print(f"verification gap: objective {obj_gap:.3%}, "
              f"pm {pm_gap_frac:.3%} of Pbar", file=sys.stderr)
        return EXIT_VERIFICATION
    return EXIT_OK


def _scenario_from_solution(args, cfg) -> tuple[pmp.PmpSolution, pmp.Scenario]:
    sol_dir = Path(args.solution)
    csv_path = sol_dir / "solution.csv" if sol_dir.is_dir() else sol_dir
    diag_path = csv_path.parent / "diagnostics.json"
    cols = pmp.read_solution_csv(csv_path)
    diag = json.loads(diag_path.read_text(encoding="utf-8"))

    t = cols["t_h"]
    dt = float(t[1] - t[0])
    load = profiles.SampledProfile(dt, cols["pl_kw"][:-1])
    fleet = cmod.fleet_from_config(cfg, count_override=args.fleet_count)
    alpha = float(diag["alpha_used"])
    cost = cmod.costmodel_from_config(cfg, fleet, alpha=alpha)
    sc = pmp.Scenario(load=load, cost=cost, fleet=fleet,
                      alpha_schedule=(alpha,))
    sol = pmp.PmpSolution(
        grid=load,
        x_traj=cols["x_kw"], lambda_traj=cols["lambda"],
        u_traj=cols["u_kw_per_h"], pm_traj=cols["pm_kw"],
        pm_clipped=cols["pm_clipped_kw"],
        converged=bool(diag["converged"]),
        periodic_residual=float(diag["periodic_residual"]),
        stationarity_residual=float(diag["stationarity_residual"]),
        newton_iters=int(diag["newton_iters"]),
        alpha_used=alpha,
    )
    return sol, sc


def cmd_econ(args) -> int:
    if args.breakeven:
        if args.daily_profit is None:
            raise ValidationError("--breakeven requires --daily-profit")
        print(f"{econ.breakeven_max_machine_price(args.daily_profit):.10g}")
        return EXIT_OK

    cfg = cmod.load_config(args.machine)
    machine = cmod.machine_from_config(cfg)
    out = Path(args.out)

    report = None
    stats_ramp_saved = 0.0
    if args.solution is not None:
        sol, sc = _scenario_from_solution(args, cfg)
        report = econ.daily_report(sol, sc, machine, attribution=args.attribution)
        stats_ramp_saved = report.ramping_saved
        _write_atomic(out / "econ_report.json",
                      _json_text(econ.report_as_dict(report)))
        _write_atomic(out / "econ_report.txt",
                      econ.format_report_table([report]))
        if args.format == "table":
            print(econ.format_report_table([report]), end="")
        else:
            print(_json_text(econ.report_as_dict(report)), end="")

    if args.project is not None:
        if args.price_trend is None:
            raise ValidationError("--project requires --price-trend data")
        price_fit = econ.fit_price_trend(econ.read_trend_csv(args.price_trend))
        trend = price_fit
        if args.ramp_trend is not None:
            trend = price_fit.merged_with(
                econ.fit_ramp_trend(econ.read_trend_csv(args.ramp_trend)))
        trend = econ.TrendModel(
            price_intercept=trend.price_intercept,
            price_slope=trend.price_slope, price_rms=trend.price_rms,
            ramp_coeff=trend.ramp_coeff, ramp_rms=trend.ramp_rms,
            share_per_year=args.share_per_year)
        stats = econ.ScheduleStats(
            share0_pct=args.share0,
            ramp_saved_usd_day=stats_ramp_saved,
            profit=econ.ProfitModel(a=args.profit_a, b=args.profit_b))
        series = econ.project_net_profit(machine, trend, args.project, stats)
        lines = ["year,net_usd_day,mining_usd_day,ramping_saved_usd_day"]
        for i, year in enumerate(series.years):
            lines.append(f"{year},{repr(series.net[i])},{repr(series.mining[i])},"
                         f"{repr(series.ramping_saved[i])}")
        _write_atomic(out / "projection.csv", "\n".join(lines) + "\n")

    if report is None and args.project is None:
        raise ValidationError("nothing to do: pass --solution, --project, "
                              "or --breakeven")
    return EXIT_OK


def cmd_synth(args) -> int:
    out = Path(args.out)
    load, pv, net = profiles.synth_duck_curve(
        args.base, args.evening_peak, args.pv_peak, dt=args.dt)
    buf = io.StringIO()
    profiles.write_csv(buf, load=load, pv=pv)
    _write_atomic(out / "duck_profiles.csv", buf.getvalue())
    buf = io.StringIO()
    profiles.write_csv(buf, load=net)
    _write_atomic(out / "duck_net.csv", buf.getvalue())
    return EXIT_OK


def _add_seed_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0,
                   help="reserved for reproducibility; all commands are "
                        "deterministic already")


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--load", required=True, help="load CSV (timestamp,load_kw[,pv_kw])")
    p.add_argument("--machine", required=True, help="machine key=value config file")
    p.add_argument("--fleet-count", type=int, default=None)
    p.add_argument("--alpha-schedule", default=None,
                   help="comma-separated increasing penalty weights")
    p.add_argument("--dt", type=float, default=None, help="resample load to this spacing [h]")
    p.add_argument("--load-scale", type=float, default=1.0,
                   help="multiply ingested power columns by this factor")
    p.add_argument("--tol-bc", type=float, default=pmp.DEFAULT_TOL_BC)
    p.add_argument("--tol-stat", type=float, default=pmp.DEFAULT_TOL_STAT)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rampsched",
        description="Miner-dispatch schedules that flatten generation ramps")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scheduling scenario")
    _add_scenario_flags(p)
    _add_seed_flag(p)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="csv",
                   help="with json, also print the diagnostics document")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle-check", help="cross-check the solver against "
                                            "the discrete-oracle solution")
    _add_scenario_flags(p)
    _add_seed_flag(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None, help="resample to N nodes")
    p.add_argument("--obj-tol", type=float, default=DEFAULT_OBJECTIVE_GAP)
    p.add_argument("--pm-tol", type=float, default=DEFAULT_PM_GAP_FRACTION)
    p.add_argument("--oracle-iters", type=int, default=oracle.DEFAULT_MAX_ITERS)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("econ", help="economics reports and projections")
    p.add_argument("--machine", default=None)
    p.add_argument("--solution", default=None,
                   help="solution directory or solution.csv path")
    p.add_argument("--fleet-count", type=int, default=None)
    p.add_argument("--attribution", choices=("marginal", "average"),
                   default="marginal")
    p.add_argument("--out", default=".")
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.add_argument("--breakeven", action="store_true")
    p.add_argument("--daily-profit", type=float, default=None)
    p.add_argument("--project", type=int, default=None, help="projection years")
    p.add_argument("--price-trend", default=None, help="share_pct,value CSV")
    p.add_argument("--ramp-trend", default=None, help="share_pct,value CSV")
    p.add_argument("--share0", type=float, default=10.0)
    p.add_argument("--share-per-year", type=float, default=0.0)
    p.add_argument("--profit-a", type=float, default=14.0)
    p.add_argument("--profit-b", type=float, default=0.1)
    _add_seed_flag(p)
    p.set_defaults(func=cmd_econ)

    p = sub.add_parser("synth", help="write synthetic duck-curve profiles")
    p.add_argument("--base", type=float, required=True)
    p.add_argument("--evening-peak", type=float, required=True)
    p.add_argument("--pv-peak", type=float, required=True)
    p.add_argument("--dt", type=float, default=profiles.DEFAULT_DT_HOURS)
    p.add_argument("--out", required=True)
    _add_seed_flag(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "econ" and not args.breakeven and args.machine is None:
        print("error: --machine is required", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DivergenceError as exc:
        print(f"error: integration diverged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except RampSchedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
