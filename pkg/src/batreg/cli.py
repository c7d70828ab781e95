"""Command-line interface: ``batreg {count,gap,simulate,oracle,batch}``.

Exit codes: 0 success, 1 invariant violation during a run, 2 input error,
3 oracle budget exceeded.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from .analysis import optimality_gap_bound
from .config import ConfigError, RunConfig, build_config, parse_overrides, read_config_file
from .core import MarketPrices, RegulationTrace, SocBoundsError
from .cost import delta_life
from .offline import BudgetExceeded, OracleConfig, brute_force_offline, gap_against, run_threshold
from .rainflow import DEFAULT_TOL, extract_extrema, rainflow_count
from .sim import (BATCH_COLUMNS, PJM_INTERVAL_H, POLICIES, InvariantViolation, TraceFormatError,
                  generate_trace, load_profile_csv, load_trace_csv, run_batch, run_simulation,
                  table_cases)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_INPUT = 2
EXIT_BUDGET = 3

BREAKDOWN_COLUMNS = ("policy", "theta", "pi", "j_cyc", "j_reg", "j_total", "delta_life")

log = logging.getLogger("batreg")


class InputError(Exception):
    pass


# --------------------------------------------------------------------------- output

def _clean(obj):
    # NaN and inf are not JSON; report them as null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ""
    return str(x)


def render_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def render_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------- inputs

def _config(args) -> tuple[RunConfig, set]:
    data = read_config_file(args.config) if args.config else {}
    overrides = parse_overrides(args.set)
    return build_config(data, overrides), set(data) | set(overrides)


def _trace(args, cfg: RunConfig, explicit: set, default_steps: int) -> tuple[RegulationTrace, RunConfig]:
    """Trace from ``--trace`` or a seeded synthetic one; the battery interval follows it."""
    if args.trace:
        T = cfg.T if "T" in explicit else PJM_INTERVAL_H
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            tr = load_trace_csv(args.trace, cfg.P, T, args.normalized, args.negate)
        for wmsg in caught:
            log.warning("%s", wmsg.message)
        return tr, replace(cfg, T=T)
    steps = args.steps if args.steps is not None else default_steps
    if steps < 1:
        raise InputError("--steps must be at least 1")
    return generate_trace(args.seed, steps, cfg.P, cfg.T), cfg


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


# --------------------------------------------------------------------------- commands

def cmd_count(args) -> int:
    cfg, _ = _config(args)
    prof = load_profile_csv(args.profile)
    cs = rainflow_count(extract_extrema(prof, args.tol)) if prof.size else rainflow_count([])
    rep = cs.to_dict()
    rep["delta_life"] = delta_life(cs, cfg.stress()) if prof.size else 0.0
    if args.format == "csv":
        rows = [{"kind": k, "depth": float(x)} for k in "uvw" for x in rep[k]]
        _emit(args, render_csv(rows, ("kind", "depth")))
    else:
        _emit(args, render_json(rep))
    return EXIT_OK


def cmd_gap(args) -> int:
    cfg, _ = _config(args)
    rep = optimality_gap_bound(cfg.prices(), cfg.battery(), cfg.stress()).to_dict()
    if args.format == "csv":
        _emit(args, render_csv([rep], ("u_hat", "v_hat", "w_hat", "regime", "epsilon")))
    else:
        _emit(args, render_json(rep))
    return EXIT_OK


def _oracle_cfg(args) -> OracleConfig:
    return OracleConfig(args.levels, args.max_steps, args.budget)


def cmd_simulate(args) -> int:
    cfg, explicit = _config(args)
    tr, cfg = _trace(args, cfg, explicit, default_steps=96)
    p, phi = cfg.battery(), cfg.stress()
    policies = [x.strip() for x in args.compare.split(",")] if args.compare else [args.policy]
    for pol in policies:
        if pol not in POLICIES:
            raise InputError(f"unknown policy {pol!r}; expected one of {', '.join(POLICIES)}")
    thetas = _float_list(args.sweep_theta) if args.sweep_theta else [cfg.theta]
    oracle = _oracle_cfg(args) if args.oracle else None
    reports = []
    for theta in thetas:
        m = MarketPrices(theta, theta if args.pi_follows else cfg.pi)
        for pol in policies:
            reports.append(run_simulation(pol, tr, cfg.initial_soc(), p, phi, m, oracle,
                                          metadata={"seed": None if args.trace else args.seed}))
    if len(reports) == 1 and args.format != "csv":
        _emit(args, render_json(reports[0].to_dict(series=args.series)))
        return EXIT_OK
    rows = [{"policy": r.policy, "theta": r.metadata["theta"], "pi": r.metadata["pi"],
             **r.breakdown.to_dict()} for r in reports]
    if args.format == "json":
        _emit(args, render_json(rows))
    else:
        _emit(args, render_csv(rows, BREAKDOWN_COLUMNS))
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg, explicit = _config(args)
    tr, cfg = _trace(args, cfg, explicit, default_steps=6)
    p, phi, m = cfg.battery(), cfg.stress(), cfg.prices()
    oc = _oracle_cfg(args)
    e0 = cfg.initial_soc()
    _, pol = run_threshold(tr, p, phi, m, e0)
    if args.no_slack:
        opt = brute_force_offline(tr, p, phi, m, e0, oc)
        gap, slack = max(pol.j_total - opt.cost.j_total, 0.0), None
    else:
        gap, _, slack, opt, _ = gap_against(pol.j_total, tr, p, phi, m, e0, oc)
    out = {"optimum": opt.cost.j_total,
           "dispatch": {"c": opt.dispatch.c.tolist(), "d": opt.dispatch.d.tolist()},
           "gap_vs_policy": gap, "slack": slack}
    if args.format == "csv":
        _emit(args, render_csv([out], ("optimum", "gap_vs_policy", "slack")))
    else:
        _emit(args, render_json(out))
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg, _ = _config(args)
    cases = table_cases(args.steps if args.steps is not None else 3)
    if args.cases:
        wanted = [x.strip() for x in args.cases.split(",")]
        known = {c.name for c in cases}
        missing = [w for w in wanted if w not in known]
        if missing:
            raise InputError(f"unknown case(s) {', '.join(missing)}; known: {', '.join(sorted(known))}")
        cases = [c for c in cases if c.name in wanted]
    oracle = None if args.no_oracle else _oracle_cfg(args)
    rows, trials = run_batch(cases, args.trials, cfg.battery(), cfg.stress(), cfg.e0, oracle,
                             jobs=args.jobs, first_seed=args.seed)
    if args.reports:
        lines = [json.dumps(_clean({"case": t.case, "seed": t.seed,
                                    "threshold": t.policy.to_dict(), "simple": t.simple.to_dict()}),
                            sort_keys=True) for t in trials]
        Path(args.reports).write_text("\n".join(lines) + "\n")
    if args.format == "json":
        _emit(args, render_json(rows))
    else:
        _emit(args, render_csv(rows, BATCH_COLUMNS))
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def _global_options(default) -> argparse.ArgumentParser:
    # shared by the top level and every subcommand, so flags work on either side
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", metavar="PATH", default=default(None), help="YAML parameter file")
    g.add_argument("--set", metavar="KEY=VALUE", action="append", default=default(None),
                   help="override one config key (repeatable; wins over --config)")
    g.add_argument("--seed", type=int, default=default(1), help="seed for synthetic traces")
    g.add_argument("--output", metavar="PATH", default=default(None), help="write here instead of stdout")
    g.add_argument("--format", choices=("csv", "json"), default=default(None))
    g.add_argument("--jobs", type=int, default=default(1), help="worker processes for batch trials")
    g.add_argument("-v", "--verbose", action="count", default=default(0))
    return g


def _trace_options(sp) -> None:
    sp.add_argument("--trace", metavar="CSV", help="t,r trace file (default: synthetic)")
    sp.add_argument("--normalized", action="store_true", help="trace values are in [-1, 1]; scale by P")
    sp.add_argument("--negate", action="store_true", help="flip the sign of the trace values")
    sp.add_argument("--steps", type=int, help="length of the synthetic trace")


def _oracle_options(sp) -> None:
    sp.add_argument("--levels", type=int, default=9, help="action levels per step (K)")
    sp.add_argument("--max-steps", type=int, default=12, help="longest trace the oracle accepts")
    sp.add_argument("--budget", type=int, default=10_000_000, help="search node budget")


def build_parser() -> argparse.ArgumentParser:
    suppressed = _global_options(lambda v: argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="batreg", parents=[_global_options(lambda v: v)],
                                     description="Cycle-aware battery response to regulation signals.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("count", parents=[suppressed], help="rainflow-count a t,s profile CSV")
    sp.add_argument("profile", help="CSV with header t,s (normalized SoC)")
    sp.add_argument("--tol", type=float, default=DEFAULT_TOL, help="plateau tolerance")
    sp.set_defaults(func=cmd_count)

    sp = sub.add_parser("gap", parents=[suppressed], help="depth thresholds and the regret bound")
    sp.set_defaults(func=cmd_gap)

    sp = sub.add_parser("simulate", parents=[suppressed], help="run a policy over a trace")
    _trace_options(sp)
    sp.add_argument("--policy", choices=POLICIES, default="threshold")
    sp.add_argument("--compare", metavar="P1,P2", help="cost breakdown for several policies")
    sp.add_argument("--sweep-theta", metavar="V1,V2,...", help="repeat for each theta")
    sp.add_argument("--pi-follows", action="store_true", help="in a sweep, set pi equal to theta")
    sp.add_argument("--series", action="store_true", help="include SoC and dispatch series in JSON")
    sp.add_argument("--oracle", action="store_true", help="also solve the offline optimum")
    _oracle_options(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("oracle", parents=[suppressed], help="offline optimum of a short trace")
    _trace_options(sp)
    _oracle_options(sp)
    sp.add_argument("--no-slack", action="store_true", help="skip the refined-grid solve")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("batch", parents=[suppressed], help="trial batch over the table cases")
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--steps", type=int, help="base trace length per case (default 3)")
    sp.add_argument("--cases", metavar="C1,C2", help="subset of case names 1..9")
    sp.add_argument("--no-oracle", action="store_true", help="skip the offline optimum")
    sp.add_argument("--reports", metavar="PATH", help="write per-trial JSON lines here")
    _oracle_options(sp)
    sp.set_defaults(func=cmd_batch)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="batreg: %(levelname)s: %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except BudgetExceeded as exc:
        print(f"batreg: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InvariantViolation, SocBoundsError) as exc:
        print(f"batreg: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InputError, ConfigError, TraceFormatError, OSError, ValueError, TypeError) as exc:
        print(f"batreg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
