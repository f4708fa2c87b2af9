"""Command line entry point: simulate, sweep, frontier, placement, welch."""
from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys
from dataclasses import fields

import numpy as np

from . import analysis, stats
from .engine import ESCALATE_TO, run_experiment
from .fleet import ConfigError, SystemConfig, read_jobs_csv
from .geometry import ServiceArea, multimedian_value, place_depots, zemel_lower_bound
from .policies import PolicyId

EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE = 0, 1, 2


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def _int_list(s: str) -> list[int]:
    """``1..24``, ``12,14,16`` or a mix like ``1..4,9``."""
    out = []
    for part in s.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _add_config_flags(p: argparse.ArgumentParser, skip=()) -> None:
    p.add_argument("--config", help="JSON file with SystemConfig keys")
    for f in fields(SystemConfig):
        if f.name in skip:
            continue
        typ = {"int": int, "bool": _bool}.get(str(f.type), float)
        flags = [f"--{f.name}"]
        if "_" in f.name:
            flags.append(f"--{f.name.replace('_', '-')}")
        p.add_argument(*flags, dest=f.name, type=typ, default=None)


def resolve_config(args, **fixed) -> SystemConfig:
    data = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for f in fields(SystemConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            data[f.name] = v
    data.update(fixed)
    if "alpha" in data and not {"flight_endurance", "charge_time"} & data.keys():
        fe = SystemConfig.flight_endurance
        data["charge_time"] = fe * (1.0 - data["alpha"]) / data["alpha"]
    return SystemConfig.from_dict(data)


def _dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _experiment(cfg: SystemConfig, args, policy: str):
    return run_experiment(cfg, policy, n_reps=args.reps, seed=args.seed, n_customers=args.customers,
                          escalate_to=args.escalate_to, n_wu=args.n_wu, keep_traces=True)


def _write_cell(res, out: str) -> None:
    os.makedirs(out, exist_ok=True)
    _dump_json(res.summary(), os.path.join(out, "summary.json"))
    for r, tr in enumerate(res.traces):
        tr.write(out, f"rep{r:02d}_")
    if res.welch is not None:
        stats.write_welch_csv(res.welch, os.path.join(out, "welch.csv"))


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    res = _experiment(cfg, args, args.policy)
    _write_cell(res, args.out)
    print(json.dumps(res.summary(), sort_keys=True))
    return EXIT_UNSTABLE if all(v == "unstable" for v in res.verdicts) else EXIT_OK


SWEEP_HEADER = ["policy", "L", "K", "stable", "n_wu", "T_mean_min", "ci90_lo", "ci90_hi", "n_unstable_reps"]


def _fmt(x) -> str:
    return "" if x is None else (f"{x:.6f}" if isinstance(x, float) else str(x))


def cmd_sweep(args) -> int:
    policies = [PolicyId.parse(t).token for t in args.policies.split(",")]
    Ks, Ls = _int_list(args.K), _int_list(args.L)
    base = resolve_config(args, K=Ks[0], L=Ls[0])  # validate before any simulation
    rows = []
    for pol in policies:
        for L in Ls:
            for K in Ks:
                cfg = base.replace(K=K, L=L)
                res = _experiment(cfg, args, pol)
                cell = os.path.join(args.out, "cells", f"{pol.replace('+', 'p').replace('-', 'm')}_L{L}_K{K}")
                if args.keep_traces:
                    _write_cell(res, cell)
                else:
                    os.makedirs(cell, exist_ok=True)
                    _dump_json(res.summary(), os.path.join(cell, "summary.json"))
                s = res.summary()
                # unstable cells are marked, not timed
                timed = s["stable"]
                rows.append([pol, L, K, s["stable"], s["n_wu"] if timed else None,
                             s["T_mean_min"] if timed else None, s["ci90_lo"] if timed else None,
                             s["ci90_hi"] if timed else None, res.verdicts.count("unstable")])
                print(f"{pol} L={L} K={K} stable={s['stable']} T={_fmt(s['T_mean_min'])}", file=sys.stderr)
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    with open(os.path.join(args.out, "impossible_regions.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "T_min_min", "B_min_min", "K_rho_eq_1"])
        for L in Ls:
            reg = analysis.impossible_region(base.lam, base.alpha, base.nu, L, base.side, Ks)
            w.writerow([L, f"{reg['T_min']:.6f}", f"{2 * reg['T_min']:.6f}", f"{reg['K_rho1']:.6f}"])
    return EXIT_OK


def _read_sweep(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_frontier(args) -> int:
    C_v, C_d = args.C_v, args.C_d
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        C_v = data.get("C_v") if C_v is None else C_v
        C_d = data.get("C_d") if C_d is None else C_d
    else:
        # no config file: Matternet costs unless overridden
        C_v = analysis.MATTERNET.C_v if C_v is None else C_v
        C_d = analysis.MATTERNET.C_d if C_d is None else C_d
    if C_v is None or C_d is None:
        print("error: config file lacks vehicle or depot cost (C_v, C_d)", file=sys.stderr)
        return EXIT_CONFIG
    if args.lambda_per_min is not None and args.lambda_per_hour is not None:
        raise ConfigError("give only one of --lambda-per-min / --lambda-per-hour")
    lam_h = args.lambda_per_hour if args.lambda_per_hour is not None else (
        60.0 * args.lambda_per_min if args.lambda_per_min is not None else 39.0)
    p = analysis.PlanningParams(args.A, args.alpha, lam_h, args.nu, C_d, C_v)
    if min(p.A, p.alpha, p.lambda_per_hour, p.nu_kmh) <= 0 or p.alpha > 1 or min(C_v, C_d) < 0:
        raise ConfigError("frontier inputs must be positive with 0 < alpha <= 1")
    os.makedirs(args.out, exist_ok=True)
    pts = analysis.frontier(p, l_max=args.l_max, rounding=args.vehicle_rounding)
    analysis.write_frontier_csv(pts, os.path.join(args.out, "frontier.csv"))
    with open(os.path.join(args.out, "integer_envelope.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "T_tread_min", "K", "cost_usd"])
        for L, T, K, cost in analysis.integer_envelope(p, l_max=args.l_max):
            w.writerow([L, f"{T:.6f}", K, f"{cost:.2f}"])
    if args.sweep:
        with open(os.path.join(args.out, "operating_points.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["policy", "L", "K", "T_mean_min", "cost_usd"])
            for r in _read_sweep(args.sweep):
                if r["stable"] == "True" and r["T_mean_min"]:
                    cost = analysis.infra_cost(int(r["K"]), int(r["L"]), C_v, C_d)
                    w.writerow([r["policy"], r["L"], r["K"], r["T_mean_min"], f"{cost:.2f}"])
    for pt in pts:
        print(f"L={pt.L} T>={pt.T_tread:.3f} min I_min={pt.I_min:.2f} K_term={pt.K_term}")
    return EXIT_OK


def cmd_placement(args) -> int:
    area = ServiceArea(args.side)
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    with open(os.path.join(args.out, "placement.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "H_L_km", "H_mc_km", "H_mc_stderr", "zemel_km", "method"])
        for L in _int_list(args.L):
            lay = place_depots(area, L, seed=args.seed)
            lay.save(os.path.join(args.out, f"layout_L{L}.json"))
            est, se = multimedian_value(lay, area, args.samples, rng)
            w.writerow([L, f"{lay.H_L:.6f}", f"{est:.6f}", f"{se:.6f}",
                        f"{zemel_lower_bound(area.A, L):.6f}", lay.method])
            print(f"L={L} H={lay.H_L:.5f} km ({lay.method})")
    return EXIT_OK


def cmd_welch(args) -> int:
    files = sorted(glob.glob(os.path.join(args.traces, "*jobs.csv")))
    if len(files) < 2:
        print("error: need at least two *jobs.csv traces", file=sys.stderr)
        return EXIT_CONFIG
    series = []
    for f in files:
        T = []
        for row in read_jobs_csv(f):
            if row["T"] is None:
                break
            T.append(row["T"])
        series.append(np.asarray(T))
    curve = stats.welch_curve(series, args.window_half)
    n_wu = stats.warmup_from_curve(curve, args.window_half)
    out = args.out or args.traces
    os.makedirs(out, exist_ok=True)
    stats.write_welch_csv(curve, os.path.join(out, "welch.csv"), args.window_half)
    summary = {"n_wu": n_wu, "n_traces": len(series), "window_half": args.window_half}
    if n_wu < min(len(s) for s in series):
        mean, (lo, hi), _ = stats.replication_deletion(series, n_wu)
        summary.update(T_mean_min=round(mean, 6), ci90_lo=round(lo, 6), ci90_hi=round(hi, 6))
    _dump_json(summary, os.path.join(out, "welch_summary.json"))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed; replication r uses seed + r")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--customers", type=int, default=4000)
    p.add_argument("--escalate-to", type=int, default=ESCALATE_TO)
    p.add_argument("--n-wu", type=int, default=None, help="fixed warm-up instead of Welch's estimate")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fleetsim", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="replicated run of one (policy, K, L) cell")
    _add_config_flags(p)
    _add_run_flags(p)
    p.add_argument("--policy", default="fj+")
    p.add_argument("--out", default="out/simulate")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="grid of policies x L x K")
    _add_config_flags(p, skip=("K", "L"))
    _add_run_flags(p)
    p.add_argument("--policies", default="nj+,nj-,fj+,fj-")
    p.add_argument("--K", default="1..24")
    p.add_argument("--L", default="1,4,9,16")
    p.add_argument("--keep-traces", action="store_true")
    p.add_argument("--out", default="out/sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("frontier", help="minimum infrastructure expenditure staircase")
    p.add_argument("--config")
    p.add_argument("--A", type=float, default=16.0)
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--nu", type=float, default=30.0, help="km/h")
    p.add_argument("--lambda-per-hour", type=float, default=None)
    p.add_argument("--lambda-per-min", type=float, default=None)
    p.add_argument("--C_v", "--C-v", dest="C_v", type=float, default=None)
    p.add_argument("--C_d", "--C-d", dest="C_d", type=float, default=None)
    p.add_argument("--l-max", type=int, default=100)
    p.add_argument("--vehicle-rounding", choices=("paper", "strict"), default="paper")
    p.add_argument("--sweep", help="sweep.csv to overlay as operating points")
    p.add_argument("--out", default="out/frontier")
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("placement", help="depot layouts and multi-median values")
    p.add_argument("--L", default="1,4,9,16")
    p.add_argument("--side", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--out", default="out/placement")
    p.set_defaults(func=cmd_placement)

    p = sub.add_parser("welch", help="warm-up analysis of stored job traces")
    p.add_argument("--traces", required=True, help="directory holding *jobs.csv files")
    p.add_argument("--window-half", type=int, default=stats.WINDOW_HALF)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_welch)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
