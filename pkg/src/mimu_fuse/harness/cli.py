"""Command-line interface: ``mimu-fuse {simulate,fuse,evaluate,montecarlo,sweep-j}``.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 when a
filter reports divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..eskf import start_time
from ..errors import ConfigError, EmptyOverlap, LogFormatError, MimuFuseError, UnsupportedSpec
from ..mechanization import NavState
from . import logs, runner
from .config import FILTERS, ScenarioConfig, dump_config, load_config
from .metrics import RmseReport, rmse

log = logging.getLogger("mimu_fuse")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_DIVERGED = 0, 1, 2, 3


def _config(args):
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "imus", None) is not None:
        changes["n_imu"] = args.imus
    if getattr(args, "bvr", None) is not None:
        changes["bvr"] = args.bvr == "on"
    return cfg.with_(**changes) if changes else cfg


def _filters(args, cfg):
    if not getattr(args, "filter", None):
        return list(cfg.filters)
    names = []
    for name in args.filter:
        if name == "uekf" and cfg.bvr:
            name = "uekf_bvr"
        names.append(name)
    return names


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    cfg = _config(args)
    run = runner.build_run(cfg, cfg.seed)
    out = _out(args)
    logs.write_imu_csv(out / "imu.csv", run.mimu_log)
    logs.write_aiding_csv(out / "aiding.csv", run.aiding_log)
    logs.write_nav_csv(out / "truth.csv", run.truth)
    (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
    print(f"wrote {len(run.mimu_log)} frames x {run.mimu_log.count} IMUs and {len(run.aiding_log)} fixes to {out}")
    return EXIT_OK


def _initial_state(track, t0):
    k = int(abs(track.t - t0).argmin())
    return NavState.from_euler(track.position[k], track.velocity[k], *track.euler[k])


def cmd_fuse(args):
    cfg = _config(args)
    src = Path(args.logs)
    mimu = logs.read_imu_csv(src / "imu.csv")
    aiding = logs.read_aiding_csv(src / "aiding.csv")
    truth = logs.read_nav_csv(Path(args.truth) if args.truth else src / "truth.csv")
    nav0 = runner.initial_nav(cfg, _initial_state(truth, start_time(mimu)), cfg.seed)
    noise = runner.build_noise(cfg, cfg.seed, mimu.count)
    fcfg = runner.filter_config(cfg, noise, nav0)
    out = _out(args)
    code = EXIT_OK
    for name in _filters(args, cfg):
        sol = runner.run_filter(name, mimu, aiding, fcfg)
        path = logs.write_nav_csv(out / f"solution_{name}.csv", sol)
        print(f"{name}: {sol.status} -> {path}")
        if sol.diverged:
            code = EXIT_DIVERGED
    return code


def cmd_evaluate(args):
    truth = logs.read_nav_csv(args.truth)
    rows = []
    for path in args.solution:
        track = logs.read_nav_csv(path)
        name = track.name or Path(path).stem.removeprefix("solution_")
        rows.append(rmse(track, truth, args.scenario, name))
    report = RmseReport(rows)
    _emit(report, args.out)
    return EXIT_DIVERGED if report.any_diverged else EXIT_OK


def _emit(report, out):
    text = report.to_text()
    print(text, end="")
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / "report.csv")
        (out / "report.txt").write_text(text, encoding="utf-8")


def cmd_montecarlo(args):
    cfg = _config(args)
    if args.seeds is not None:
        cfg = cfg.with_(seeds=args.seeds)
    result = runner.montecarlo(cfg, filters=_filters(args, cfg))
    _emit(result.report, args.out)
    for seed, fails in result.failures.items():
        for name, msg in fails.items():
            log.warning("seed %d, %s: %s", seed, name, msg)
    if result.failures:
        return EXIT_NUMERICAL
    return EXIT_DIVERGED if result.any_diverged else EXIT_OK


def cmd_sweep(args):
    cfg = _config(args)
    if args.seeds is not None:
        cfg = cfg.with_(seeds=args.seeds)
    name = args.filter[0] if args.filter else cfg.sweep_filter
    if name == "uekf" and cfg.bvr:
        name = "uekf_bvr"
    rows, ref = runner.sweep_array_size(cfg, filter_name=name)
    text = runner.sweep_text(rows, ref, name)
    print(text, end="")
    if args.out:
        out = _out(args)
        lines = ["n_imu,rmse_deg,improvement_pct,marginal_pct"]
        for r in rows:
            marg = "" if r.marginal is None else format(r.marginal, ".17g")
            lines.append(f"{r.n_imu},{r.rmse:.17g},{r.improvement:.17g},{marg}")
        (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        (out / "sweep.txt").write_text(text, encoding="utf-8")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--seed", type=int, metavar="N", help="override the config seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mimu-fuse", description="Multi-IMU fusion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def filters_arg(p, many=True):
        p.add_argument(
            "--filter", choices=FILTERS, action="append" if many else None,
            help="filter to run (repeatable); 'uekf' follows --bvr",
        )
        p.add_argument("--bvr", choices=("on", "off"), help="bias variance redistribution for 'uekf'")

    p = sub.add_parser("simulate", parents=[common], help="generate IMU, aiding and truth logs")
    p.add_argument("--out", metavar="DIR", required=True)
    p.add_argument("--imus", type=int, metavar="J")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fuse", parents=[common], help="run filters on logs")
    p.add_argument("--logs", metavar="DIR", required=True, help="directory with imu.csv and aiding.csv")
    p.add_argument("--truth", metavar="PATH", help="initial-state source (default LOGS/truth.csv)")
    p.add_argument("--out", metavar="DIR", required=True)
    filters_arg(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("evaluate", parents=[common], help="RMSE report of solutions against truth")
    p.add_argument("--solution", metavar="PATH", action="append", required=True)
    p.add_argument("--truth", metavar="PATH", required=True)
    p.add_argument("--scenario", default="run")
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("montecarlo", parents=[common], help="aggregate report over seeds")
    p.add_argument("--seeds", type=int, metavar="N", help="number of seeds (default montecarlo.seeds)")
    p.add_argument("--imus", type=int, metavar="J")
    p.add_argument("--out", metavar="DIR")
    filters_arg(p)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("sweep-j", parents=[common], help="improvement versus array size")
    p.add_argument("--seeds", type=int, metavar="N")
    p.add_argument("--out", metavar="DIR")
    filters_arg(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, LogFormatError, UnsupportedSpec, EmptyOverlap) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FloatingPointError, MimuFuseError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
