"""Command line entry point.

Exit codes: 0 success, 2 infeasible root, 3 configuration error,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .outputs import OutputError, emit_outputs
from .randmodels import oracle_check
from .runner import SimulationInfeasible, compare, run_simulation, sweep
from .scenario import ConfigError, default_scenario_path, load_scenario

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_CONFIG = 3
EXIT_VERIFY = 4


def _load(args):
    path = args.scenario or default_scenario_path()
    cfg = load_scenario(path)
    if getattr(args, "mode", None):
        cfg = cfg.with_mode(args.mode)
    return cfg


def _fmt_timeline(tl):
    return ", ".join(f"{t:.1f}s a={a}->s={s}" for t, a, s in tl)


def _summary(rep):
    print(f"[{rep.mode}] timeline: {_fmt_timeline(rep.timeline)}")
    gap = rep.min_gap_lane_change
    print(f"[{rep.mode}] min gap during lane change: "
          f"{'n/a' if gap is None else f'{gap:.2f} m'}; goal at "
          f"{'never' if rep.goal_time is None else f'{rep.goal_time:.1f} s'}")
    if rep.mode == "hmdp":
        print(f"[{rep.mode}] value monitor: {'ok' if rep.lyapunov_ok else 'FAILED'} "
              f"{rep.lyapunov_failures}; shifted-plan monitor: "
              f"{'ok' if rep.shift_ok else 'FAILED'} {rep.shift_failures}")


def _monitors_ok(rep):
    return rep.mode != "hmdp" or (rep.lyapunov_ok and rep.feasibility_ok)


def cmd_run(args) -> int:
    cfg = _load(args)
    try:
        trace, rep = run_simulation(cfg)
    except SimulationInfeasible as exc:
        emit_outputs(exc.trace, exc.report, args.out)
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    emit_outputs(trace, rep, args.out)
    _summary(rep)
    if args.strict and not _monitors_ok(rep):
        return EXIT_VERIFY
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    try:
        res = compare(cfg)
    except SimulationInfeasible as exc:
        emit_outputs(exc.trace, exc.report, args.out, prefix=f"{exc.report.mode}_")
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    for mode in ("hmdp", "rule"):
        trace, rep = getattr(res, mode)
        emit_outputs(trace, rep, args.out, prefix=f"{mode}_")
        _summary(rep)
    out = Path(args.out) / "compare.json"
    out.write_text(json.dumps(res.summary(), indent=2, sort_keys=True) + "\n")
    if args.strict and not _monitors_ok(res.hmdp[1]):
        return EXIT_VERIFY
    return EXIT_OK


def cmd_oracle(args) -> int:
    rep = oracle_check(args.instances, args.seed)
    print(f"instances={rep.instances} passed={rep.passed} failed={rep.failed} "
          f"infeasible_roots={rep.infeasible_roots} divergence_controls="
          f"{rep.divergence_detected}/{rep.divergence_controls}")
    if rep.failures:
        text = json.dumps(rep.failures, indent=2)
        if args.out:
            Path(args.out).write_text(text + "\n")
            print(f"failing instances written to {args.out}")
        else:
            print(text)
    return EXIT_OK if rep.ok else EXIT_VERIFY


def _parse_values(text):
    vals = [v.strip() for v in text.split(",") if v.strip()]
    if not vals:
        raise ConfigError("--values: empty list")
    try:
        return [float(v) for v in vals]
    except ValueError as exc:
        raise ConfigError(f"--values: {exc}") from exc


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = _parse_values(args.values)
    try:
        results = sweep(cfg, args.param, values)
    except KeyError as exc:
        raise ConfigError(f"--param: unknown parameter {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ConfigError(f"--param {args.param}: {exc}") from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ("value", "completed", "goal_time", "min_gap_lane_change", "lyapunov_ok",
            "shift_ok", "runtime")
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for v, rep in results:
            w.writerow([v, rep.completed, rep.goal_time, rep.min_gap_lane_change,
                        rep.lyapunov_ok, rep.shift_ok, f"{rep.runtime:.4f}"])
    for v, rep in results:
        print(f"{args.param}={v}: completed={rep.completed} goal={rep.goal_time} "
              f"min_gap={rep.min_gap_lane_change}")
    return EXIT_OK if all(rep.completed for _, rep in results) else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hmdp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_arg(p):
        p.add_argument("--scenario", type=Path, default=None,
                       help="scenario YAML (default: packaged scenario)")

    p = sub.add_parser("run", help="closed-loop run of one decision mode")
    scenario_arg(p)
    p.add_argument("--mode", choices=("hmdp", "rule"), default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--strict", action="store_true",
                   help="exit 4 when a runtime monitor fails")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run both modes on the same scenario")
    scenario_arg(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("oracle-check", help="solver vs brute force on random models")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="where to write failing instances")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="repeat a run over values of one parameter")
    scenario_arg(p)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma separated list")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
