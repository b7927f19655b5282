"""Command-line entry point: ``bisparc {run,sweep,threshold,selftest}``.

Configuration comes from an optional ``key = value`` file; ``--seed``,
``--trials`` and repeated ``--set key=value`` override it. Without a
file the DS-1 desk scenario is used. Exit status is 0 on success, 2 on
invalid input and 3 on I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import dictionary as dictionary_mod
from . import harness
from .config import (
    SystemConfig,
    ds1_config,
    dump_config,
    eb_n0_db,
    load_config,
    parse_config_text,
    validate,
    with_eb_n0_db,
)
from .detector import write_diagnostics
from .errors import BisparcError
from .outer import write_alist

EXIT_INPUT = 2
EXIT_IO = 3


def _values(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty value list")
    return vals


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value scenario file")
    common.add_argument("--seed", type=int, help="master seed (overrides the file)")
    common.add_argument("--trials", type=int, help="trials per point (overrides the file)")
    common.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default ${harness.WORKERS_ENV} or 1)")
    common.add_argument("--out", type=Path, help="CSV output path")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config field; repeatable")
    common.add_argument("--no-timing", action="store_true",
                        help="write wall_time_s as 0 so reruns are byte-identical")

    p = argparse.ArgumentParser(prog="bisparc", description="BiSPARC unsourced random access simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="simulate one scenario")
    run.add_argument("--eb-n0", type=float, help="Eb/N0 in dB (sets sigma2)")
    run.add_argument("--trace", type=Path, help="per-round receiver trace CSV")
    run.add_argument("--diagnostics", type=Path, help="detector diagnostics CSV of trial 0")
    run.add_argument("--save-dictionary", type=Path, help="binary dump of the shared dictionary")
    run.add_argument("--save-code", type=Path, help="outer parity-check matrix in alist format")

    sweep = sub.add_parser("sweep", parents=[common], help="sweep one axis")
    sweep.add_argument("--axis", choices=harness.AXES, default="eb_n0_db")
    sweep.add_argument("--values", type=_values, required=True, help="comma-separated axis values")
    sweep.add_argument("--scenario-id", default=None)

    thr = sub.add_parser("threshold", parents=[common], help="smallest grid Eb/N0 reaching the target PUPE")
    thr.add_argument("--values", type=_values, required=True, help="ascending Eb/N0 grid in dB")
    thr.add_argument("--target", type=float, default=harness.TARGET_PE)
    thr.add_argument("--scenario-id", default=None)

    st = sub.add_parser("selftest", help="run the built-in invariant checks")
    st.add_argument("--seed", type=int, default=0)
    return p


def _config(args) -> tuple[SystemConfig, str]:
    if args.config is not None:
        base = load_config(args.config)
        scenario = args.config.stem
    else:
        base = ds1_config()
        scenario = "DS-1"
    if args.overrides:
        base = parse_config_text("\n".join(args.overrides), base)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if changes:
        base = base.replace(**changes)
    return validate(base), scenario


def _print_points(points) -> None:
    for p in points:
        flag = "meets" if p.meets_target else "misses"
        print(f"{p.axis_name}={p.axis_value:g}  Eb/N0={eb_n0_db(p.config):.2f} dB  "
              f"PUPE={p.pupe_mean:.4f} +/- {p.pupe_ci95:.4f}  ({flag} Pe<={harness.TARGET_PE})  "
              f"rounds={p.rounds_mean:.2f}  diverged={p.diverged_trials}", flush=True)


def _cmd_run(args) -> int:
    cfg, scenario = _config(args)
    if args.eb_n0 is not None:
        cfg = validate(with_eb_n0_db(cfg, args.eb_n0))
    A, code = harness.build_scenario(cfg)
    if args.save_dictionary:
        dictionary_mod.dump(A, args.save_dictionary)
    if args.save_code:
        write_alist(code, args.save_code)
    if args.diagnostics:
        _, result = harness.run_trial(cfg, 0, (A, code), keep_result=True)
        write_diagnostics(result.diagnostics[0] if result.diagnostics else [], args.diagnostics)
    point = harness.run_point(cfg, cfg.trials, args.workers, "eb_n0_db", eb_n0_db(cfg),
                              timing=not args.no_timing)
    _print_points([point])
    if args.out:
        harness.write_csv([point], args.out, scenario)
    if args.trace:
        _write_trace(point.records, args.trace)
    return 0


def _write_trace(records, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "round", "decoded", "residual_energy"])
        for rec in records:
            for rnd, count, energy in rec.trace:
                w.writerow([rec.trial_id, rnd, count, repr(energy)])


def _cmd_sweep(args) -> int:
    cfg, scenario = _config(args)
    spec = harness.SweepSpec(cfg, args.axis, args.values, cfg.trials, args.out,
                             args.scenario_id or scenario)
    harness.run_sweep(spec, args.workers, timing=not args.no_timing,
                      progress=lambda p: _print_points([p]))
    return 0


def _cmd_threshold(args) -> int:
    cfg, scenario = _config(args)
    threshold, sweep = harness.find_required_ebn0(
        cfg, args.target, args.values, cfg.trials, args.workers, args.out,
        timing=not args.no_timing, scenario_id=args.scenario_id or scenario)
    _print_points(sweep.points)
    if threshold is None:
        print(f"required Eb/N0 for Pe<={args.target}: not achieved on this grid")
    else:
        print(f"required Eb/N0 for Pe<={args.target}: {threshold:g} dB")
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_checks

    failures = 0
    for name, ok, detail in run_checks(seed=args.seed):
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        failures += not ok
    print(f"{failures} failure(s)")
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "threshold": _cmd_threshold,
                "selftest": _cmd_selftest}
    try:
        if getattr(args, "workers", None) is not None and args.workers < 1:
            raise BisparcError("--workers must be >= 1")
        return handlers[args.command](args)
    except (BisparcError, ValueError) as exc:
        print(f"bisparc: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"bisparc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def config_template() -> str:
    """Full ``key = value`` listing of the DS-1 scenario, handy as a starting file."""
    return dump_config(ds1_config())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
