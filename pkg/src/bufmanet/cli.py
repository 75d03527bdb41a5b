"""Command-line entry point: ``bufmanet <verb> [options]``."""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import replace

from . import harness
from .errors import InvalidParameter, NoConvergence
from .sim import run_simulation, write_trace

log = logging.getLogger("bufmanet")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    p.add_argument("--config", help="key = value file with scenario/sweep fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--slots", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--out", help="CSV output path (stdout when omitted)")
    p.add_argument("--quiet", action="store_true")
    if not scenario:
        return
    p.add_argument("--mobility", choices=["iid", "rw"])
    p.add_argument("--mac", choices=["ls", "ec"], dest="variant")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--B", "--buffer", type=int, dest="B")
    load = p.add_mutually_exclusive_group()
    load.add_argument("--lam", type=float, help="per-node generating rate")
    load.add_argument("--workload", type=float, help="generating rate as a fraction of capacity")
    p.add_argument("--nu", type=int)
    p.add_argument("--delta", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bufmanet",
        description="Delay, capacity and relay-buffer overflow of two-hop relay MANETs.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("analyze", help="closed-form metrics for one scenario")
    _common(p)
    p = sub.add_parser("simulate", help="simulate one scenario next to its closed forms")
    _common(p)
    p.add_argument("--trace", help="write the event trace of replication 0 to this CSV")
    p.add_argument("--trace-cap", type=int, default=100_000)
    p.add_argument("--check", action="store_true", help="verify state invariants every slot")
    p = sub.add_parser("sweep", help="sweep one parameter of a scenario")
    _common(p)
    p.add_argument("--sweep-variable", choices=[v.value for v in harness.SweepVariable])
    p.add_argument("--points", help="'a,b,c' or 'start:stop:step'")
    p.add_argument("--outputs", help="comma-separated metric names")
    p.add_argument("--compare", action="store_true", help="also run the simulator")
    p = sub.add_parser("preset", help="run a named sweep collection")
    p.add_argument("name")
    _common(p, scenario=False)
    p.add_argument("--no-compare", action="store_true", help="closed forms only")
    sub.add_parser("list-presets", help="print the preset names")
    return parser


_VALUE_KEYS = ("variant", "n", "m", "B", "nu", "delta", "mobility", "seed", "slots",
               "replications", "lam")


def _settings(args) -> dict:
    values = harness.read_config(args.config) if args.config else {}
    for key in _VALUE_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    for key in ("sweep_variable", "points", "outputs"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if getattr(args, "compare", False):
        values["compare"] = True
    return values


def _config(args, values):
    config = harness.build_config(values)
    if getattr(args, "workload", None) is not None:
        sc = config.scenario
        mu = harness.throughput_capacity(sc.probabilities(), sc.n, config.B)
        config = replace(config, lam=args.workload * mu)
    return config


def _emit(rows, args, outputs=None):
    if args.out:
        harness.write_rows(rows, args.out, outputs=outputs)
    else:
        harness.write_rows(rows, sys.stdout, outputs=outputs)


def _single(config, outputs, compare):
    spec = harness.SweepSpec(config, harness.SweepVariable.LAMBDA, (config.lam,),
                             outputs, compare=compare)
    return harness.run_sweep(spec)


def cmd_analyze(args) -> int:
    config = _config(args, _settings(args))
    rows = _single(config, harness.ALL_METRICS, False)
    _emit(rows, args)
    return _status(rows)


def cmd_simulate(args) -> int:
    config = _config(args, _settings(args))
    rows = _single(config, ("rop", "throughput", "q_delay", "d_delay", "e2e_delay"), True)
    if args.trace or args.check:
        metrics = run_simulation(replace(config, replications=1), check=args.check,
                                 trace_cap=args.trace_cap if args.trace else 0)
        if args.trace:
            write_trace(metrics.trace, args.trace)
        if args.check and metrics.violations:
            log.error("%d invariant violations", metrics.violations)
            return EXIT_NUMERIC
    _emit(rows, args)
    return _status(rows)


def cmd_sweep(args) -> int:
    values = _settings(args)
    if getattr(args, "workload", None) is not None:
        raise InvalidParameter("--workload is a sweep variable here; use --points")
    spec = harness.build_sweep(values)
    rows = harness.run_sweep(spec)
    _emit(rows, args, spec.outputs)
    return _status(rows)


def cmd_preset(args) -> int:
    specs = harness.get_preset(args.name)
    overrides = harness.read_config(args.config) if args.config else {}
    for key in ("seed", "slots", "replications"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    rows_out = []
    for spec in specs:
        base = spec.base
        kw = {k: int(overrides[k]) for k in ("seed", "slots", "replications")
              if k in overrides}
        if kw:
            base = replace(base, **kw)
        spec = replace(spec, base=base, compare=spec.compare and not args.no_compare)
        log.info("running %s", spec.label)
        rows_out.append((spec, harness.run_sweep(spec)))
    target = args.out or sys.stdout
    first = True
    for spec, rows in rows_out:
        harness.write_rows(rows, target, append=not first, outputs=spec.outputs)
        first = False
    return max((_status(rows) for _, rows in rows_out), default=EXIT_OK)


def _status(rows) -> int:
    errors = [r.error for r in rows if r.error]
    if not errors:
        return EXIT_OK
    if any(e.startswith("NoConvergence") for e in errors):
        return EXIT_NUMERIC
    if len(errors) == len(rows):
        return EXIT_CONFIG
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.verb == "list-presets":
        print("\n".join(harness.preset_names()))
        return EXIT_OK
    handler = {"analyze": cmd_analyze, "simulate": cmd_simulate,
               "sweep": cmd_sweep, "preset": cmd_preset}[args.verb]
    try:
        return handler(args)
    except NoConvergence as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    except (InvalidParameter, ValueError, configparser.Error) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
