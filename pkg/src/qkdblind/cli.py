"""Command line interface: ``run``, ``sweep``, ``curve`` and ``budget``."""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .bb84 import AttackParams
from .detector import ConfigError, DetectorConfig
from .optics import from_fj, from_nw
from .report import FORMATS, report, report_budget, report_sweep, write_event_log
from .scw import ScwChain, table1
from .simulation import run, sweep

EXIT_CONFIG = 2

CURVE_DEFAULTS = {"var": "trigger_energy_fj", "start": "10", "stop": "35", "steps": 26,
                  "gates": 1_000_000}


@contextlib.contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _load(args) -> cfgmod.ScenarioConfig:
    cfg = cfgmod.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.gates is not None:
        changes["gates"] = args.gates
    return cfg.with_(**changes) if changes else cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    if args.log_events:
        with open(args.log_events, "w", newline="") as fh:
            first = [True]

            def sink(chunk):
                write_event_log(chunk, fh, header=first[0])
                first[0] = False
            result = run(cfg, event_sink=sink)
    else:
        result = run(cfg)
    with _output(args.out) as out:
        out.write(report(result.stats, args.format))
    return 0


def _sweep(args, var, start, stop, steps, gates) -> int:
    base = _load(args) if args.config else cfgmod.ScenarioConfig(
        seed=args.seed or 0, attack=AttackParams())
    per_point = gates if gates is not None else base.gates
    spec = cfgmod.SweepSpec.from_cli(var, start, stop, steps, per_point)
    points = sweep(spec, base, workers=args.workers)
    with _output(args.out) as out:
        out.write(report_sweep(points, var, args.format))
    return 0


def cmd_sweep(args) -> int:
    return _sweep(args, args.var, args.start, args.stop, args.steps, args.gates)


def cmd_curve(args) -> int:
    d = CURVE_DEFAULTS
    return _sweep(args, args.var or d["var"], args.start or d["start"],
                  args.stop or d["stop"], args.steps or d["steps"],
                  args.gates if args.gates is not None else d["gates"])


def cmd_budget(args) -> int:
    chain = ScwChain(modulation_index=args.modulation_index,
                     bob_insertion_loss=args.loss_db)
    rows = table1(chain, blinding_power=from_nw(args.blinding_power_nw),
                  e_always=from_fj(args.e_always_fj), e_never=from_fj(args.e_never_fj),
                  detector=DetectorConfig())
    with _output(args.out) as out:
        out.write(report_budget(rows, args.format))
    return 0


def _common(p: argparse.ArgumentParser, config_required: bool = True):
    if config_required:
        p.add_argument("config", help="scenario YAML file")
    else:
        p.add_argument("config", nargs="?", help="scenario YAML file (optional)")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--gates", type=int, help="override the gate count")
    p.add_argument("--format", choices=FORMATS, default="text")
    p.add_argument("--out", help="write output here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkdblind",
        description="Detector-blinding faked-state attack simulator for BB84 and SCW QKD.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info, -vv for debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    _common(p)
    p.add_argument("--log-events", metavar="PATH", help="write the per-gate event log (CSV)")
    p.set_defaults(func=cmd_run)

    for name, required in (("sweep", True), ("curve", False)):
        p = sub.add_parser(name, help="click probability vs trigger energy or c.w. power"
                           if name == "sweep" else "click-probability curve, 10-35 fJ at 35 nW")
        _common(p, config_required=required)
        p.add_argument("--var", choices=sorted(cfgmod.SWEEP_UNITS), required=required)
        p.add_argument("--from", dest="start", required=required)
        p.add_argument("--to", dest="stop", required=required)
        p.add_argument("--steps", type=int, required=required)
        p.add_argument("--workers", type=int, default=1)
        p.set_defaults(func=cmd_sweep if name == "sweep" else cmd_curve)

    p = sub.add_parser("budget", help="SCW power budget for detector control")
    p.add_argument("--modulation-index", type=float, default=20.0)
    p.add_argument("--loss-db", type=float, default=6.4)
    p.add_argument("--blinding-power-nw", default="35")
    p.add_argument("--e-always-fj", default="25.8")
    p.add_argument("--e-never-fj", default="15.4")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_budget)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
