"""Command line front end: run a scene file or a built-in experiment."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import scene
from .diagnostics import CsvWriter
from .errors import ConfigurationError, SimulationError


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avicontact",
        description="Asynchronous contact simulation with discrete penalty layers.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="CSV output path (default stdout); a directory for the sweep")
        p.add_argument("--duration", type=float, help="override the run length")
        p.add_argument("--broken-clocks", action="store_true",
                       help="start each activated layer's clock at its activation time")
        p.add_argument("--e", type=float, help="override the restitution coefficient")

    sim = sub.add_parser("simulate", help="run a scene file")
    sim.add_argument("scene_file")
    common(sim)

    exp = sub.add_parser("experiment", help="run a built-in experiment")
    exp.add_argument("name", choices=scene.BUILTIN_NAMES)
    exp.add_argument("--seed", type=int, default=0)
    exp.add_argument("--spheres", type=int, help="number of discs (box and sweep)")
    common(exp)
    return parser


def _override(cfg, args):
    if args.duration is not None:
        cfg = replace(cfg, duration=args.duration)
    if args.e is not None:
        cfg = replace(cfg, contact=replace(cfg.contact, e=args.e))
    if args.broken_clocks:
        cfg = replace(cfg, broken_clocks=True)
    return cfg.validate()


def run_config(cfg, out):
    writer = CsvWriter(out, cfg.dim)
    sim = scene.build_simulation(cfg, on_snapshot=writer)
    sim.run()
    return sim


def _run_to(cfg, path):
    if path is None:
        run_config(cfg, sys.stdout)
        return
    with open(path, "w", newline="") as fh:
        run_config(cfg, fh)


def _experiment_configs(args):
    options = {}
    if args.name != "spring":
        options["seed"] = args.seed
        if args.spheres is not None:
            options["spheres"] = args.spheres
    elif args.spheres is not None:
        raise UsageError("--spheres applies to the box experiments only")
    found = scene.builtin_scene(args.name, **options)
    return found if isinstance(found, list) else [found]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        if args.command == "simulate":
            try:
                with open(args.scene_file) as fh:
                    text = fh.read()
            except OSError as exc:
                raise UsageError(f"cannot read scene file: {exc}")
            cfg = _override(scene.parse_scene(text), args)
            _run_to(cfg, args.out)
            return 0
        configs = [_override(c, args) for c in _experiment_configs(args)]
        if len(configs) == 1:
            _run_to(configs[0], args.out)
            return 0
        # the sweep writes one file per restitution coefficient
        if args.out is None:
            raise UsageError("the restitution sweep needs --out DIRECTORY")
        os.makedirs(args.out, exist_ok=True)
        for cfg in configs:
            _run_to(cfg, os.path.join(args.out, f"restitution_e{cfg.contact.e}.csv"))
        return 0
    except (UsageError, ConfigurationError) as exc:
        print(f"avicontact: error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"avicontact: simulation failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
