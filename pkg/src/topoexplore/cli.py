"""Command line entry point: ``topoexplore {run,compare,render}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .render import STAGES
from .world import MapFormatError, load_map

_SKIP = {"map", "controller", "seed", "steps"}


def _add_param_flags(p):
    for name, kind in harness.config_types().items():
        if name in _SKIP:
            continue
        p.add_argument(f"--{name.replace('_', '-')}", dest=f"param_{name}", default=None,
                       metavar=kind.__name__.upper(), help=f"override {name}")


def _overrides(args):
    return {k[len("param_"):]: v for k, v in vars(args).items()
            if k.startswith("param_") and v is not None}


def parse_seeds(text):
    """``1..5`` or ``1,3,7`` (or a mix)."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ValueError(f"no seeds in {text!r}")
    return seeds


def _config(args, **fixed):
    values = _overrides(args)
    values.update({k: v for k, v in fixed.items() if v is not None})
    return harness.make_config(values, config_file=args.config)


def build_parser():
    ap = argparse.ArgumentParser(prog="topoexplore", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one controller on one map")
    r.add_argument("--map", required=True)
    r.add_argument("--controller", required=True, choices=harness.CONTROLLERS)
    r.add_argument("--seed", type=int, default=1)
    r.add_argument("--steps", type=int, default=None, help="step cap")
    r.add_argument("--config")
    r.add_argument("--render", metavar="DIR", help="write every stage image to DIR")
    r.add_argument("--events", metavar="FILE", help="write the mode/event log")
    r.add_argument("--csv", metavar="FILE", help="write the metrics row (default stdout)")
    _add_param_flags(r)

    c = sub.add_parser("compare", help="both controllers over maps x seeds")
    c.add_argument("--maps", required=True, help="comma separated map names or paths")
    c.add_argument("--seeds", default="1..5")
    c.add_argument("--steps", type=int, default=None)
    c.add_argument("--config")
    c.add_argument("--csv", metavar="FILE")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--check", action="store_true", help="exit 1 unless every flag passes")
    _add_param_flags(c)

    d = sub.add_parser("render", help="run, then export one stage image")
    d.add_argument("--map", required=True)
    d.add_argument("--controller", required=True, choices=harness.CONTROLLERS)
    d.add_argument("--seed", type=int, default=1)
    d.add_argument("--steps", type=int, default=None)
    d.add_argument("--config")
    d.add_argument("--stage", required=True, choices=STAGES)
    d.add_argument("--out", required=True)
    _add_param_flags(d)
    return ap


def _cmd_run(args):
    cfg = _config(args, map=args.map, controller=args.controller, seed=args.seed, steps=args.steps)
    load_map(cfg.map)  # fail before simulating
    record = harness.run(cfg, render_dir=args.render, events_path=args.events)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            harness.write_csv([record], fh)
    else:
        harness.write_csv([record], sys.stdout)
    return 0


def _cmd_compare(args):
    maps = [m.strip() for m in args.maps.split(",") if m.strip()]
    base = _config(args, steps=args.steps)
    for m in maps:
        load_map(m)
    result = harness.compare(maps, parse_seeds(args.seeds), base, jobs=args.jobs)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            harness.write_csv(result.records, fh)
    print(result.table())
    for err in result.errors:
        print(f"ERROR {err}", file=sys.stderr)
    flags = result.flags()
    for name, ok in flags.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    if result.errors or (args.check and not all(flags.values())):
        return 1
    return 0


def _cmd_render(args):
    cfg = _config(args, map=args.map, controller=args.controller, seed=args.seed, steps=args.steps)
    load_map(cfg.map)
    _, artifacts = harness.simulate(cfg)
    artifacts.render(args.stage, args.out)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handlers = {"run": _cmd_run, "compare": _cmd_compare, "render": _cmd_render}
    try:
        return handlers[args.command](args)
    except (harness.ConfigError, MapFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
