"""Command-line front end.

    thbfrac run --preset sen_tensile --mesh thb --model at1 --order 4 \
                --resolution fine --stepping hybrid --out runs/tensile

Exit code 0 on success; nonzero with a diagnostic when a step fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, load_config, preset_names


def _parse_set(entries):
    out = {}
    for entry in entries or []:
        if "=" not in entry:
            raise ConfigError(f"--set expects key=value, got {entry!r}")
        key, _, raw = entry.partition("=")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thbfrac",
                                description="Adaptive THB phase-field fracture")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a benchmark simulation")
    run.add_argument("--preset", default=None,
                     help=f"one of: {', '.join(preset_names())}")
    run.add_argument("--config", default=None, help="JSON configuration file")
    run.add_argument("--mesh", choices=["tp", "thb"], default=None)
    run.add_argument("--model", choices=["at1", "at2"], default=None)
    run.add_argument("--order", type=int, choices=[2, 4], default=None)
    run.add_argument("--resolution", choices=["coarse", "fine"], default=None)
    run.add_argument("--stepping", choices=["explicit", "implicit", "hybrid"],
                     default=None)
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--set", dest="overrides", action="append", metavar="KEY=VAL",
                     help="dotted config override, e.g. --set material.l0=0.02")
    run.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        source = args.config or args.preset
        if source is None:
            print("error: provide --preset or --config", file=sys.stderr)
            return 2
        try:
            cfg = load_config(source, overrides=_parse_set(args.overrides),
                              mesh=args.mesh, model=args.model, order=args.order,
                              resolution=args.resolution, stepping=args.stepping,
                              out=args.out)
        except ConfigError as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return 2
        from .driver import run_simulation

        def progress(rep):
            print(f"step {rep.step:4d}  u={rep.u:.4e}  Fy={rep.Fy:+.4e}  "
                  f"Fx={rep.Fx:+.4e}  D={rep.dissipation:.4e}  dofs={rep.dofs}",
                  flush=True)

        try:
            run_simulation(cfg, progress=progress)
        except Exception as exc:  # step failures keep partial outputs
            print(f"run failed: {exc}", file=sys.stderr)
            return 1
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
