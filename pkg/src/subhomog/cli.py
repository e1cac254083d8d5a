"""Command line driver: ``subhomog {ideal,localized,decay,weighted,plot}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import ExperimentConfig, execute, load_config, preset

COMMANDS = {
    "ideal": "ideal-sweep",
    "localized": "localized-sweep",
    "decay": "decay",
    "weighted": "weighted-sweep",
}
DEFAULT_D = {"ideal-sweep": 1, "localized-sweep": 1, "decay": 2, "weighted-sweep": 2}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subhomog", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in COMMANDS.items():
        p = sub.add_parser(name, help=f"run a {kind}")
        p.add_argument("--config", help="INI-style [experiment] file or a run manifest (.json)")
        p.add_argument("--preset", choices=("desk", "paper"), default="desk")
        p.add_argument("--d", type=int, help="spatial dimension (selects the preset)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
    p = sub.add_parser("plot", help="render SVG charts from sweep CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", default=".")
    return parser


def resolve_config(args) -> ExperimentConfig:
    kind = COMMANDS[args.command]
    overrides = load_config(args.config) if args.config else {}
    if overrides.get("kind", kind) != kind:
        raise ValueError(f"config is for {overrides['kind']!r}, not {kind!r}")
    d = args.d or overrides.get("d") or DEFAULT_D[kind]
    values = preset(kind, d, args.preset).to_dict()
    values.update(overrides)
    values.update(kind=kind, d=d)
    for key in ("seed", "threads"):
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    if args.out:
        values["output"] = args.out
    return ExperimentConfig.from_dict(values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot":
            from .plots import emit_plots

            for path in emit_plots(args.csv, args.out):
                print(path)
        else:
            cfg = resolve_config(args)
            manifest = execute(cfg)
            for name in manifest.outputs:
                print(f"{cfg.output}/{name}")
    except Exception as exc:  # noqa: BLE001
        print("error: " + json.dumps({"type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
