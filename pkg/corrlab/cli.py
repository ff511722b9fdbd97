"""
cli.py
------
Command-line entry point.

  corrlab scatter|window|dispersive|energy|gp|sweep [--config F] [--preset P]
          [--out DIR] [--workers N] [--csv] [--json]
  corrlab evolve   --preset P | --config F      evolved orbital checkpoint
  corrlab convert  --N --ell --t | --Lambda --L --T
  corrlab converge [--levels 0 1 2] ...
  corrlab report   MANIFEST

Exit codes: 0 ok, 2 validation, 3 numerical failure (or a PARTIAL run), 4 resource guard.
"""
import argparse
import json
import logging
import sys
from typing import Dict, List, Optional

from corrlab import harness
from corrlab.errors import ConfigError, CorrlabError
from corrlab.functionals import macro_to_micro, micro_to_macro
from corrlab.settings import configure_logging

logger = logging.getLogger(__name__)

# subcommand -> (experiment kind it runs, default preset)
RUNNERS = {
    "scatter": ("scatter", "scatter"),
    "window": ("window", "formation"),
    "dispersive": ("dispersive", "dispersive"),
    "energy": ("energy", "fn0"),
    "gp": ("gp", "gp"),
    "sweep": (None, None),
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--preset", help="named preset from presets.json")
    p.add_argument("--out", help="output directory (default: $CORRLAB_OUT_DIR or runs)")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--csv", action="store_true", help="write only the CSV")
    p.add_argument("--json", action="store_true", help="write only the manifest")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrlab", description="Two-body correlation-structure experiments")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        _common(sub.add_parser(name, help=f"run a {name} experiment"))
    _common(sub.add_parser("evolve", help="evolve an orbital and write a checkpoint"))
    conv = sub.add_parser("converge", help="refinement study of an experiment")
    _common(conv)
    conv.add_argument("--levels", type=int, nargs="+", default=[0, 1, 2])
    units = sub.add_parser("convert", help="microscopic <-> macroscopic variables")
    units.add_argument("--N", type=int)
    units.add_argument("--ell", type=float)
    units.add_argument("--t", type=float)
    units.add_argument("--Lambda", type=float)
    units.add_argument("--L", type=float)
    units.add_argument("--T", type=float)
    rep = sub.add_parser("report", help="summarise a run manifest")
    rep.add_argument("manifest")
    return parser


def _overrides(args: argparse.Namespace) -> Dict:
    out: Dict = {}
    output: Dict = {}
    if args.out:
        output["dir"] = args.out
    if args.csv or args.json:
        output["csv"] = bool(args.csv)
        output["manifest"] = bool(args.json)
    if output:
        out["output"] = output
    if args.workers:
        out["workers"] = args.workers
    return out


def _load(args: argparse.Namespace, kind: Optional[str], default_preset: Optional[str]) -> harness.ExperimentConfig:
    preset = args.preset or (None if args.config else default_preset)
    if not preset and not args.config:
        raise ConfigError("give --config or --preset", loc=("config",))
    config = harness.load_config(args.config, preset, _overrides(args))
    if kind and config.kind != kind:
        raise ConfigError(f"config kind {config.kind!r} does not match subcommand {kind!r}", loc=("kind",))
    return config


def _convert(args: argparse.Namespace) -> Dict:
    if args.N is not None and args.ell is not None and args.t is not None:
        return micro_to_macro(args.N, args.ell, args.t)
    if args.Lambda is not None and args.L is not None and args.T is not None:
        return macro_to_micro(args.Lambda, args.L, args.T)
    raise ConfigError("convert needs --N --ell --t or --Lambda --L --T", loc=("convert",))


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "report":
            print(harness.report(harness.read_manifest(args.manifest)))
            return 0
        if args.command == "convert":
            print(json.dumps(_convert(args), indent=2))
            return 0
        if args.command == "evolve":
            print("Saved:", harness.evolve_checkpoint(_load(args, None, None)))
            return 0
        if args.command == "converge":
            result = harness.convergence_study(_load(args, None, None), args.levels)
            print(json.dumps(result, indent=2))
            return 3 if result["flagged"] else 0

        kind, preset = RUNNERS[args.command]
        record = harness.run_experiment(_load(args, kind, preset))
        if record.csv_path:
            print("Saved:", record.csv_path)
        if record.manifest_path:
            print("Manifest:", record.manifest_path)
        print(json.dumps(record.verdicts, indent=2))
        return 3 if record.status == "PARTIAL" else 0
    except CorrlabError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
