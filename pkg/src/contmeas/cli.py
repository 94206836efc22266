"""Command-line entry point: ``contmeas <experiment> [--config PATH] [options]``.

Exit status: 0 on success, 1 when the configuration is invalid, 2 when the
simulation itself fails (boundary leak, collapsed state, too few samples,
I/O errors).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import EXPERIMENTS, validate
from .errors import ConfigError, SimulationError
from .experiments import run_experiment
from .report import emit_report

log = logging.getLogger("contmeas")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

HELP = {
    "discrete": "ensemble of repeated Gaussian localizations",
    "sde": "trajectories of the Ito limit (wave function or density matrix)",
    "master": "master-equation integration against the closed moment flow",
    "converge": "one-cycle moments as the cycle period shrinks",
    "ensemble": "ensemble mean of an unraveling against the master equation",
    "record-scaling": "white-noise scaling of the measured-coordinate record",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contmeas",
                                     description="Continuous position measurement experiments.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", type=Path, help="YAML experiment config (defaults used when omitted)")
        p.add_argument("--seed", type=int, help="master seed, overrides the config")
        p.add_argument("--out", type=Path, help="output directory, overrides output.dir")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> dict:
    """Load the config file (if any), apply CLI overrides, validate."""
    raw = {}
    if args.config is not None:
        import yaml

        try:
            raw = yaml.safe_load(args.config.read_text()) or {}
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {args.config}: {exc.strerror}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError("--config", f"not valid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a mapping")
    given = raw.get("experiment", args.experiment)
    if given != args.experiment:
        raise ConfigError("experiment", f"config says {given!r} but the subcommand is {args.experiment!r}")
    raw = dict(raw, experiment=args.experiment)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["output"] = dict(raw.get("output") or {}, dir=str(args.out))
    return validate(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running %s (seed %d)", cfg["experiment"], cfg["seed"])
    try:
        report = run_experiment(cfg, threads=args.threads)
        figures = cfg["output"]["figures"] and not args.no_figures
        paths = emit_report(report, cfg["output"]["dir"], figures=figures)
    except (SimulationError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for c in report.checks:
        print(f"{c.status:6s} {c.name}")
    print(f"wrote {len(paths)} files to {cfg['output']['dir']}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
