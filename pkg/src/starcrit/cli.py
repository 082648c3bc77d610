"""Command line entry point: ``starcrit <command> [--config FILE] [options]``.

Exit status is 0 when every check of the command passed, 1 when a check
failed and 2 for invalid input.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .artifacts import FORMATS, emit_artifacts
from .config import RunConfig
from .errors import ValidationError
from .pipeline import run_command

COMMANDS = {
    "profile": "harmonic profile coefficients and axis critical points",
    "domain": "admissibility, critical points and superlevel components for each eps",
    "kernel": "star-kernel choice and defect measure ratio along the eps list",
    "manifold": "metric, density, operator and transition calibrations",
    "solve": "semilinear solve on the manifold and critical points of the solution",
    "theorem1": "full pipeline with per-k clause checks",
}

log = logging.getLogger("starcrit")


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run options")
    g.add_argument("--config", help="JSON run configuration (unknown keys are rejected)")
    g.add_argument("--seed", type=_u64, help="base seed for every sampler")
    g.add_argument("--out", help="output directory")
    g.add_argument("--strict", action="store_true", default=None, help="double sample densities, halve h")
    g.add_argument("--format", action="append", choices=FORMATS, dest="formats",
                   help="artifact format; repeat for several (default: all)")
    g.add_argument("--n", type=int, help="number of bumps")
    g.add_argument("--d", type=int, help="dimension")
    g.add_argument("--eps", type=_float_list, help="comma-separated decreasing eps list")
    g.add_argument("--eta", type=_float_list, help="comma-separated decreasing eta list")
    g.add_argument("--h", type=float, help="grid spacing for the solver")
    g.add_argument("--workers", type=int, help="processes for the per-k stages")
    g.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="starcrit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return p


def config_from_args(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for key in ("seed", "out", "strict", "n", "d", "eps", "eta", "h", "workers"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg, key, val)
    if args.command in ("profile", "domain", "kernel", "manifold"):
        cfg.solver = False if cfg.d not in (2, 3) else cfg.solver
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
    except (ValidationError, OSError) as exc:
        print(f"starcrit: {exc}", file=sys.stderr)
        return 2
    log.info("running %s (config %s)", args.command, cfg.hash()[:12])
    report = run_command(cfg, args.command)
    try:
        paths = emit_artifacts(report, args.formats or FORMATS, cfg.out, cfg)
    except OSError as exc:
        print(f"starcrit: cannot write artifacts: {exc}", file=sys.stderr)
        return 2
    for path in paths:
        log.info("wrote %s", path)
    status = "PASS" if report["passed"] else "FAIL"
    print(f"{args.command}: {status} ({cfg.out}, config {report['config_hash'][:12]})")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
