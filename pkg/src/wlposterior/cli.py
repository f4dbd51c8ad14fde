"""Command-line entry point.

    wlposterior run --config run.cfg [--seed N] [--out DIR] [--set k=v ...]
                    [--resume checkpoint.bin]
    wlposterior validate [--level fast|full] [--seed N] [--out report.json]
    wlposterior surface --config run.cfg [--grid lo:hi:steps] [--out DIR]
"""

from __future__ import annotations

import argparse
import sys

from .config import apply_overrides, parse_config
from .runner import run_experiment, run_surface
from .validate import validate_suite


def _load_config(args):
    cfg = parse_config(args.config)
    if getattr(args, "set", None):
        apply_overrides(cfg, args.set)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg.validate()


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    res = run_experiment(cfg, resume_from=args.resume)
    rate = res.summary["theta"]["acceptance_rate_final_half"]
    print(
        "run complete: %d weight iterations (%d flat, %d store warmup), "
        "%d theta steps, final-half acceptance %.3f, %.1fs"
        % (
            res.summary["wl"]["iterations"],
            res.flat_iterations,
            res.warmup_iterations,
            res.trace.shape[0],
            rate,
            res.elapsed,
        )
    )
    print("outputs in %s" % res.out_dir)
    return 0


def _cmd_validate(args) -> int:
    report = validate_suite(level=args.level, seed=args.seed, out_path=args.out)
    for c in report["checks"]:
        print(
            "%-32s %s  value=%.6g threshold=%.6g (%.2fs)"
            % (
                c["name"],
                "PASS" if c["passed"] else "FAIL",
                c["value"],
                c["threshold"],
                c["seconds"],
            )
        )
    print("all passed" if report["all_passed"] else "FAILURES present")
    return 0 if report["all_passed"] else 1


def _cmd_surface(args) -> int:
    cfg = _load_config(args)
    summary = run_surface(cfg, grid_spec=args.grid or "")
    print(
        "surface ready: %d weight iterations, gamma=%.3g, %.1fs; wrote %s/logz.csv"
        % (
            summary["wl"]["iterations"],
            summary["wl"]["final_gamma"],
            summary["elapsed"],
            cfg.out_dir,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wlposterior",
        description="Posterior sampling with an adaptively learned "
        "normalizing-constant surface.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a full experiment from a config file")
    p_run.add_argument("--config", required=True, help="key=value config file")
    p_run.add_argument("--seed", type=int, default=None, help="override the seed")
    p_run.add_argument("--out", default=None, help="override the output directory")
    p_run.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )
    p_run.add_argument(
        "--resume", default=None, help="continue from a checkpoint file"
    )
    p_run.set_defaults(fn=_cmd_run)

    p_val = sub.add_parser("validate", help="run the built-in correctness checks")
    p_val.add_argument("--level", choices=("fast", "full"), default="fast")
    p_val.add_argument("--seed", type=int, default=20260816)
    p_val.add_argument("--out", default=None, help="write the JSON report here")
    p_val.set_defaults(fn=_cmd_validate)

    p_surf = sub.add_parser(
        "surface", help="learn the weight vector and export the surface on a grid"
    )
    p_surf.add_argument("--config", required=True)
    p_surf.add_argument("--grid", default=None, metavar="LO:HI:STEPS")
    p_surf.add_argument("--seed", type=int, default=None)
    p_surf.add_argument("--out", default=None)
    p_surf.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_surf.set_defaults(fn=_cmd_surface)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
