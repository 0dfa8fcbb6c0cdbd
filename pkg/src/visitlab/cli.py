"""Command-line front end.

Verbs:
  predict    closed-form visit law only (JSON report + predicted PMF CSV)
  simulate   empirical visit statistics only
  compare    prediction vs simulation with TV pass/fail
  bound      error-bracket table over n (needs a stein config section)
  sweep      compare across the sweep list plus a consolidated summary CSV

Exit codes: 0 pass, 2 tolerance fail, 3 config error, 4 resource guard.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ResourceLimitError, VisitlabError
from .config import load_config
from .runner import (
    cmd_bound,
    cmd_compare,
    cmd_predict,
    cmd_simulate,
    cmd_sweep,
    exit_code_for,
    write_bound_report,
    write_report,
)

_VERBS = {
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "bound": cmd_bound,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="visitlab",
        description="Predict and verify visit-count laws for shrinking targets.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in _VERBS:
        p = sub.add_parser(verb, help=f"run the {verb} pipeline")
        p.add_argument("--config", required=True, help="YAML experiment file")
        p.add_argument("--seed", type=int, default=None, help="override experiment.seed")
        p.add_argument("--samples", type=int, default=None, help="override experiment.samples")
        p.add_argument("--jobs", type=int, default=None, help="override experiment.workers")
        p.add_argument("--out-dir", default=None, help="override experiment.out_dir")
        p.add_argument(
            "--tolerance", type=float, default=None, help="override experiment.tolerance"
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            overrides={
                "seed": args.seed,
                "samples": args.samples,
                "workers": args.jobs,
                "out_dir": args.out_dir,
                "tolerance": args.tolerance,
            },
        )
        report = _VERBS[args.verb](cfg)
        out_dir = cfg.out_dir or "."
        if args.verb == "bound":
            written = write_bound_report(report, out_dir)
        else:
            written = write_report(report, out_dir, args.verb)
        for path in written:
            print(f"wrote {path}")
        code = exit_code_for(report) if args.verb in ("compare", "sweep") else 0
        if code == 2:
            print("comparison FAILED the configured tolerance", file=sys.stderr)
        return code
    except ResourceLimitError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return 4
    except VisitlabError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
