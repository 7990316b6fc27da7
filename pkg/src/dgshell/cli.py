"""Command-line interface.

Subcommands: ``run`` (single case), ``converge`` (refinement ladder),
``locking`` (thickness sweep against the primal baseline), ``diagnostics``
(invariant probes).  Exit code 0 only if every invariant probe passes.
"""

from __future__ import annotations

import argparse
import sys

from .harness import (
    HarnessError,
    StudyReport,
    convergence_study,
    diagnostics_study,
    emit_report,
    load_config,
    locking_study,
    run_case,
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dgshell",
        description="Mixed DG solver for the Naghdi shell model: "
        "manufactured-solution runs, convergence and locking studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "assemble and solve one case"),
        ("converge", "uniform-refinement convergence study"),
        ("locking", "thickness sweep: mixed method vs primal baseline"),
        ("diagnostics", "run invariant probes and stability sweep"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="INI config file path")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--case", help="case name override")
        p.add_argument("--n", type=int, help="mesh subdivisions override")
        p.add_argument("--epsilon", type=float, help="thickness override")
        p.add_argument("--penalty", type=float, help="jump penalty constant")
        p.add_argument("--kappa", type=float, help="shear correction factor")
        p.add_argument("--degree", type=int, help="polynomial degree k")
        p.add_argument("--workers", type=int, help="assembly worker count")
        p.add_argument(
            "--deterministic-timing", action="store_true",
            help="zero the seconds column for reproducible output",
        )
    return parser


def _config_from_args(args):
    overrides = {
        "case": args.case,
        "n": args.n,
        "epsilon": args.epsilon,
        "penalty": args.penalty,
        "kappa": args.kappa,
        "degree": args.degree,
        "workers": args.workers,
    }
    cfg = load_config(args.config, overrides)
    if args.deterministic_timing:
        cfg.deterministic_timing = True
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    from .solver import SolverError

    try:
        cfg = _config_from_args(args)
        if args.command == "run":
            result = run_case(cfg)
            report = StudyReport(label=f"run-{cfg.case}", rows=[result.row])
            report.probes["solver residual"] = (
                max(result.solution.residual_primal, result.solution.residual_dual)
                <= 1e-10
            )
        elif args.command == "converge":
            report = convergence_study(cfg)
        elif args.command == "locking":
            mixed, primal = locking_study(cfg)
            emit_report(primal, args.out)
            report = mixed
        else:
            report = diagnostics_study(cfg)
        csv_path, txt_path = emit_report(report, args.out)
    except (HarnessError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    with open(txt_path) as f:
        print(f.read(), end="")
    print(f"wrote {csv_path}")
    if not report.ok():
        print("one or more invariant probes FAILED", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
