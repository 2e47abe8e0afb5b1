"""Command-line entry points: run, sweep, check.

Exit codes: 0 on success, 1 on configuration errors, 2 on numerical
failures (rank-deficient Jacobians, failed checks).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .checks import run_all_checks
from .errors import ConfigInvalid, NotPositiveDefinite, ProjSqpError
from .harness import (
    apply_overrides,
    config_from_mapping,
    parse_config_file,
    run_experiment,
    run_sweep,
)


def _load_config(args):
    mapping = parse_config_file(args.config)
    mapping = apply_overrides(mapping, args.set)
    return config_from_mapping(mapping)


def _cmd_run(args) -> int:
    config = _load_config(args)
    result = run_experiment(config)
    final = result.final_record
    print(f"run finished: {config.problem}/{config.optimizer} "
          f"k={final.k} f={final.f_full:.6e} cviol={final.cviol_l1:.3e} "
          f"pg2={final.proj_grad_sq:.3e} max_feas_viol={result.max_feas_viol:.3e}")
    if result.csv_path:
        print(f"trajectory: {result.csv_path}")
        print(f"checkpoint: {result.checkpoint_path}")
    return 0


def _cmd_sweep(args) -> int:
    base = _load_config(args)
    if args.seeds < 1:
        raise ConfigInvalid("--seeds", f"need at least 1 seed, got {args.seeds}")
    configs = []
    from dataclasses import replace
    for i in range(args.seeds):
        seed = base.seed + i
        out = f"{base.out}_seed{seed}" if base.out else None
        configs.append(replace(base, seed=seed, out=out))
    summary_path = args.summary or (f"{base.out}_summary.csv" if base.out else None)
    outcome = run_sweep(configs, n_jobs=args.jobs, summary_path=summary_path)
    n_failed = sum(err is not None for err in outcome.errors)
    for config, err in zip(configs, outcome.errors):
        if err is not None:
            print(f"seed {config.seed} failed: {err}", file=sys.stderr)
    for row in outcome.summary_rows:
        print(f"{row['group']}: n={row['n']} "
              f"final_cviol={row['final_cviol_mean']:.3e}±{row['final_cviol_std']:.3e} "
              f"final_pg2={row['final_pg2_mean']:.3e}±{row['final_pg2_std']:.3e}")
    if outcome.summary_path:
        print(f"summary: {outcome.summary_path}")
    return 2 if n_failed else 0


def _cmd_check(_args) -> int:
    return 0 if run_all_checks() else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="projsqp",
        description="Constrained stochastic-optimizer benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True, help="key=value config file")
    p_run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run one config across several seeds")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--seeds", type=int, required=True,
                         help="number of consecutive seeds starting at the config seed")
    p_sweep.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p_sweep.add_argument("--summary", default=None, help="summary CSV path")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_check = sub.add_parser("check", help="run the invariant/oracle suite")
    p_check.set_defaults(fn=_cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NotPositiveDefinite, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ProjSqpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
