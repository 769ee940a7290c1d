"""The ``gibbs`` command line.

    gibbs <task> (--instance FILE | --gen SPEC) [--eps E] [--gamma G]
          [--delta D] [--seeds A..B] [--profile desk|paper] [--out DIR]
          [--assert] [--jobs N] [--oracle SPEC] [--sweep AXIS:V1,V2,...]
          [--estimator NAME]

Tasks: ratio-all, ratio-point, counts-continuous, counts-integer,
counts-logconcave, schedule, count-matchings, count-subgraphs, bench.
Exit codes: 0 success, 2 contract violation in --assert mode, 64 usage
error, 70 oracle process failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import GibbsError
from .harness import TASKS, ExperimentConfig, OracleProcessError, UsageError, run_experiment

EX_USAGE = 64
EX_ORACLE = 70
EX_CONTRACT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 64, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"gibbs: error: {message}", file=sys.stderr)
        sys.exit(EX_USAGE)


def parse_seeds(text: str) -> list[int]:
    if ".." in text:
        a, _, b = text.partition("..")
        lo, hi = int(a), int(b)
        if hi < lo:
            raise UsageError("seed range must be increasing")
        return list(range(lo, hi + 1))
    return [int(v) for v in text.split(",") if v]


def build_parser() -> _Parser:
    p = _Parser(prog="gibbs", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("task", choices=TASKS)
    p.add_argument("--instance", dest="instance_file", help="instance JSON (or graph edge list for graph tasks)")
    p.add_argument("--gen", help="generator spec, e.g. instance-a, logconcave-poly:m=2,q=8, matchings:k4")
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--gamma", type=float, default=0.25)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--seeds", default="1..8", help="a..b range or comma list")
    p.add_argument("--profile", choices=["desk", "paper"], default=None)
    p.add_argument("--oracle", default="exact", help="exact | tv-perturbed:d_tv=..,mode=.. | js-chain:graph=..,mixing=..,d_tv=.. | external:CMD")
    p.add_argument("--out", dest="out_dir", help="directory for report.json and CSV tables")
    p.add_argument("--assert", dest="assert_mode", action="store_true", help="exit 2 when coverage misses its threshold")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--sweep", help="bench only: axis:v1,v2,... with axis in q,n,eps,delta")
    p.add_argument("--estimator", help="bench only: ratio-all, counts-integer, counts-logconcave, counts-continuous, schedule-ratios")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExperimentConfig(
            task=args.task,
            instance_file=args.instance_file,
            gen=args.gen,
            eps=args.eps,
            gamma=args.gamma,
            delta=args.delta,
            seeds=parse_seeds(args.seeds),
            profile=args.profile,
            oracle=args.oracle,
            out_dir=args.out_dir,
            assert_mode=args.assert_mode,
            jobs=args.jobs,
            sweep=args.sweep,
            estimator=args.estimator,
        )
        report = run_experiment(config)
    except UsageError as e:
        print(f"gibbs: usage error: {e}", file=sys.stderr)
        return EX_USAGE
    except OracleProcessError as e:
        print(f"gibbs: oracle failure: {e}", file=sys.stderr)
        return EX_ORACLE
    except GibbsError as e:
        print(f"gibbs: error: {e}", file=sys.stderr)
        return 1

    summary = {
        "task": config.task,
        "aggregate": report.aggregate,
        "wall_time_s": round(report.wall_time_s, 3),
    }
    print(json.dumps(summary, indent=2, default=str))
    if config.assert_mode and not report.aggregate.get("assert_pass", True):
        return EX_CONTRACT
    return 0


if __name__ == "__main__":
    sys.exit(main())
