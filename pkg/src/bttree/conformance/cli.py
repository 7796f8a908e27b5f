"""``conform``: run a differential check (one thread) or a concurrent stress run."""

from __future__ import annotations

import argparse
import sys

from ..core.tree import Config
from ..sync import SyncPolicy
from .differential import differential_run
from .stress import concurrent_stress


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conform", description=__doc__)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--ops", type=int, default=1_000_000)
    p.add_argument("--range", dest="key_range", type=int, default=500, help="keys are drawn from [1, RANGE]")
    p.add_argument("--threads", type=int, default=1, help="more than one selects the concurrent stress run")
    p.add_argument("--sync", choices=[s.name.lower() for s in SyncPolicy], default="mutex")
    p.add_argument("--capacity", type=int, default=32, help="leaf and internal node capacity")
    p.add_argument("--trace-dir", default=".", help="where a failing trace is written")
    p.add_argument("--canary", action="store_true", help="poison reclaimed nodes (stress runs)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = Config(
        leaf_capacity=args.capacity,
        internal_capacity=args.capacity,
        sync=args.sync,
        canary=True if args.canary else None,
        max_threads=max(8, args.threads),
    )
    if args.threads > 1:
        v = concurrent_stress(args.threads, args.ops, args.key_range, args.sync, seed=args.seed, config=config)
        status = "PASS" if v.passed else "FAIL"
        print(
            f"{status} stress threads={v.threads} sync={args.sync} ops={v.ops} range={args.key_range} "
            f"lost_updates={v.lost_updates} implausible_reads={v.implausible_reads} "
            f"violations={len(v.violations)} canary_detections={v.canary_detections} "
            f"validation_failures={v.validation_failures} elapsed={v.elapsed_s:.2f}s"
        )
    else:
        v = differential_run(args.seed, args.ops, args.key_range, config, trace_dir=args.trace_dir)
        status = "PASS" if v.passed else "FAIL"
        print(
            f"{status} differential seed={args.seed} ops={v.ops_run} range={args.key_range} "
            f"checkpoints={v.checkpoints} elapsed={v.elapsed_s:.2f}s"
        )
        if v.trace_path is not None:
            print(f"trace written to {v.trace_path}")
    if not v.passed:
        print(v.message, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
