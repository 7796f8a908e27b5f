"""``bench``: throughput of the tree and the baselines under a workload mix.

List-valued options (comma separated) run every combination.  With
``--csv PATH`` the rows go to PATH and a figure to PATH with a .png suffix;
otherwise the CSV is printed.
"""

from __future__ import annotations

import argparse
import itertools
import sys
from pathlib import Path

from ..sync import SyncPolicy
from .report import emit_csv, parse_csv, plot_throughput
from .workload import IMPLS, Mix, WorkloadSpec, run_workload


def _list(kind, choices=None):
    def parse(text):
        items = [kind(x) for x in text.split(",") if x]
        if choices is not None:
            bad = [x for x in items if x not in choices]
            if bad:
                raise argparse.ArgumentTypeError(f"invalid choice(s) {bad}; expected {', '.join(choices)}")
        return items

    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--mix", type=_list(str, [m.label for m in Mix]), default=["update"])
    p.add_argument("--k", type=_list(int), default=[10_000], help="key range upper bound")
    p.add_argument("--threads", type=_list(int), default=[1])
    p.add_argument("--duration", type=float, default=5.0, help="seconds per run")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--impl", type=_list(str, IMPLS), default=["bttree"])
    p.add_argument("--sync", type=_list(str, [s.name.lower() for s in SyncPolicy]), default=["mutex"])
    p.add_argument("--ops", type=int, default=None, help="fixed op budget (deterministic mode)")
    p.add_argument("--csv", type=Path, default=None, help="write CSV here and a .png figure beside it")
    p.add_argument("--quiet", action="store_true", help="no progress lines on stderr")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    results = []
    for impl, sync, mix, k, threads in itertools.product(args.impl, args.sync, args.mix, args.k, args.threads):
        spec = WorkloadSpec(mix, k, threads, args.duration, args.seed, impl, sync, args.ops)
        r = run_workload(spec)
        results.append(r)
        if not args.quiet:
            print(
                f"{impl} {sync} {mix} k={k} threads={threads}: {r.total_ops} ops "
                f"in {r.elapsed_s:.2f}s = {r.throughput / 1e6:.3f} Mops/s (size {r.final_size}, digest {r.digest})",
                file=sys.stderr,
            )
    text = emit_csv(results)
    if args.csv is None:
        sys.stdout.write(text)
    else:
        args.csv.parent.mkdir(parents=True, exist_ok=True)
        args.csv.write_text(text)
        fig = plot_throughput(parse_csv(text), args.csv.with_suffix(".png"))
        print(f"wrote {args.csv} and {fig}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
