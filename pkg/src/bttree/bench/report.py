"""CSV output and throughput figures."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path
from typing import Iterable

from .workload import BenchResult

COLUMNS = ("impl", "sync", "mix", "k", "n", "threads", "duration_s", "total_ops", "throughput_ops_s", "seed")


def result_row(r: BenchResult) -> dict:
    s = r.spec
    return {
        "impl": s.impl,
        "sync": s.sync.name.lower(),
        "mix": s.mix.label,
        "k": s.k,
        "n": s.n,
        "threads": s.threads,
        "duration_s": repr(float(r.elapsed_s)),
        "total_ops": r.total_ops,
        "throughput_ops_s": repr(float(r.throughput)),
        "seed": s.seed,
    }


def emit_csv(results: Iterable[BenchResult]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in results:
        w.writerow(result_row(r))
    return buf.getvalue()


_INT_COLS = {"k", "n", "threads", "total_ops", "seed"}
_FLOAT_COLS = {"duration_s", "throughput_ops_s"}


def parse_csv(text: str) -> list[dict]:
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        for c in _INT_COLS:
            row[c] = int(row[c])
        for c in _FLOAT_COLS:
            row[c] = float(row[c])
        rows.append(row)
    return rows


def plot_throughput(rows: list[dict], path: Path | str) -> Path:
    """Throughput against thread count, one line per (impl, sync, mix, k)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = defaultdict(list)
    for r in rows:
        series[(r["impl"], r["sync"], r["mix"], r["k"])].append((r["threads"], r["throughput_ops_s"]))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (impl, sync, mix, k), pts in sorted(series.items()):
        pts.sort()
        xs = [p[0] for p in pts]
        ys = [p[1] / 1e6 for p in pts]
        ax.plot(xs, ys, marker="o", label=f"{impl} {sync} {mix} k={k}")
    ax.set_xlabel("threads")
    ax.set_ylabel("throughput (Mops/s)")
    ax.set_ylim(bottom=0)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
