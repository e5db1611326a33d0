#!/usr/bin/env python3
"""Compare the compiled kernel core against the pure-NumPy fallback.

Runs a small grid of pooling and transport configurations through
``run_bench`` under both backends and prints median times side by side.
Peak workspace bytes are identical by construction (kernels never
allocate) and are reported once.

Usage: python benchmarks/compare_backends.py [--repeats N]
"""

import argparse

from declnode.backend import use_backend
from declnode.bench import BenchConfig, run_bench


CONFIGS = [
    BenchConfig(node="pooling", method="structured", penalty="welsch", m=16, n=512, seed=1),
    BenchConfig(node="pooling", method="structured", penalty="welsch", m=64, n=4096, seed=1),
    BenchConfig(node="pooling", method="structured", penalty="huber", m=128, n=1024, seed=2),
    BenchConfig(node="ot", method="structured", gamma=10.0, m=50, n=50, seed=3),
    BenchConfig(node="ot", method="structured", gamma=10.0, m=200, n=200, seed=3),
    BenchConfig(node="ot", method="unrolled", gamma=10.0, m=100, n=100, iterations=8, seed=4),
]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    header = (
        f"{'node':8s} {'method':12s} {'size':12s} "
        f"{'fwd ext':>10s} {'fwd py':>10s} {'bwd ext':>10s} {'bwd py':>10s} {'peak kB':>9s}"
    )
    print(header)
    print("-" * len(header))
    for base in CONFIGS:
        cfg = BenchConfig(**{**base.__dict__, "repeats": args.repeats})
        rows = {}
        for backend in ("ext", "python"):
            try:
                with use_backend(backend):
                    rows[backend] = run_bench(cfg)[0]
            except ImportError:
                rows[backend] = None
        ext, py = rows["ext"], rows["python"]
        some = ext or py
        fmt = lambda rec, attr: f"{getattr(rec, attr) / 1e6:10.3f}" if rec else f"{'n/a':>10s}"
        print(
            f"{cfg.node:8s} {cfg.method:12s} {f'{cfg.m}x{cfg.n}':12s} "
            f"{fmt(ext, 'time_forward_ns')} {fmt(py, 'time_forward_ns')} "
            f"{fmt(ext, 'time_backward_ns')} {fmt(py, 'time_backward_ns')} "
            f"{some.peak_bytes_backward / 1e3:9.1f}"
        )
    print("\n(times in milliseconds; peak workspace is backend-independent)")


if __name__ == "__main__":
    main()
