"""Head-to-head timing of the two kernel lanes.

Imports both implementations directly (bypassing the import-time selector),
checks that they agree bit for bit on every workload, and reports wall times.

Usage: python3 benchmarks/bench_kernels.py [--scale N]
"""

import argparse
import time

import numpy as np

import essplit._kernels_py as pure

try:
    import essplit._kernels as comp
except ImportError:
    comp = None


def timed(fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    return time.perf_counter() - start, out


def bench_stay_bounds(mod, scale):
    sb = mod.stay_bounds
    acc = 0.0
    for i in range(20_000 * scale):
        x0 = 0.1 + 0.00001 * i
        lo, hi = sb(x0, 0.4, -1.0, 1.2, 0.5, 3)
        acc += lo + hi
    return acc


def bench_envelope_walk(mod, scale):
    stream = mod.Stream(2024, 7)
    cnt = mod.Counters()
    out = []
    for _ in range(4_000 * scale):
        out.append(mod.envelope_walk(stream, cnt, 0.0, 0.3, 0.25, 0.5, 1.5,
                                     10_000))
    return out


def bench_fill_segment(mod, scale):
    stream = mod.Stream(99, 3)
    cnt = mod.Counters()
    sums = []
    for _ in range(20 * scale):
        depth = 7
        n = 1 << depth
        times = np.zeros(n + 1)
        values = np.zeros((n + 1, 2))
        env = np.zeros((n, 2, 4))
        mod.fill_segment(stream, cnt, times, values, env, 0.0, 1.0,
                         [0.5, 0.5], [0.2, 0.9], depth,
                         (1.0 / n) ** 0.5, 1.5, 10_000)
        sums.append((values.sum(), env.sum()))
    return sums


def bench_split_coord(mod, scale):
    stream = mod.Stream(5, 11)
    cnt = mod.Counters()
    out = []
    for _ in range(4_000 * scale):
        out.append(mod.split_coord(stream, cnt, 0.0, 0.2, 0.25,
                                   -0.6, -0.1, 0.4, 0.9, 0.1, 0.25, 10_000))
    return out


def bench_euler(mod, scale):
    stream = mod.Stream(17, 0)
    cnt = mod.Counters()
    out = []
    for _ in range(400 * scale):
        x = np.array([1.0])
        out.append(mod.euler_run(stream, cnt, x, 0.0, 3.0, 0.01, 0, 10 ** 7))
    return out


BENCHES = [
    ("stay_bounds", bench_stay_bounds),
    ("envelope_walk", bench_envelope_walk),
    ("fill_segment", bench_fill_segment),
    ("split_coord", bench_split_coord),
    ("euler_run", bench_euler),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scale", type=int, default=1,
                    help="multiplier on every workload size")
    args = ap.parse_args()
    if comp is None:
        print("compiled lane not available; build the package first")
        return 1
    print(f"{'kernel':<16}{'pure (s)':>12}{'compiled (s)':>14}{'speedup':>10}")
    for name, bench in BENCHES:
        tp, outp = timed(bench, pure, args.scale)
        tc, outc = timed(bench, comp, args.scale)
        match = "ok" if outp == outc else "MISMATCH"
        print(f"{name:<16}{tp:>12.3f}{tc:>14.3f}{tp / tc:>9.1f}x  {match}")
        if match != "ok":
            return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
