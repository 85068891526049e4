#!/usr/bin/env python3
"""Benchmark the LSTM time-loop backends (compiled extension vs NumPy).

Times one forward+backward pass over a training-shaped batch for each
hidden size, per backend. Run:

    python benchmarks/bench_backends.py [--batch 32] [--steps 336] [--reps 5]
"""

import argparse
import time

import numpy as np

from scourwatch.neural.kernels import get_backends, lstm_backward, lstm_forward


def bench(impl, batch, steps, hidden, features, reps):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(batch, steps, features))
    W = rng.normal(size=(features, 4 * hidden)) * 0.1
    U = rng.normal(size=(hidden, 4 * hidden)) * 0.1
    b = rng.normal(size=4 * hidden) * 0.1
    dH = rng.normal(size=(batch, steps, hidden))
    # warmup
    _, _, cache = lstm_forward(X, W, U, b, impl=impl)
    lstm_backward(cache, dH)
    fwd_times, bwd_times = [], []
    for _ in range(reps):
        t0 = time.perf_counter()
        _, _, cache = lstm_forward(X, W, U, b, impl=impl)
        t1 = time.perf_counter()
        lstm_backward(cache, dH)
        t2 = time.perf_counter()
        fwd_times.append(t1 - t0)
        bwd_times.append(t2 - t1)
    return min(fwd_times), min(bwd_times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--steps", type=int, default=336)
    parser.add_argument("--features", type=int, default=2)
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--hidden", type=int, nargs="*",
                        default=[32, 64, 128, 256])
    args = parser.parse_args()
    backends = get_backends()
    print(f"batch={args.batch} steps={args.steps} features={args.features} "
          f"(best of {args.reps})")
    header = f"{'H':>5} " + "".join(
        f"{name + ' fwd':>14}{name + ' bwd':>14}" for name in backends
    )
    if len(backends) == 2:
        header += f"{'speedup fwd':>13}{'speedup bwd':>13}"
    print(header)
    for hidden in args.hidden:
        row = f"{hidden:>5} "
        results = {}
        for name, impl in backends.items():
            fwd, bwd = bench(impl, args.batch, args.steps, hidden,
                             args.features, args.reps)
            results[name] = (fwd, bwd)
            row += f"{fwd * 1e3:>11.1f} ms{bwd * 1e3:>11.1f} ms"
        if len(results) == 2:
            py = results["python"]
            comp = results["compiled"]
            row += f"{py[0] / comp[0]:>12.2f}x{py[1] / comp[1]:>12.2f}x"
        print(row)


if __name__ == "__main__":
    main()
