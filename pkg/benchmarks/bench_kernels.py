#!/usr/bin/env python3
"""Compare the compiled kernel core against the pure NumPy fallback.

Times the individual hot kernels and the full per-entry adapt step at the
throughput-benchmark scale (N=883, T'=12, C=1, hidden=48), on both backends.

    python3 benchmarks/bench_kernels.py [--entries 300] [--nodes 883]
"""

import argparse
import time

import numpy as np

import adcsd
from adcsd import _kernels
from adcsd.series import SeriesTensor


def best_of(fn, reps):
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    out.sort()
    return out[0], out[len(out) // 2]


def bench_kernels(n, tp, hidden, reps):
    rng = np.random.default_rng(0)
    x = rng.uniform(-50, 50, size=(n, tp))
    state = adcsd.init_state(n_nodes=n, horizon=tp, hidden=hidden, seed=0)
    net = state.seasonal_net
    fwd_args = (x, net.w1, net.b1, net.ln_gain, net.ln_bias, net.w2, net.b2, 1e-5, 0)
    tape = _kernels.net_forward(*fwd_args)
    dy = rng.normal(size=(n, tp))
    vals = np.ascontiguousarray(rng.uniform(size=(n, tp, 1)))
    mask = np.ones_like(vals, dtype=bool)
    rows = {}
    rows["net_forward"] = best_of(lambda: _kernels.net_forward(*fwd_args), reps)
    rows["net_backward"] = best_of(
        lambda: _kernels.net_backward(x, net.w1, net.ln_gain, net.w2, *tape[1:], dy), reps
    )
    rows["moving_average"] = best_of(lambda: _kernels.moving_average(vals, mask, 3), reps)
    params = rng.normal(size=4000)
    grads = rng.normal(size=4000)
    m = np.zeros(4000)
    v = np.zeros(4000)
    rows["adam_update"] = best_of(
        lambda: _kernels.adam_update(params, grads, m, v, 1, 1e-4, 0.9, 0.999, 1e-8), reps
    )
    return rows


def bench_adapt(n, tp, hidden, entries):
    rng = np.random.default_rng(1)
    pairs = [
        (
            SeriesTensor.of(rng.uniform(0, 100, size=(n, tp, 1))),
            SeriesTensor.of(rng.uniform(0, 100, size=(n, tp, 1))),
        )
        for _ in range(entries)
    ]
    state = adcsd.init_state(n_nodes=n, horizon=tp, n_channels=1, hidden=hidden, seed=0)
    for o, y in pairs[: min(20, entries)]:
        _, state = adcsd.adapt(state, o, y)
    times = []
    for o, y in pairs:
        t0 = time.perf_counter()
        _, state = adcsd.adapt(state, o, y)
        times.append(time.perf_counter() - t0)
    times.sort()
    return times[0], times[len(times) // 2]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=883)
    parser.add_argument("--horizon", type=int, default=12)
    parser.add_argument("--hidden", type=int, default=48)
    parser.add_argument("--entries", type=int, default=300)
    parser.add_argument("--reps", type=int, default=200)
    args = parser.parse_args()

    backends = _kernels.available_backends()
    if "compiled" not in backends:
        print("note: compiled core not built; only the pure backend will run")

    results = {}
    for backend in backends:
        _kernels.set_backend(backend)
        rows = bench_kernels(args.nodes, args.horizon, args.hidden, args.reps)
        rows["adapt (full step)"] = bench_adapt(
            args.nodes, args.horizon, args.hidden, args.entries
        )
        results[backend] = rows
    _kernels.set_backend("auto")

    names = list(next(iter(results.values())))
    print(f"\nN={args.nodes} T'={args.horizon} hidden={args.hidden}; best/median ms per call")
    header = f"{'kernel':<20}" + "".join(f"{b:>24}" for b in backends)
    print(header)
    print("-" * len(header))
    for name in names:
        cells = []
        for backend in backends:
            best, med = results[backend][name]
            cells.append(f"{best * 1e3:>11.3f} /{med * 1e3:>9.3f}")
        print(f"{name:<20}" + "".join(f"{c:>24}" for c in cells))
    if len(backends) == 2:
        pure_med = results["pure"]["adapt (full step)"][1]
        comp_med = results["compiled"]["adapt (full step)"][1]
        print(f"\nfull-adapt speedup (pure/compiled medians): {pure_med / comp_med:.2f}x")


if __name__ == "__main__":
    main()
