"""Compare the compiled and numpy replicate kernels.

Runs the same replicate blocks through every importable backend, checks the
outputs are bit-identical and reports replicates per second.

    python3 benchmarks/bench_kernels.py --replicates 200000
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from powerdiv import kernels
from powerdiv.montecarlo import Sampler
from powerdiv.scheme import power, uniform
from powerdiv.statistic import StatisticConfig, kernel_inputs

CASES = {
    "uniform r=3000 n=5": (uniform(3000), 5),
    "uniform r=1e7 n=1e4": (uniform(10**7), 10**4),
    "power a=0.5 r=1e5 n=50": (power(0.5, 10**5), 50),
}


def run_case(backend, scheme, n, replicates, lam=1.0, seed=1):
    sampler = Sampler(scheme)
    cfg = StatisticConfig(lam, n)
    inp = kernel_inputs(cfg, scheme)
    gk = cfg.g_table()
    block = max(1, min(1 << 16, (1 << 21) // n))
    parts = []
    start = time.perf_counter()
    for rep in range(0, replicates, block):
        count = min(block, replicates - rep)
        parts.append(backend.simulate_block(seed, rep, count, n, scheme.r, sampler.prob, sampler.alias,
                                            inp["wcell"], inp["scell"], gk, 2))
    elapsed = time.perf_counter() - start
    return elapsed, tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--replicates", type=int, default=100_000, help="replicates per case (scaled down for large n)")
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}  (default: {kernels.BACKEND})")
    print(f"{'case':<26}{'backend':<9}{'replicates':>11}{'seconds':>10}{'reps/s':>13}")
    for name, (scheme, n) in CASES.items():
        reps = max(100, args.replicates * 5 // max(n, 5)) if n > 100 else args.replicates
        results = {}
        for label, backend in backends.items():
            elapsed, out = run_case(backend, scheme, n, reps)
            results[label] = (elapsed, out)
            print(f"{name:<26}{label:<9}{reps:>11}{elapsed:>10.3f}{reps / elapsed:>13,.0f}")
        if len(results) == 2:
            same = all(np.array_equal(a, b) for a, b in zip(results["python"][1], results["cython"][1]))
            speedup = results["python"][0] / results["cython"][0]
            print(f"{'':<26}speedup {speedup:.1f}x, outputs {'identical' if same else 'DIFFER'}")


if __name__ == "__main__":
    main()
