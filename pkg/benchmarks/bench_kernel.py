"""Time one full replication of the reference scenario on each backend.

    python benchmarks/bench_kernel.py [--reps N] [--horizon MIN]

Both backends must return identical traces; the script checks that before
reporting the speed-up.
"""
import argparse
import statistics
import time

import numpy as np

from v2gcap import BACKENDS, ScenarioConfig, run


def bench(backend, cfg, reps, horizon):
    times, traces = [], []
    for seed in range(reps):
        t0 = time.perf_counter()
        traces.append(run(cfg, seed, horizon=horizon, backend=backend))
        times.append(time.perf_counter() - t0)
    return times, traces


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--horizon", type=float, default=1440.0)
    args = ap.parse_args()
    cfg = ScenarioConfig.reference()
    if "compiled" not in BACKENDS:
        raise SystemExit("compiled kernel not built; reinstall with a C compiler and Cython available")

    results = {b: bench(b, cfg, args.reps, args.horizon) for b in ("python", "compiled")}
    for a, b in zip(results["python"][1], results["compiled"][1]):
        assert np.array_equal(a.n, b.n) and np.array_equal(a.psi, b.psi), "backends disagree"

    med = {b: statistics.median(t) for b, (t, _) in results.items()}
    for b in ("python", "compiled"):
        print(f"{b:>9}: median {med[b] * 1e3:8.1f} ms per replication ({args.reps} reps, {args.horizon:g} min)")
    print(f"  speed-up: {med['python'] / med['compiled']:.1f}x, traces identical")


if __name__ == "__main__":
    main()
