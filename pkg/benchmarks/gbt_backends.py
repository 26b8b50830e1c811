"""Time the compiled boosting kernel against the pure-NumPy twin.

Both kernels produce bit-identical forests; the only difference is speed.
This script fits the same workloads with each backend and prints a table:

    python3 benchmarks/gbt_backends.py [--rounds 100] [--repeats 3]

The parity column re-checks that predictions agree exactly, so a wildly
fast result can never come from a kernel silently doing less work.
"""

import argparse
import time

import numpy as np

from surplus._gbt import available_backends, fit_forest, predict_forest
from surplus.seeding import substream


def _workloads():
    rng = substream(2024)
    for n, p in ((500, 5), (2000, 10), (8000, 10), (20000, 20)):
        X = rng.standard_normal((n, p))
        beta = rng.uniform(-1, 1, p)
        y = X @ beta + 0.5 * X[:, 0] ** 2 + rng.standard_normal(n)
        yield "n=%d p=%d" % (n, p), X, y


def _time_fit(X, y, backend, rounds, repeats):
    best = float("inf")
    forest = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        forest = fit_forest(X, y, n_rounds=rounds, max_depth=3,
                            learning_rate=0.1, subsample=0.8, seed=7,
                            backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, forest


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounds", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=3, help="keep the best of N runs")
    args = ap.parse_args()

    backends = available_backends()
    if backends == ("python",):
        print("compiled kernel not built; timing the NumPy backend alone")

    header = "%-14s" % "workload" + "".join("%12s" % b for b in backends)
    print(header + "%10s%10s" % ("speedup", "parity"))
    print("-" * len(header + "                    "))
    for tag, X, y in _workloads():
        times, preds = {}, {}
        for b in backends:
            times[b], forest = _time_fit(X, y, b, args.rounds, args.repeats)
            preds[b] = predict_forest(forest, X)
        row = "%-14s" % tag + "".join("%11.3fs" % times[b] for b in backends)
        if len(backends) == 2:
            same = np.array_equal(preds["compiled"], preds["python"])
            row += "%9.1fx%10s" % (times["python"] / times["compiled"],
                                   "exact" if same else "MISMATCH")
        print(row, flush=True)


if __name__ == "__main__":
    main()
