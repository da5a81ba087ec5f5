"""Time the E-step kernel (compiled vs numpy fallback) and whole EM fits.

    python3 benchmarks/bench_em.py --n 5000 --repeat 5
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from cohawkes import _backend
from cohawkes.domain import BivariateModel, BivariateParams
from cohawkes.estimation import Packed, _vectors, fit_em, run_pass
from cohawkes.simulation import default_samplers, simulate_dataset

ALPHA = (0.89, 14.67, 3.76, 20.22)
BETA = (3.73, 38.35, 4.21, 48.28)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=5000, help="conversations to simulate")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    truth = BivariateModel(BivariateParams.from_arrays(ALPHA, BETA))
    d = simulate_dataset(truth, default_samplers(), args.n, seed=args.seed)
    n_msg = sum(len(c) for c in d)
    print(f"dataset: {len(d)} conversations, {n_msg} messages; default backend {_backend.BACKEND}")

    packed = Packed(truth, d)
    alpha, beta = _vectors(truth)
    backends = ["python"]
    try:
        _backend.get_kernels("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled kernel not built; timing the numpy fallback only")

    ref = None
    for name in backends:
        t = best_of(lambda: run_pass(packed, alpha, beta, name), args.repeat)
        res = run_pass(packed, alpha, beta, name)
        if ref is None:
            ref = res
        else:
            err = float(np.max(np.abs(res.mass - ref.mass)))
            print(f"  max |mass difference| vs {backends[0]}: {err:.2e}")
        print(f"E-step pass [{name:>6}]: {t * 1e3:8.2f} ms  ({n_msg / t / 1e6:.2f} M messages/s)")

    for name in backends:
        t0 = time.perf_counter()
        _, tr = fit_em(d, "bhp", seed=args.seed, backend=name)
        print(f"fit_em bhp  [{name:>6}]: {time.perf_counter() - t0:8.2f} s, {tr.n_iter} iterations")


if __name__ == "__main__":
    main()
