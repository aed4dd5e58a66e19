"""Time the compiled and numpy loss/gradient kernels on the same inputs.

    python3 benchmarks/bench_kernels.py --n 200 400 --repeat 5
"""

import argparse
import time

import numpy as np

from sclgeom import kernels
from sclgeom.batching import make_partition
from sclgeom.geometry import LabelSet, project_columns
from sclgeom.loss import LossConfig, loss_and_gradient


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[60, 200, 400])
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled kernels unavailable; timing the numpy backend only")
    cfg = LossConfig(tau=0.1)
    print(f"{'n':>6} {'mode':>6} " + " ".join(f"{b:>10}" for b in backends) + "   speedup")
    for n in args.n:
        rng = np.random.default_rng(args.seed)
        y = LabelSet(np.concatenate([np.arange(args.k), rng.integers(0, args.k, n - args.k)]))
        H = project_columns(rng.uniform(size=(args.k + 2, n)))[0]
        for mode, batches in (("full", None), ("batch", make_partition(y, args.batch_size))):
            times = []
            for b in backends:
                loss_and_gradient(H, y, batches, cfg, backend=b)
                times.append(best_time(lambda: loss_and_gradient(H, y, batches, cfg, backend=b),
                                       args.repeat))
            speed = f"{times[0] / times[1]:8.1f}x" if len(times) == 2 else ""
            print(f"{n:>6} {mode:>6} " + " ".join(f"{t * 1e3:>8.2f}ms" for t in times) + "  " + speed)


if __name__ == "__main__":
    main()
