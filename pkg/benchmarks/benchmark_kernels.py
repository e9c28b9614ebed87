"""Benchmark the compiled gradient-descent kernel against the pure-Python one.

Runs the same seeded workload through both kernel implementations, checks
they produce identical iterates, and reports per-iteration timing:

    python3 benchmarks/benchmark_kernels.py
    python3 benchmarks/benchmark_kernels.py --p 25 --k 20 --iters 200000
"""

import argparse
import math
import time

import numpy as np

from convdyn import ExperimentConfig, TeacherParams, make_target_a, sample_init
from convdyn import _backend
from convdyn._gd_python import RECORD_FIELDS, record_capacity
from convdyn.analytic import spurious_a
from convdyn.dynamics import fixed_step_size


def build_workload(p, k, ratio, seed):
    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(p)
    w_star /= np.linalg.norm(w_star)
    t = TeacherParams(w_star=w_star, a_star=make_target_a(k, ratio, 1.0, rng))
    s0 = sample_init(p, k, t, rng)
    return s0, t


def run_kernel(kernel, s0, t, eta, iters, stride):
    out = np.empty((record_capacity(iters, stride), len(RECORD_FIELDS)))
    start = time.perf_counter()
    v, a, iters_run, reason, n_rec = kernel.gd_loop(
        s0.v, s0.a, t.w_star, t.a_star, spurious_a(t),
        eta, iters, 0.0, stride, 0.0, 0.0, out,
    )
    elapsed = time.perf_counter() - start
    return elapsed, int(iters_run), v, a, out[:n_rec]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--p", type=int, default=25, help="patch dimension")
    parser.add_argument("--k", type=int, default=20, help="number of patches")
    parser.add_argument("--ratio", type=float, default=4.0, help="teacher sum ratio")
    parser.add_argument("--iters", type=int, default=100_000, help="iterations per run")
    parser.add_argument("--stride", type=int, default=100, help="record stride")
    parser.add_argument("--seed", type=int, default=0, help="workload seed")
    parser.add_argument("--repeats", type=int, default=3, help="timed repetitions")
    args = parser.parse_args()

    s0, t = build_workload(args.p, args.k, args.ratio, args.seed)
    eta = fixed_step_size(t, 0.5)
    print(
        f"workload: p={args.p} k={args.k} ratio={args.ratio} eta={eta:.3e} "
        f"iters={args.iters} stride={args.stride}"
    )

    kernels = {"python": _backend.get_kernel("python")}
    try:
        kernels["compiled"] = _backend.get_kernel("compiled")
    except RuntimeError:
        print("compiled kernel not built; benchmarking the python kernel only")

    results = {}
    for name, kernel in kernels.items():
        best = math.inf
        for _ in range(args.repeats):
            elapsed, iters_run, v, a, records = run_kernel(
                kernel, s0, t, eta, args.iters, args.stride
            )
            best = min(best, elapsed)
        results[name] = (best, iters_run, v, a, records)
        per_iter = best / iters_run
        print(f"{name:>9}: {best:8.3f}s best of {args.repeats} ({per_iter * 1e6:7.3f} us/iter)")

    if len(results) == 2:
        (t_py, _, v_py, a_py, rec_py) = results["python"]
        (t_cy, _, v_cy, a_cy, rec_cy) = results["compiled"]
        # the kernels accumulate dot products in different orders, so
        # iterates agree to roundoff rather than bitwise
        diff = max(
            float(np.max(np.abs(v_py - v_cy))),
            float(np.max(np.abs(a_py - a_cy))),
            float(np.max(np.abs(rec_py - rec_cy))),
        )
        print(f"  speedup: {t_py / t_cy:.1f}x  max state difference: {diff:.2e}")
        if diff > 1e-9:
            raise SystemExit("kernel outputs disagree beyond roundoff")


if __name__ == "__main__":
    main()
