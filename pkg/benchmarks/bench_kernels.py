"""Compare the compiled kernels with the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Each kernel is timed on inputs shaped like the library's real workloads:
small Hermitian eigenproblems, the qubit sign search behind the exact
witness bound, and strategy enumeration for the 12-state witness.
"""
import argparse
import timeit

import numpy as np

from classim import kernels
from classim.linalg import JACOBI_TOL, random_hermitian


def cases(rng):
    for d in (3, 8, 16):
        a = random_hermitian(d, rng)
        yield f"jacobi_eigh d={d}", "jacobi_eigh", (a, JACOBI_TOL, 100)
    for m in (10, 14):
        ops = np.array([random_hermitian(2, rng) for _ in range(m)])
        yield f"max_lambda_signs m={m}", "max_lambda_signs", (ops,)
    yield "restricted_growth_strings m=12 d=3", "restricted_growth_strings", (12, 3)


def best_time(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    py = kernels.python_backend
    cy = kernels.compiled_backend
    if cy is None:
        print("compiled kernels unavailable; only the Python timings are shown")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<38}{'python':>12}{'compiled':>12}{'speedup':>10}")
    for label, name, call_args in cases(rng):
        t_py = best_time(getattr(py, name), call_args, args.repeat)
        if cy is None:
            print(f"{label:<38}{t_py * 1e3:>10.3f}ms{'-':>12}{'-':>10}")
            continue
        t_cy = best_time(getattr(cy, name), call_args, args.repeat)
        print(f"{label:<38}{t_py * 1e3:>10.3f}ms{t_cy * 1e3:>10.3f}ms{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
