"""Compare the compiled and numpy kernel backends.

Run with ``python3 benchmarks/bench_kernels.py``.  The full protocol timing is
taken in a subprocess per backend because the backend is fixed at import.
"""
import os
import subprocess
import sys
import timeit

import numpy as np

from demonforge import _pykernels as py
from demonforge.qlinalg import random_density

try:
    from demonforge import _ckernels as cy
except ImportError:
    cy = None

REPEAT = 5


def _best(stmt, number):
    return min(timeit.repeat(stmt, number=number, repeat=REPEAT)) / number


def kernel_table():
    rows = []
    for dims in ((2, 2), (2, 2, 2), (4, 4), (3, 3, 4)):
        d = int(np.prod(dims))
        a = random_density(d, seed=1).matrix
        w = np.linalg.eigvalsh(a)
        number = max(10, 20000 // d**2)
        cases = {
            "ptrace": lambda m, a=a, dims=dims: m.ptrace(a, dims, (0,)),
            "entropy": lambda m, a=a: m.entropy(a),
            "xlogx": lambda m, w=w: m.xlogx_entropy(w),
        }
        for name, f in cases.items():
            t_py = _best(lambda: f(py), number)
            t_cy = _best(lambda: f(cy), number) if cy is not None else float("nan")
            rows.append((name, "x".join(map(str, dims)), t_py, t_cy))
    return rows


PROTOCOL = """
import timeit
from demonforge import demos, kernels
from demonforge.bounds import evaluate
from demonforge.protocol import run
s = demos.bell_local()
n = 200
t = min(timeit.repeat(lambda: evaluate(run(s)), number=n, repeat=3)) / n
print(kernels.BACKEND, t)
"""


def protocol_times():
    out = {}
    for forced in (False, True):
        env = dict(os.environ)
        env.pop("DEMONFORGE_PURE_PYTHON", None)
        if forced:
            env["DEMONFORGE_PURE_PYTHON"] = "1"
        res = subprocess.run([sys.executable, "-c", PROTOCOL], env=env, capture_output=True, text=True, check=True)
        backend, t = res.stdout.split()
        out[backend] = float(t)
    return out


def main():
    print(f"{'kernel':<10}{'dims':<10}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for name, dims, t_py, t_cy in kernel_table():
        print(f"{name:<10}{dims:<10}{t_py * 1e6:>14.2f}{t_cy * 1e6:>14.2f}{t_py / t_cy:>10.2f}")
    print()
    times = protocol_times()
    for backend, t in times.items():
        print(f"bell-local run + bounds, {backend:<7} backend: {t * 1e3:.3f} ms")
    if len(times) == 2:
        print(f"speedup {times['python'] / times['cython']:.2f}x")


if __name__ == "__main__":
    main()
