"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--k 20] [--d 5] [--reps 20000]

Times the two per-step kernels directly, then a full mOFUL run in a fresh
interpreter per backend (the backend is chosen at import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from banditlab import _kernels_py

try:
    from banditlab import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

RUN_SNIPPET = (
    "import time; from banditlab import BACKEND; from banditlab.harness import RunConfig, run_experiment;"
    "t=time.perf_counter(); run_experiment(RunConfig(horizon={T}, k={k}, d={d}));"
    "print(BACKEND, time.perf_counter()-t)"
)


def bench_kernels(mod, k, d, reps):
    rng = np.random.default_rng(0)
    A = rng.standard_normal((k, d, d))
    G = np.einsum("kij,klj->kil", A, A) + np.eye(d)
    C = rng.standard_normal((k, d))
    b = rng.random(k)
    x = rng.random(d)
    out = np.empty(k)
    g = np.linalg.inv(G[0])
    t_scores = min(timeit.repeat(lambda: mod.optimistic_scores(x, C, G, b, out),
                                 number=reps, repeat=3)) / reps
    y = x * 1e-3

    def sm():
        mod.sherman_morrison(g, y)
    t_sm = min(timeit.repeat(sm, number=reps, repeat=3)) / reps
    return t_scores, t_sm


def bench_run(pure, T, k, d):
    env = dict(os.environ)
    if pure:
        env["BANDITLAB_PURE_PYTHON"] = "1"
    else:
        env.pop("BANDITLAB_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, "-c", RUN_SNIPPET.format(T=T, k=k, d=d)], env=env,
                         capture_output=True, text=True, check=True).stdout.split()
    return out[0], float(out[1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--reps", type=int, default=20000)
    p.add_argument("--horizon", type=int, default=10000)
    args = p.parse_args(argv)

    mods = [("python", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    print(f"kernels, k={args.k} d={args.d} (microseconds per call)")
    print(f"{'backend':<8} {'scores':>10} {'sherman':>10}")
    for name, mod in mods:
        ts, tsm = bench_kernels(mod, args.k, args.d, args.reps)
        print(f"{name:<8} {ts * 1e6:>10.2f} {tsm * 1e6:>10.2f}")
    print(f"\nfull mOFUL run, T={args.horizon}")
    for pure in (True, False):
        if not pure and _kernels_c is None:
            print("cython   (extension not built)")
            continue
        name, secs = bench_run(pure, args.horizon, args.k, args.d)
        print(f"{name:<8} {secs:>8.3f} s  ({secs / args.horizon * 1e6:.1f} us/step)")


if __name__ == "__main__":
    main()
