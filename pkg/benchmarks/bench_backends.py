"""Compare the compiled and pure-numpy kernel backends.

Kernel timings run both backends in one process through
``odcp._kernels.backends()``. The end-to-end timing runs ``detect`` in a
fresh interpreter per backend, because the backend is fixed at import time
by ``ODCP_DISABLE_NUMBA``.

    python benchmarks/bench_backends.py [--repeat 5]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from odcp._kernels import METHOD_NEWTON, backends
from odcp.detector import _prefix_stats

END_TO_END = """
import time, numpy as np
from odcp.datagen import generate, preset
from odcp.detector import DetectorConfig, detect
series, _ = generate(preset("d1", seed=3))
detect(series.samples[:260], DetectorConfig(seed=0))  # warm-up and compilation
t = time.perf_counter()
reports = detect(series, DetectorConfig(seed=0))
print(time.perf_counter() - t, [r.global_index for r in reports])
"""


def scan_inputs(t=400, k=10, seed=0):
    """Sufficient statistics for every left prefix of one random window."""
    rng = np.random.default_rng(seed)
    x = rng.dirichlet(rng.uniform(1, 5, k), t)
    c_log, c_x, c_sq = _prefix_stats(x)
    taus = np.arange(k + 1, t - k)
    n = taus.astype(float)
    return c_log[taus] / n[:, None], c_x[taus] / n[:, None], c_sq[taus] / n


def best_of(fn, repeat):
    fn()  # compile on first use
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(repeat):
    args = scan_inputs()
    grid = np.exp(np.random.default_rng(1).uniform(-5, 8, 100_000))
    psi = backends()["numpy"].digamma(grid)
    cases = {
        f"fit_batch ({len(args[0])} fits, K=10)": lambda m: m.fit_batch(*args, 1e-7, 1000, METHOD_NEWTON),
        "digamma (1e5 values)": lambda m: m.digamma(grid),
        "inv_digamma (1e5 values)": lambda m: m.inv_digamma(psi),
    }
    mods = backends()
    rows = []
    for label, call in cases.items():
        times = {name: best_of(lambda m=mod: call(m), repeat) for name, mod in mods.items()}
        rows.append((label, times))
    return rows


def end_to_end():
    out = {}
    for name, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, ODCP_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        seconds, detected = res.stdout.split(" ", 1)
        out[name] = (float(seconds), detected.strip())
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-end-to-end", action="store_true")
    args = parser.parse_args(argv)

    print(f"{'kernel':32s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for label, t in kernel_table(args.repeat):
        nb, npy = t.get("numba"), t["numpy"]
        nb_ms = f"{nb * 1e3:10.2f}" if nb is not None else f"{'-':>10s}"
        ratio = f"{npy / nb:8.1f}" if nb else f"{'-':>8s}"
        print(f"{label:32s} {nb_ms} {npy * 1e3:10.2f} {ratio}")

    if not args.skip_end_to_end:
        e2e = end_to_end()
        print()
        for name, (sec, detected) in e2e.items():
            print(f"detect d1 (T=1000) {name:6s} {sec:8.2f} s  change points {detected}")
        if e2e["numba"][1] != e2e["numpy"][1]:
            print("warning: backends reported different change points")


if __name__ == "__main__":
    main()
