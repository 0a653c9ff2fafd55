"""Time the lattice kernels under the numba and numpy backends.

Runs each kernel on the same inputs with both implementations, checks that
the results agree, and prints the median wall time of several repeats. A
full CBC construction is timed in a subprocess per backend, since the
backend is fixed at import time by ``QMCIS_BACKEND``.

Usage::

    python benchmarks/bench_kernels.py [--n-log 14] [--d 16] [--repeats 5]
"""

import argparse
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from qmcis import _kernels, rkhs
from qmcis.lattice import cbc_candidates


def _median_time(fn, repeats):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_kernels(n, d, repeats):
    rng = np.random.default_rng(0)
    theta = rkhs.theta_grid(n, rkhs.WeightScheme.gaussian(4.0))
    coeff = rng.random(n)
    cands = cbc_candidates(n)
    ys = rng.random((d, n)) * 0.1
    gammas = np.arange(1.0, d + 1.0)

    def esp_run(update):
        def run():
            e = np.zeros((d + 1, n))
            e[0] = 1.0
            for y in ys:
                update(e, y)
            return e
        return run

    rows = []
    pairs = [
        ("cbc_scan", lambda: _kernels.cbc_scan_np(theta, coeff, cands),
         lambda: _kernels.cbc_scan_nb(theta, coeff, cands)),
        ("esp_update x d", esp_run(_kernels.esp_update_np), esp_run(_kernels.esp_update_nb)),
    ]
    e_full = esp_run(_kernels.esp_update_np)()
    pairs.append(("esp_weighted_mean", lambda: _kernels.esp_weighted_mean_np(e_full, gammas),
                  lambda: _kernels.esp_weighted_mean_nb(e_full, gammas)))
    for name, f_np, f_nb in pairs:
        a, b = np.asarray(f_np()), np.asarray(f_nb())
        agree = np.allclose(a, b, rtol=1e-12, atol=0.0)
        rows.append((name, _median_time(f_np, repeats), _median_time(f_nb, repeats), agree))
    return rows


_CBC_SNIPPET = """
import time
from qmcis import lattice, rkhs
w = lattice.make_pod_weights({d})
s = rkhs.WeightScheme.gaussian(4.0)
lattice.cbc_construct(64, {d}, w, s)  # warm-up
t0 = time.perf_counter()
gen = lattice.cbc_construct({n}, {d}, w, s)
print(time.perf_counter() - t0, " ".join(map(str, gen.z)))
"""


def bench_cbc(n, d):
    out = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, QMCIS_BACKEND=backend)
        res = subprocess.run([sys.executable, "-c", _CBC_SNIPPET.format(n=n, d=d)], env=env,
                             capture_output=True, text=True, check=True)
        secs, *z = res.stdout.split()
        out[backend] = (float(secs), tuple(z))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--n-log", type=int, default=14, help="log2 of the number of points")
    ap.add_argument("--d", type=int, default=16, help="dimension")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    if not _kernels.NUMBA_AVAILABLE:
        sys.exit("numba is not installed; nothing to compare")
    n = 2**args.n_log
    print(f"N = {n}, d = {args.d}, median of {args.repeats} repeats")
    print(f"{'kernel':20s} {'numpy [s]':>11s} {'numba [s]':>11s} {'speedup':>8s}  agree")
    for name, t_np, t_nb, agree in bench_kernels(n, args.d, args.repeats):
        print(f"{name:20s} {t_np:11.5f} {t_nb:11.5f} {t_np / t_nb:8.1f}  {agree}")
    cbc = bench_cbc(n, args.d)
    (t_np, z_np), (t_nb, z_nb) = cbc["numpy"], cbc["numba"]
    print(f"{'cbc_construct':20s} {t_np:11.5f} {t_nb:11.5f} {t_np / t_nb:8.1f}  {z_np == z_nb}")


if __name__ == "__main__":
    main()
