"""Time the compiled kernels against the numpy fallback.

Run ``python3 benchmarks/bench_kernels.py``; prints median wall-clock time of
each kernel per backend and checks that both agree.
"""

import argparse
import time

import numpy as np

from augmentlab import _kernels_py, linalg

try:
    from augmentlab import _kernels
except ImportError:
    _kernels = None


def timeit(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--batch", type=int, default=500)
    parser.add_argument("--rows", type=int, default=300)
    parser.add_argument("--cols", type=int, default=60)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    images = rng.random((args.batch, 28, 28))
    t = rng.uniform(-0.5, 0.5, args.batch)
    coeffs = np.stack([np.cos(t), -np.sin(t), 13.5 * (1 - np.cos(t) + np.sin(t)),
                       np.sin(t), np.cos(t), 13.5 * (1 - np.sin(t) - np.cos(t))], axis=1)
    a = rng.standard_normal((args.rows, args.cols))
    sweeps = linalg.JACOBI_SWEEP_FACTOR
    tol = linalg.JACOBI_TOL_FACTOR * np.finfo(float).eps

    cases = {
        "affine_warp": lambda m: m.affine_warp(images, coeffs),
        "jacobi_svd_tall": lambda m: m.jacobi_svd_tall(a.copy(), sweeps, tol),
    }
    backends = {"python": _kernels_py}
    if _kernels is not None:
        backends["cython"] = _kernels
    else:
        print("compiled extension not built; timing the python backend only")

    print(f"{'kernel':<18}{'backend':<10}{'median s':>12}{'speedup':>10}")
    for name, run in cases.items():
        ref_time, ref = timeit(lambda: run(_kernels_py), args.repeats)
        for label, mod in backends.items():
            sec, out = (ref_time, ref) if mod is _kernels_py else timeit(lambda: run(mod), args.repeats)
            first = out[0] if isinstance(out, tuple) else out
            ref_first = ref[0] if isinstance(ref, tuple) else ref
            if name == "jacobi_svd_tall":
                agree = np.allclose(np.sort(out[1]), np.sort(ref[1]), rtol=1e-10)
            else:
                agree = np.allclose(first, ref_first, atol=1e-12)
            print(f"{name:<18}{label:<10}{sec:>12.5f}{ref_time / sec:>9.1f}x{'' if agree else '  MISMATCH'}")


if __name__ == "__main__":
    main()
