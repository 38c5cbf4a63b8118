"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from ldcstats.crossnobis import balanced_fold_table, xi_from_sigma_k
from ldcstats.kernels import available_backends


def cases(rng):
    U = rng.standard_normal((2000, 5, 5, 30))
    xi = xi_from_sigma_k(np.eye(10))
    t = balanced_fold_table(xi, 8)
    fold_args = (t.mn, t.m_notn, t.notm_n, t.notm_notn, t.weights)
    return {
        "crossnobis_batch R=2000 M=5 K=5 P=30": lambda k: k.crossnobis_batch(U),
        "sigma_k_batch R=2000 M=5 K=5 P=30": lambda k: k.sigma_k_batch(U),
        "fold_sums M=8 D=45": lambda k: k.fold_sums(*fold_args),
    }


def _parts(out):
    return out if isinstance(out, tuple) else (out,)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the NumPy fallback only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s}" + "".join(f"{name:>12s}" for name in backends) + "     speedup")
    for label, fn in cases(rng).items():
        times = {}
        for name, mod in backends.items():
            if name != "python":
                for a, b in zip(_parts(fn(mod)), _parts(fn(backends["python"]))):
                    assert np.allclose(a, b, rtol=1e-10, atol=1e-12), label
            times[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = f"{label:40s}" + "".join(f"{times[n] * 1e3:10.2f}ms" for n in backends)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:10.1f}x"
        print(row)


if __name__ == "__main__":
    main()
