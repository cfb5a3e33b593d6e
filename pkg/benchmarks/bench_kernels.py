"""Compare the compiled kernels with the NumPy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from cbcert import _kernels_py, kernels
from cbcert.poly import parse_polynomial

try:
    from cbcert import _core
except ImportError:  # extension not built
    _core = None


def workloads():
    rng = np.random.default_rng(0)
    B = parse_polynomial("-7.635*x1^2 - 3.439*x1*x2 - 3.4024*x2^2 + 0.5*x1 - 0.4*x2 + 7.402", 2)
    quartic = parse_polynomial("(x1 + 2*x2 - 1)^4 + x1^3*x2 - 0.5*x2^2 + 3", 2)
    table = kernels.pack([B, quartic] + list(B.gradient()), 2)
    pts = rng.uniform(-2, 2, (100_000, 2))
    field = kernels.pack([parse_polynomial(t, 2) for t in ["x2", "x1 + x1^3/3 + x2 - 0.5*x1^2*x2"]], 2)
    x0 = rng.uniform(-0.5, 0.5, (100, 2))
    return {
        "poly_eval 1e5 points": lambda m: m.poly_eval(*quartic_compiled(quartic), pts),
        "eval_table 4 polys x 1e5 points": lambda m: m.eval_table(*table, pts),
        "rk4_field 100 traj x 1e4 steps": lambda m: m.rk4_field(*field, x0, 1e-3, 10_000, 1e6),
        "rk4_field 1 traj x 1e4 steps": lambda m: m.rk4_field(*field, x0[:1], 1e-3, 10_000, 1e6),
    }


def quartic_compiled(p):
    e, c = p.compiled()
    return np.ascontiguousarray(e, dtype=np.int64), np.ascontiguousarray(c, dtype=float)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = {"python": _kernels_py}
    if _core is not None:
        backends["compiled"] = _core
    else:
        print("compiled core not available; timing the fallback only")
    print(f"{'kernel':36s}" + "".join(f"{name:>14s}" for name in backends) + ("   speedup" if _core else ""))
    for label, fn in workloads().items():
        times = {}
        for name, mod in backends.items():
            times[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = f"{label:36s}" + "".join(f"{times[n] * 1e3:12.2f}ms" for n in backends)
        if _core is not None:
            row += f"   {times['python'] / times['compiled']:7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
