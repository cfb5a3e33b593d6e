"""Backend selection for the numeric hot loops.

The compiled extension ``cbcert._core`` is used when it imports; otherwise the
NumPy fallback in ``cbcert._kernels_py`` is used. Setting ``CBCERT_PURE_PYTHON=1``
forces the fallback.
"""

import os

import numpy as np

from cbcert import _kernels_py

_impl = _kernels_py
BACKEND = "python"

if os.environ.get("CBCERT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from cbcert import _core as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"


def use_backend(name):
    """Switch backends at runtime ("compiled" or "python"); returns the previous name."""
    global _impl, BACKEND
    previous = BACKEND
    if name == "python":
        _impl, BACKEND = _kernels_py, "python"
    elif name == "compiled":
        from cbcert import _core

        _impl, BACKEND = _core, "compiled"
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def _prep(exps, coefs):
    return (np.ascontiguousarray(exps, dtype=np.int64), np.ascontiguousarray(coefs, dtype=float))


def poly_eval(exps, coefs, pts):
    exps, coefs = _prep(exps, coefs)
    return _impl.poly_eval(exps, coefs, np.ascontiguousarray(pts, dtype=float))


def eval_table(exps, coefs, offsets, pts):
    exps, coefs = _prep(exps, coefs)
    return _impl.eval_table(
        exps, coefs, np.ascontiguousarray(offsets, dtype=np.int64), np.ascontiguousarray(pts, dtype=float)
    )


def rk4_field(exps, coefs, offsets, x0, dt, steps, bound):
    exps, coefs = _prep(exps, coefs)
    return _impl.rk4_field(
        exps, coefs, np.ascontiguousarray(offsets, dtype=np.int64), np.asarray(x0, dtype=float),
        float(dt), int(steps), float(bound),
    )


def pack(polys, n_vars):
    """Concatenate compiled polynomials into (exps, coefs, offsets) for the table kernels."""
    exps, coefs, offsets = [], [], [0]
    for p in polys:
        e, c = p.compiled()
        exps.append(e)
        coefs.append(c)
        offsets.append(offsets[-1] + len(c))
    if exps:
        e = np.concatenate(exps, axis=0) if sum(len(c) for c in coefs) else np.zeros((0, n_vars), np.int64)
        c = np.concatenate(coefs)
    else:
        e, c = np.zeros((0, n_vars), np.int64), np.zeros(0)
    return e.reshape(-1, n_vars), c, np.array(offsets, dtype=np.int64)
