"""Pure NumPy implementations of the hot kernels (fallback for ``_core``)."""

import numpy as np


def _powers(pts, max_deg):
    # pw[e] = pts**e, shape [max_deg + 1, N, n]
    pw = np.empty((max_deg + 1,) + pts.shape)
    pw[0] = 1.0
    for e in range(1, max_deg + 1):
        pw[e] = pw[e - 1] * pts
    return pw


def eval_table(exps, coefs, offsets, pts):
    """Evaluate P polynomials stored back to back.

    Polynomial ``p`` owns terms ``offsets[p]:offsets[p+1]`` of ``exps``/``coefs``.
    Returns an array of shape [N, P].
    """
    pts = np.asarray(pts, dtype=float)
    n_pts, n = pts.shape
    n_poly = len(offsets) - 1
    out = np.zeros((n_pts, n_poly))
    if len(coefs) == 0:
        return out
    pw = _powers(pts, int(exps.max()))
    cols = np.arange(n)
    for p in range(n_poly):
        for t in range(offsets[p], offsets[p + 1]):
            out[:, p] += coefs[t] * np.prod(pw[exps[t], :, cols].T, axis=1)
    return out


def poly_eval(exps, coefs, pts):
    return eval_table(exps, coefs, np.array([0, len(coefs)]), pts)[:, 0]


def rk4_field(exps, coefs, offsets, x0, dt, steps, bound):
    """Classic RK4 for x' = F(x) with F a polynomial vector field.

    All trajectories advance together. A trajectory whose infinity norm exceeds
    ``bound`` is frozen; ``n_valid[k]`` counts its recorded states.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    n_traj, n = x0.shape
    states = np.full((n_traj, steps + 1, n), np.nan)
    states[:, 0] = x0
    n_valid = np.full(n_traj, steps + 1, dtype=np.int64)
    alive = np.all(np.isfinite(x0), axis=1) & (np.abs(x0).max(axis=1) <= bound)
    n_valid[~alive] = 1
    x = x0.copy()

    def field(z):
        return eval_table(exps, coefs, offsets, z)

    for k in range(steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        z = x[idx]
        k1 = field(z)
        k2 = field(z + 0.5 * dt * k1)
        k3 = field(z + 0.5 * dt * k2)
        k4 = field(z + dt * k3)
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        bad = ~np.all(np.isfinite(z), axis=1) | (np.abs(z).max(axis=1) > bound)
        good = idx[~bad]
        x[good] = z[~bad]
        states[good, k + 1] = z[~bad]
        dead = idx[bad]
        n_valid[dead] = k + 1
        alive[dead] = False
    return states, n_valid
