"""Minimum-intervention safety filter built on a small dense active-set QP solver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from cbcert import kernels
from cbcert.model import Certificate, SynthesisProblem
from cbcert.poly import Polynomial

FEAS_TOL = 1e-9


class InfeasibleQp(ValueError):
    pass


class Degenerate(RuntimeError):
    pass


class InfeasibleAtState(ValueError):
    def __init__(self, x, message="no admissible input satisfies the barrier constraint"):
        super().__init__(f"{message} at x = {np.array2string(np.asarray(x), precision=6)}")
        self.x = np.asarray(x)


def _inverse_pd(Q):
    try:
        L = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        # PSD but singular: a tiny ridge keeps the dual method well defined
        ridge = 1e-12 * max(1.0, float(np.max(np.abs(Q))))
        L = np.linalg.cholesky(Q + ridge * np.eye(Q.shape[0]))
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def solve_qp(Q, c, G=None, h=None, max_iter: Optional[int] = None, tol: float = 1e-12) -> np.ndarray:
    """Minimize 1/2 u'Qu + c'u subject to G u <= h.

    Dual active-set method (Goldfarb-Idnani): start at the unconstrained
    minimizer and add the most violated constraint until none is violated.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    c = np.asarray(c, dtype=float).reshape(-1)
    m = c.shape[0]
    G = np.zeros((0, m)) if G is None else np.atleast_2d(np.asarray(G, dtype=float)).reshape(-1, m)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).reshape(-1)
    if Q.shape != (m, m) or G.shape[0] != h.shape[0]:
        raise ValueError("inconsistent QP dimensions")
    norms = np.linalg.norm(G, axis=1)
    keep = norms > 0
    if np.any(h[~keep] < -FEAS_TOL):
        raise InfeasibleQp("a zero row of G has negative right-hand side")
    # rows as n'u >= b with unit normals
    N_all = -G[keep] / norms[keep, None]
    b_all = -h[keep] / norms[keep]
    return _dual_active_set(_inverse_pd(Q), c, N_all, b_all, max_iter, tol)


def _dual_active_set(Qi, c, N_all, b_all, max_iter, tol):
    m = c.shape[0]
    u = -Qi @ c
    active: list = []
    mu = np.zeros(0)
    limit = max_iter if max_iter is not None else 50 * (len(b_all) + m + 1)
    it = 0
    while True:
        slack = N_all @ u - b_all
        if active:
            slack[active] = 0.0
        p = int(np.argmin(slack)) if slack.size else -1
        if p < 0 or slack[p] >= -tol:
            return u
        mu_p = 0.0
        while True:
            it += 1
            if it > limit:
                raise Degenerate(f"dual active-set method did not terminate in {limit} steps")
            n_p = N_all[p]
            if active:
                N = N_all[active].T
                Nstar = np.linalg.solve(N.T @ Qi @ N, N.T @ Qi)
                H = Qi - Qi @ N @ Nstar
                r = Nstar @ n_p
            else:
                H, r = Qi, np.zeros(0)
            z = H @ n_p
            t1, drop = np.inf, -1
            for j in range(len(active)):
                if r[j] > 1e-14 and mu[j] / r[j] < t1:
                    t1, drop = mu[j] / r[j], j
            zn = float(z @ n_p)
            s_p = float(n_p @ u - b_all[p])
            if zn <= 1e-14 * max(1.0, float(n_p @ Qi @ n_p)):
                # n_p is dependent on the active normals: drop one or stop
                if drop < 0:
                    raise InfeasibleQp("constraints G u <= h have no solution")
                mu = np.delete(mu - t1 * r, drop)
                mu_p += t1
                active.pop(drop)
                continue
            t2 = -s_p / zn
            t = min(t1, t2)
            u = u + t * z
            mu = mu - t * r
            mu_p += t
            if t2 <= t1:
                active.append(p)
                mu = np.append(mu, mu_p)
                break
            active.pop(drop)
            mu = np.delete(mu, drop)


def kkt_residual(Q, c, G, h, u, active_tol: float = 1e-9) -> float:
    """Largest KKT violation; multipliers of the active rows come from NNLS, the others are zero."""
    from scipy.optimize import nnls

    Q, c, u = np.atleast_2d(Q), np.asarray(c, float), np.asarray(u, float)
    G, h = np.atleast_2d(np.asarray(G, float)).reshape(-1, u.size), np.asarray(h, float).reshape(-1)
    grad = Q @ u + c
    primal = float(np.max(np.maximum(G @ u - h, 0.0), initial=0.0))
    if G.shape[0] == 0:
        return max(primal, float(np.max(np.abs(grad))))
    scale = np.maximum(np.linalg.norm(G, axis=1), 1e-300)
    active = np.abs(G @ u - h) / scale <= active_tol
    mu = np.zeros(G.shape[0])
    if np.any(active):
        mu[active] = nnls(G[active].T, -grad)[0]
    stat = float(np.max(np.abs(grad + G.T @ mu)))
    return max(primal, stat)


@dataclass
class FilterConfig:
    cert: Certificate
    problem: SynthesisProblem
    mode: str = "relaxed"
    band: float = 1e-3
    # required value of the barrier row; None: eps2 in relaxed mode (the certificate's own margin), 0 in switching
    margin: Optional[float] = None
    _table: Tuple = field(default=None, init=False, repr=False)
    q_inverse: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.mode not in ("relaxed", "switching"):
            raise ValueError(f"unknown filter mode {self.mode!r}")
        if self.mode == "switching" and not self.band > 0:
            raise ValueError("switching mode needs band > 0")
        if self.mode == "relaxed" and self.cert.lam1 is None:
            raise ValueError("relaxed mode needs the certificate's lam1")
        p = self.problem
        if self.margin is None:
            self.margin = p.epsilons.eps2 if self.mode == "relaxed" else 0.0
        lam1 = self.cert.lam1 if self.cert.lam1 is not None else Polynomial.zero(p.n)
        polys = [self.cert.B, lam1] + list(self.cert.B.gradient()) + list(p.f) + [q for row in p.g for q in row]
        self._table = kernels.pack(polys, p.n)
        self.q_inverse = np.eye(p.m)

    def evaluate(self, x):
        """B, lam1, grad B, f and g at x."""
        n, m = self.problem.n, self.problem.m
        v = kernels.eval_table(*self._table, np.asarray(x, dtype=float).reshape(1, n))[0]
        return v[0], v[1], v[2:2 + n], v[2 + n:2 + 2 * n], v[2 + 2 * n:].reshape(n, m)

    def constraints(self, x):
        """(G, h) with G u <= h describing the admissible inputs at x."""
        p = self.problem
        B, lam1, dB, f, g = self.evaluate(x)
        G, h = [-p.A], [p.b]
        if self.mode == "relaxed":
            G.append(-(dB @ g)[None, :])
            h.append(np.array([dB @ f + lam1 * B - self.margin]))
        elif abs(B) <= self.band:
            G.append(-(dB @ g)[None, :])
            h.append(np.array([dB @ f - self.margin]))
        return np.vstack(G), np.concatenate(h)


def filter_input(config: FilterConfig, x, u_star) -> np.ndarray:
    """Euclidean projection of u_star onto the certified input set at x."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")
    u_star = np.asarray(u_star, dtype=float).reshape(config.problem.m)
    G, h = config.constraints(x)
    if (G @ u_star <= h).all():
        return u_star.copy()
    norms = np.sqrt((G * G).sum(axis=1))
    if (norms == 0).any():
        # the barrier row vanishes where grad B . g = 0; keep it only as a feasibility test
        if (h[norms == 0] < -FEAS_TOL).any():
            raise InfeasibleAtState(x)
        G, h, norms = G[norms > 0], h[norms > 0], norms[norms > 0]
    try:
        return _dual_active_set(config.q_inverse, -u_star, -G / norms[:, None], -h / norms, None, 1e-12) + 0.0
    except InfeasibleQp as exc:
        raise InfeasibleAtState(x) from exc


def filtered_controller(config: FilterConfig, nominal):
    """Callable x -> filtered input, for verify.simulate; nominal is a callable or PolynomialVector."""
    if callable(nominal) and not hasattr(nominal, "evaluate"):
        nom = nominal
    else:
        def nom(x):
            return nominal.evaluate(x)

    def ctrl(x):
        return filter_input(config, x, nom(x))

    return ctrl
