"""Dense primal-dual interior-point solver for small block SDPs.

Primal:  minimize <C, X>  s.t.  <A_i, X> = b_i,  X in K
Dual:    maximize b'y     s.t.  sum_i y_i A_i + S = C,  S in K*

K is a product of PSD blocks, nonnegative orthants ("lp") and free blocks
(whose dual slack is identically zero). The method is an infeasible-start
path-following scheme with the HKM search direction and Mehrotra
predictor-corrector steps; the Newton system is reduced to the Schur
complement, bordered by the free-variable columns.

Feasibility problems are solved as margin maximization: find X with
X - t*I in K for the largest t, so "strictly feasible" becomes t > tol_strict.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)

PSD, LP, FREE = "psd", "lp", "free"

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
SLOW_PROGRESS = "SlowProgress"


class SdpError(RuntimeError):
    pass


class NumericalFailure(SdpError):
    pass


class IterationLimit(SdpError):
    pass


@dataclass(frozen=True)
class Block:
    kind: str
    size: int

    def __post_init__(self):
        if self.kind not in (PSD, LP, FREE):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("block size must be positive")


@dataclass
class SdpProblem:
    """Block SDP in standard form.

    ``A[k]`` stacks constraint data for block k: shape (m, n, n) for a PSD
    block of order n and (m, n) for lp/free blocks. ``C`` follows the same
    per-block layout without the leading m axis.
    """

    blocks: List[Block]
    A: List[np.ndarray]
    b: np.ndarray
    C: Optional[List[np.ndarray]] = None
    sense: str = "minimize"
    trace_bound: Optional[float] = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        m = self.b.shape[0]
        if len(self.A) != len(self.blocks):
            raise ValueError("one A array per block required")
        fixed = []
        for blk, a in zip(self.blocks, self.A):
            a = np.asarray(a, dtype=float)
            want = (m, blk.size, blk.size) if blk.kind == PSD else (m, blk.size)
            if a.shape != want:
                raise ValueError(f"A block has shape {a.shape}, expected {want}")
            fixed.append(a)
        self.A = fixed
        if self.C is None:
            self.C = [np.zeros((k.size, k.size)) if k.kind == PSD else np.zeros(k.size) for k in self.blocks]
        else:
            self.C = [np.asarray(c, dtype=float) for c in self.C]
        if self.sense not in ("minimize", "feasibility"):
            raise ValueError(f"unknown sense {self.sense!r}")
        if not np.all(np.isfinite(self.b)):
            raise ValueError("b must be finite")
        for blk, a, c in zip(self.blocks, self.A, self.C):
            if blk.kind == PSD:
                if not np.allclose(a, a.transpose(0, 2, 1), atol=1e-12) or not np.allclose(c, c.T, atol=1e-12):
                    raise ValueError("PSD block data must be symmetric")

    @property
    def n_constraints(self) -> int:
        return self.b.shape[0]

    def constraints(self) -> Iterator[Tuple[List[np.ndarray], float]]:
        """Yield (per-block A_i, b_i) pairs."""
        for i in range(self.n_constraints):
            yield [a[i] for a in self.A], float(self.b[i])

    # plain-text triplet dump: one "kind index block row col value" entry per line

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# sense {self.sense}\n")
            fh.write("blocks " + " ".join(f"{b.kind}:{b.size}" for b in self.blocks) + "\n")
            if self.trace_bound is not None:
                fh.write(f"trace_bound {float(self.trace_bound)!r}\n")
            for i, bi in enumerate(self.b):
                fh.write(f"b {i} {float(bi)!r}\n")
            for k, (blk, c) in enumerate(zip(self.blocks, self.C)):
                for r, col, v in _triplets(blk, c):
                    fh.write(f"c -1 {k} {r} {col} {float(v)!r}\n")
            for k, (blk, a) in enumerate(zip(self.blocks, self.A)):
                for i in range(self.n_constraints):
                    for r, col, v in _triplets(blk, a[i]):
                        fh.write(f"a {i} {k} {r} {col} {float(v)!r}\n")

    @classmethod
    def load(cls, path) -> "SdpProblem":
        sense, blocks, trace_bound = "minimize", [], None
        b_entries, c_entries, a_entries = {}, [], []
        with open(path) as fh:
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                if parts[0] == "#":
                    if len(parts) >= 3 and parts[1] == "sense":
                        sense = parts[2]
                elif parts[0] == "blocks":
                    for tok in parts[1:]:
                        kind, size = tok.split(":")
                        blocks.append(Block(kind, int(size)))
                elif parts[0] == "trace_bound":
                    trace_bound = float(parts[1])
                elif parts[0] == "b":
                    b_entries[int(parts[1])] = float(parts[2])
                elif parts[0] in ("a", "c"):
                    i, k, r, col = (int(t) for t in parts[1:5])
                    (a_entries if parts[0] == "a" else c_entries).append((i, k, r, col, float(parts[5])))
        m = len(b_entries)
        b = np.array([b_entries[i] for i in range(m)])
        A = [np.zeros((m, k.size, k.size)) if k.kind == PSD else np.zeros((m, k.size)) for k in blocks]
        C = [np.zeros((k.size, k.size)) if k.kind == PSD else np.zeros(k.size) for k in blocks]
        for i, k, r, col, v in a_entries:
            _put(blocks[k], A[k][i], r, col, v)
        for _, k, r, col, v in c_entries:
            _put(blocks[k], C[k], r, col, v)
        return cls(blocks, A, b, C, sense=sense, trace_bound=trace_bound)


def _triplets(blk, mat):
    if blk.kind == PSD:
        rows, cols = np.nonzero(np.triu(mat))
        return [(int(r), int(c), float(mat[r, c])) for r, c in zip(rows, cols)]
    return [(int(r), 0, float(mat[r])) for r in np.flatnonzero(mat)]


def _put(blk, target, r, col, v):
    if blk.kind == PSD:
        target[r, col] = v
        target[col, r] = v
    else:
        target[r] = v


@dataclass
class SdpSettings:
    tol_feas: float = 1e-8
    tol_gap: float = 1e-7
    tol_psd: float = 1e-8
    tol_strict: float = 1e-9
    max_iter: int = 100
    step_fraction: float = 0.95
    tol_infeas: float = 1e-8


@dataclass
class SdpSolution:
    X: List[np.ndarray]
    y: np.ndarray
    S: List[np.ndarray]
    status: str
    primal_residual: float
    dual_residual: float
    duality_gap: float
    iterations: int = 0
    primal_objective: float = float("nan")
    dual_objective: float = float("nan")
    margin: Optional[float] = None
    # status of the margin-embedded problem (feasibility sense only)
    raw_status: Optional[str] = None
    history: List[dict] = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# linear maps over block lists


def _apply_A(A, blocks, X):
    out = np.zeros(A[0].shape[0]) if A else np.zeros(0)
    for a, blk, x in zip(A, blocks, X):
        if blk.kind == PSD:
            out += a.reshape(a.shape[0], -1) @ x.ravel()
        else:
            out += a @ x
    return out


def _apply_AT(A, blocks, y):
    out = []
    for a, blk in zip(A, blocks):
        if blk.kind == PSD:
            out.append(np.tensordot(y, a, axes=1))
        else:
            out.append(y @ a)
    return out


def _inner(blocks, X, Y):
    return float(sum(np.vdot(x, z) for x, z in zip(X, Y)))


def residuals(problem: SdpProblem, sol: SdpSolution) -> Tuple[float, float, float]:
    """(||A(X)-b||_inf, max_blocks ||A'y+S-C||_inf, |<C,X>-b'y|/(1+|b'y|))."""
    blocks = problem.blocks
    rp = _apply_A(problem.A, blocks, sol.X) - problem.b
    aty = _apply_AT(problem.A, blocks, sol.y)
    rd = 0.0
    for blk, a, s, c in zip(blocks, aty, sol.S, problem.C):
        s_eff = np.zeros_like(c) if blk.kind == FREE else s
        rd = max(rd, float(np.max(np.abs(a + s_eff - c))) if c.size else 0.0)
    pobj = _inner(blocks, problem.C, sol.X)
    dobj = float(problem.b @ sol.y)
    gap = abs(pobj - dobj) / (1.0 + abs(dobj))
    pres = float(np.max(np.abs(rp))) if rp.size else 0.0
    return pres, rd, gap


def min_eigenvalue(blocks: Sequence[Block], X: Sequence[np.ndarray]) -> float:
    """Smallest eigenvalue over PSD blocks and smallest entry over lp blocks."""
    vals = [np.inf]
    for blk, x in zip(blocks, X):
        if blk.kind == PSD:
            vals.append(float(np.linalg.eigvalsh(x)[0]))
        elif blk.kind == LP:
            vals.append(float(np.min(x)))
    return min(vals)


# margin embedding for feasibility problems


def _margin_embedding(problem: SdpProblem):
    """max t s.t. A(Xt + t*E) = b, Xt in K, plus an optional trace cap.

    New variables: the original blocks (holding Xt), one free scalar t and, with
    a trace cap, one lp slack r: sum tr(Xt) + N*t + r = cap.
    """
    blocks = list(problem.blocks)
    m = problem.n_constraints
    e_col = np.zeros(m)
    n_cone = 0
    for blk, a in zip(blocks, problem.A):
        if blk.kind == PSD:
            e_col += np.trace(a, axis1=1, axis2=2)
            n_cone += blk.size
        elif blk.kind == LP:
            e_col += a.sum(axis=1)
            n_cone += blk.size
    cap = problem.trace_bound
    rows = m + (1 if cap is not None else 0)
    A_new, C_new = [], []
    for blk, a in zip(blocks, problem.A):
        if cap is not None:
            extra = np.zeros((1,) + a.shape[1:])
            if blk.kind == PSD:
                extra[0] = np.eye(blk.size)
            elif blk.kind == LP:
                extra[0] = 1.0
            a = np.concatenate([a, extra], axis=0)
        A_new.append(a)
        C_new.append(np.zeros((blk.size, blk.size)) if blk.kind == PSD else np.zeros(blk.size))
    t_col = e_col if cap is None else np.concatenate([e_col, [float(n_cone)]])
    blocks_new = blocks + [Block(FREE, 1)]
    A_new.append(t_col.reshape(rows, 1))
    C_new.append(np.array([-1.0]))
    b_new = problem.b.copy()
    if cap is not None:
        blocks_new.append(Block(LP, 1))
        slack = np.zeros((rows, 1))
        slack[-1, 0] = 1.0
        A_new.append(slack)
        C_new.append(np.zeros(1))
        b_new = np.concatenate([b_new, [float(cap)]])
    return SdpProblem(blocks_new, A_new, b_new, C_new, sense="minimize")


def solve(problem: SdpProblem, settings: Optional[SdpSettings] = None) -> SdpSolution:
    """Solve an SdpProblem; see the module docstring for the formulation."""
    settings = settings or SdpSettings()
    if problem.sense == "feasibility":
        return _solve_feasibility(problem, settings)
    return _solve_minimize(problem, settings)


def _solve_feasibility(problem, settings):
    blocks = problem.blocks
    if problem.n_constraints == 0:
        X = [np.eye(b.size) if b.kind == PSD else (np.ones(b.size) if b.kind == LP else np.zeros(b.size)) for b in blocks]
        S = [np.zeros_like(x) for x in X]
        return SdpSolution(X, np.zeros(0), S, OPTIMAL, 0.0, 0.0, 0.0, margin=np.inf,
                           primal_objective=0.0, dual_objective=0.0, raw_status=OPTIMAL)
    emb = _margin_embedding(problem)
    raw = _solve_minimize(emb, settings)
    if raw.status == UNBOUNDED and problem.trace_bound is None:
        # an unbounded margin means strict feasibility; a trace cap yields a finite witness
        order = sum(b.size for b in blocks if b.kind != FREE)
        capped = SdpProblem(blocks, problem.A, problem.b, problem.C, sense="feasibility",
                            trace_bound=10.0 * order * (1.0 + float(np.max(np.abs(problem.b)))))
        emb = _margin_embedding(capped)
        raw = _solve_minimize(emb, settings)
    nb = len(blocks)
    t = float(raw.X[nb][0])
    X = []
    for blk, x in zip(blocks, raw.X[:nb]):
        if blk.kind == PSD:
            X.append(x + t * np.eye(blk.size))
        elif blk.kind == LP:
            X.append(x + t)
        else:
            X.append(x.copy())
    m = problem.n_constraints
    y = raw.y[:m]
    S = [s.copy() for s in raw.S[:nb]]
    pres = float(np.max(np.abs(_apply_A(problem.A, blocks, X) - problem.b)))
    if raw.status == OPTIMAL:
        status = OPTIMAL if t > settings.tol_strict else INFEASIBLE
    elif raw.status == SLOW_PROGRESS and t > settings.tol_strict and pres <= 1e3 * settings.tol_feas:
        status = SLOW_PROGRESS
    else:
        status = raw.status if raw.status != OPTIMAL else INFEASIBLE
    return SdpSolution(
        X, y, S, status, pres, raw.dual_residual, raw.duality_gap, raw.iterations,
        primal_objective=t, dual_objective=-raw.dual_objective, margin=t, raw_status=raw.status,
        history=raw.history,
    )


class _Scaled:
    """Row-scaled copy of the problem data with per-block row supports."""

    def __init__(self, problem: SdpProblem):
        self.blocks = problem.blocks
        m = problem.n_constraints
        row_max = np.zeros(m)
        for blk, a in zip(problem.blocks, problem.A):
            flat = np.abs(a.reshape(m, -1))
            if flat.size:
                row_max = np.maximum(row_max, flat.max(axis=1))
        self.zero_rows = row_max == 0.0
        d = np.where(row_max > 0, row_max, 1.0)
        self.d = d
        self.b = problem.b / d
        self.A = []
        self.Av = []
        self.rows = []
        for blk, a in zip(problem.blocks, problem.A):
            shape = (m,) + (1,) * (a.ndim - 1)
            sa = a / d.reshape(shape)
            self.A.append(sa)
            flat = sa.reshape(m, -1)
            self.Av.append(flat)
            self.rows.append(np.flatnonzero(np.any(flat != 0, axis=1)))
        self.C = problem.C
        self.m = m


def _sym(M):
    return 0.5 * (M + M.T)


def _max_step_psd(X, dX):
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("iterate left the PSD cone") from exc
    M = sla.solve_triangular(L, dX, lower=True)
    M = sla.solve_triangular(L, M.T, lower=True)
    lam = np.linalg.eigvalsh(_sym(M))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def _initial_point(sc: _Scaled):
    X, S = [], []
    for blk, a, c in zip(sc.blocks, sc.A, sc.C):
        n = blk.size
        if blk.kind == FREE:
            X.append(np.zeros(n))
            S.append(np.zeros(n))
            continue
        flat = a.reshape(sc.m, -1)
        norms = np.sqrt((flat**2).sum(axis=1))
        used = norms > 0
        if np.any(used):
            xi = max(10.0, np.sqrt(n), n * float(np.max((1.0 + np.abs(sc.b[used])) / (1.0 + norms[used]))))
            eta = max(10.0, np.sqrt(n), float(np.max(norms)), float(np.linalg.norm(c)))
        else:
            xi = eta = max(10.0, np.sqrt(n))
        if blk.kind == PSD:
            X.append(xi * np.eye(n))
            S.append(eta * np.eye(n))
        else:
            X.append(xi * np.ones(n))
            S.append(eta * np.ones(n))
    return X, np.zeros(sc.m), S


def _solve_minimize(problem: SdpProblem, settings: SdpSettings) -> SdpSolution:
    blocks = problem.blocks
    sc = _Scaled(problem)
    if np.any(sc.zero_rows & (np.abs(problem.b) > 0)):
        # an all-zero row with nonzero right-hand side can never be satisfied
        X = [np.zeros((b.size, b.size)) if b.kind == PSD else np.zeros(b.size) for b in blocks]
        pres = float(np.max(np.abs(problem.b[sc.zero_rows])))
        return SdpSolution(X, np.zeros(sc.m), [np.zeros_like(x) for x in X], INFEASIBLE, pres, np.inf, np.inf)
    if problem.trace_bound is not None:
        problem = _with_trace_cap(problem)
        blocks = problem.blocks
        sc = _Scaled(problem)
    ipm = _Ipm(sc, settings)
    X, y, S, status, it = ipm.run()
    y_orig = y / sc.d
    sol = SdpSolution(X, y_orig, S, status, 0.0, 0.0, 0.0, it, history=ipm.history)
    sol.primal_residual, sol.dual_residual, sol.duality_gap = residuals(problem, sol)
    sol.primal_objective = _inner(blocks, problem.C, X)
    sol.dual_objective = float(problem.b @ y_orig)
    if problem is not None and hasattr(problem, "_orig_nblocks"):
        nb = problem._orig_nblocks
        sol.X, sol.S = sol.X[:nb], sol.S[:nb]
        sol.y = sol.y[:-1]
    return sol


def _with_trace_cap(problem: SdpProblem) -> SdpProblem:
    # minimize-sense cap: sum tr(X) + r = cap with r >= 0
    m = problem.n_constraints
    A_new, C_new = [], []
    for blk, a, c in zip(problem.blocks, problem.A, problem.C):
        extra = np.zeros((1,) + a.shape[1:])
        if blk.kind == PSD:
            extra[0] = np.eye(blk.size)
        elif blk.kind == LP:
            extra[0] = 1.0
        A_new.append(np.concatenate([a, extra], axis=0))
        C_new.append(c)
    slack = np.zeros((m + 1, 1))
    slack[-1, 0] = 1.0
    out = SdpProblem(
        list(problem.blocks) + [Block(LP, 1)], A_new + [slack], np.concatenate([problem.b, [problem.trace_bound]]),
        C_new + [np.zeros(1)], sense="minimize",
    )
    out._orig_nblocks = len(problem.blocks)
    return out


class _Ipm:
    def __init__(self, sc: _Scaled, settings: SdpSettings):
        self.sc = sc
        self.st = settings
        self.blocks = sc.blocks
        self.history: List[dict] = []
        self.free_idx = [k for k, b in enumerate(self.blocks) if b.kind == FREE]
        self.cone_idx = [k for k, b in enumerate(self.blocks) if b.kind != FREE]
        self.n_cone = sum(self.blocks[k].size for k in self.cone_idx)
        self.Af = (
            np.concatenate([sc.A[k] for k in self.free_idx], axis=1) if self.free_idx else np.zeros((sc.m, 0))
        )
        # free columns that touch no constraint are pinned at zero
        self.af_used = np.any(self.Af != 0, axis=0)
        # A_f = U1 diag(sv) V1'; U2 spans the null space of A_f'
        Af = self.Af[:, self.af_used]
        if Af.shape[1]:
            U, sv, Vt = np.linalg.svd(Af, full_matrices=True)
            r = int(np.sum(sv > 1e-12 * max(1.0, sv[0])))
            self.U1, self.sv, self.V1, self.U2 = U[:, :r], sv[:r], Vt[:r].T, U[:, r:]
        else:
            self.U1, self.sv = np.zeros((sc.m, 0)), np.zeros(0)
            self.V1, self.U2 = np.zeros((0, 0)), np.eye(sc.m)
        # pseudo-inverse of A A' for projecting primal directions onto A(dX) = rp
        full = np.concatenate([a for a in sc.Av], axis=1) if sc.Av else np.zeros((sc.m, 0))
        w, V = np.linalg.eigh(full @ full.T)
        keep = w > 1e-12 * max(1.0, float(w.max()) if w.size else 1.0)
        self.aat_pinv = (V[:, keep] / w[keep]) @ V[:, keep].T

    # residuals on the scaled data
    def _residuals(self, X, y, S):
        sc = self.sc
        rp = sc.b - _apply_A(sc.A, self.blocks, X)
        aty = _apply_AT(sc.A, self.blocks, y)
        Rd = []
        for blk, a, s, c in zip(self.blocks, aty, S, sc.C):
            Rd.append(c - a - (0.0 if blk.kind == FREE else s))
        return rp, Rd

    def _schur(self, X, S, Sinv):
        sc = self.sc
        m = sc.m
        M = np.zeros((m, m))
        for k in self.cone_idx:
            rows = sc.rows[k]
            if rows.size == 0:
                continue
            blk = self.blocks[k]
            Av = sc.Av[k][rows]
            if blk.kind == PSD:
                Ak = sc.A[k][rows]
                P = X[k] @ Ak @ Sinv[k]
                Mk = Av @ P.reshape(rows.size, -1).T
                Mk = 0.5 * (Mk + Mk.T)
            else:
                Mk = (Av * (X[k] / S[k])) @ Av.T
            M[np.ix_(rows, rows)] += Mk
        return M

    def _factor(self, M):
        # reduced Schur complement on the null space of A_f'
        U2 = self.U2
        Mr = U2.T @ M @ U2
        Mr = 0.5 * (Mr + Mr.T)
        scale = max(1.0, float(np.max(np.abs(np.diag(Mr))))) if Mr.size else 1.0
        for shift in (0.0, 1e-14, 1e-12, 1e-10):
            try:
                f = sla.cho_factor(Mr + shift * scale * np.eye(Mr.shape[0]), lower=True)
            except np.linalg.LinAlgError:
                continue
            if np.all(np.isfinite(f[0])):
                return ("chol", f, M, Mr)
        raise NumericalFailure("singular Schur complement")

    def _reduced_solve(self, fac, r):
        _, f, _, Mr = fac
        z = sla.cho_solve(f, r)
        for _ in range(2):
            res = r - Mr @ z
            if not np.all(np.isfinite(res)):
                break
            z = z + sla.cho_solve(f, res)
        return z

    def _direction(self, fac, X, S, Sinv, rp, Rd, Rc):
        """Solve for (dX, dy, dS) given complementarity targets Rc (dX = Rc - sym(X dS S^-1))."""
        M = fac[2]
        sc = self.sc
        h = rp.copy()
        for k in self.cone_idx:
            blk = self.blocks[k]
            if blk.kind == PSD:
                T = Rc[k] - _sym(X[k] @ Rd[k] @ Sinv[k])
                h -= sc.Av[k] @ T.ravel()
            else:
                T = Rc[k] - X[k] * Rd[k] / S[k]
                h -= sc.A[k] @ T
        rdf = np.concatenate([Rd[k] for k in self.free_idx]) if self.free_idx else np.zeros(0)
        rdf = rdf[self.af_used]
        # M dy + A_f dxf = h,  A_f' dy = rdf
        dy_p = self.U1 @ ((self.V1.T @ rdf) / self.sv) if self.sv.size else np.zeros(sc.m)
        z = self._reduced_solve(fac, self.U2.T @ (h - M @ dy_p)) if self.U2.shape[1] else np.zeros(0)
        dy = dy_p + self.U2 @ z
        dxf_used = self.V1 @ ((self.U1.T @ (h - M @ dy)) / self.sv) if self.sv.size else np.zeros(0)
        sol = np.concatenate([dy, dxf_used])
        if not np.all(np.isfinite(sol)):
            raise NumericalFailure("non-finite Newton direction")
        aty = _apply_AT(sc.A, self.blocks, dy)
        dX, dS = [None] * len(self.blocks), [None] * len(self.blocks)
        dxf_all = np.zeros(self.Af.shape[1])
        dxf_all[self.af_used] = dxf_used
        offset = 0
        for k, blk in enumerate(self.blocks):
            if blk.kind == FREE:
                dX[k] = dxf_all[offset: offset + blk.size]
                dS[k] = np.zeros(blk.size)
                offset += blk.size
            elif blk.kind == PSD:
                dS[k] = _sym(Rd[k] - aty[k])
                dX[k] = _sym(Rc[k] - _sym(X[k] @ dS[k] @ Sinv[k]))
            else:
                dS[k] = Rd[k] - aty[k]
                dX[k] = Rc[k] - X[k] * dS[k] / S[k]
        # rounding in dX grows with cond(S) late in the run; remove it
        err = rp - _apply_A(sc.A, self.blocks, dX)
        fix = _apply_AT(sc.A, self.blocks, self.aat_pinv @ err)
        dX = [d + f for d, f in zip(dX, fix)]
        return dX, dy, dS

    def _steps(self, X, S, dX, dS):
        ap, ad = np.inf, np.inf
        for k in self.cone_idx:
            blk = self.blocks[k]
            if blk.kind == PSD:
                ap = min(ap, _max_step_psd(X[k], dX[k]))
                ad = min(ad, _max_step_psd(S[k], dS[k]))
            else:
                ap = min(ap, _max_step_lp(X[k], dX[k]))
                ad = min(ad, _max_step_lp(S[k], dS[k]))
        return ap, ad

    def _backtrack(self, X, dX, a):
        # rounding can put X + a*dX just outside the cone; shrink until Cholesky succeeds
        for _ in range(30):
            ok = True
            for k in self.cone_idx:
                z = X[k] + a * dX[k]
                if self.blocks[k].kind == PSD:
                    try:
                        np.linalg.cholesky(_sym(z))
                    except np.linalg.LinAlgError:
                        ok = False
                        break
                elif np.any(z <= 0):
                    ok = False
                    break
            if ok:
                return a
            a *= 0.5
        raise NumericalFailure("cannot keep iterates interior")

    def _mu(self, X, S):
        if self.n_cone == 0:
            return 0.0
        return sum(float(np.vdot(X[k], S[k])) for k in self.cone_idx) / self.n_cone

    def run(self):
        st = self.st
        sc = self.sc
        X, y, S = _initial_point(sc)
        bnorm = 1.0 + float(np.max(np.abs(sc.b))) if sc.m else 1.0
        cnorm = 1.0 + max((float(np.max(np.abs(c))) if c.size else 0.0) for c in sc.C)
        status = None
        best = None
        stall = 0
        for it in range(st.max_iter + 1):
            rp, Rd = self._residuals(X, y, S)
            pinf = float(np.max(np.abs(rp))) if rp.size else 0.0
            dinf = max((float(np.max(np.abs(r))) if r.size else 0.0) for r in Rd)
            pobj = _inner(self.blocks, sc.C, X)
            dobj = float(sc.b @ y)
            gap = abs(pobj - dobj) / (1.0 + abs(dobj))
            mu = self._mu(X, S)
            # unscaled primal residual; rows were divided by d
            pinf_orig = float(np.max(np.abs(rp * sc.d))) if rp.size else 0.0
            self.history.append(dict(it=it, pinf=pinf, dinf=dinf, gap=gap, mu=mu, pobj=pobj, dobj=dobj))
            if (
                max(pinf, pinf_orig) <= st.tol_feas
                and dinf <= st.tol_feas
                and gap <= st.tol_gap
            ):
                status = OPTIMAL
                break
            score = max(pinf / bnorm, dinf / cnorm, gap)
            if best is None or score < best[0]:
                best = (score, [x.copy() for x in X], y.copy(), [s.copy() for s in S])
            # infeasibility certificates
            aty = _apply_AT(sc.A, self.blocks, y)
            if dobj > 0:
                ray = max(
                    (float(np.max(np.abs(a + (0.0 if b.kind == FREE else s)))) if a.size else 0.0)
                    for a, s, b in zip(aty, S, self.blocks)
                )
                if ray / dobj < st.tol_infeas and pinf > 10 * st.tol_feas:
                    status = INFEASIBLE
                    break
            if pobj < 0:
                ax = _apply_A(sc.A, self.blocks, X)
                if float(np.max(np.abs(ax))) / -pobj < st.tol_infeas and dinf > 10 * st.tol_feas:
                    status = UNBOUNDED
                    break
            if it == st.max_iter:
                break
            Sinv = [np.linalg.inv(S[k]) if self.blocks[k].kind == PSD else None for k in range(len(self.blocks))]
            for k in self.cone_idx:
                if self.blocks[k].kind == PSD:
                    Sinv[k] = _sym(Sinv[k])
            M = self._schur(X, S, Sinv)
            fac = self._factor(M)
            # predictor
            Rc = [None] * len(self.blocks)
            for k in self.cone_idx:
                Rc[k] = -X[k]
            dXa, dya, dSa = self._direction(fac, X, S, Sinv, rp, Rd, Rc)
            ap, ad = self._steps(X, S, dXa, dSa)
            ap, ad = min(1.0, ap), min(1.0, ad)
            mu_aff = 0.0
            if self.n_cone:
                mu_aff = sum(
                    float(np.vdot(X[k] + ap * dXa[k], S[k] + ad * dSa[k])) for k in self.cone_idx
                ) / self.n_cone
            sigma = 0.0 if mu == 0 else min(1.0, max(0.0, (mu_aff / mu)) ** 3)
            # heavier centering while far from feasibility keeps the iterates interior
            if max(pinf / bnorm, dinf / cnorm) > 1e-2:
                sigma = max(sigma, 0.1)
            # corrector
            for k in self.cone_idx:
                if self.blocks[k].kind == PSD:
                    Rc[k] = sigma * mu * Sinv[k] - X[k] - _sym(dXa[k] @ dSa[k] @ Sinv[k])
                else:
                    Rc[k] = sigma * mu / S[k] - X[k] - dXa[k] * dSa[k] / S[k]
            dX, dy, dS = self._direction(fac, X, S, Sinv, rp, Rd, Rc)
            ap, ad = self._steps(X, S, dX, dS)
            gamma = st.step_fraction
            ap = min(1.0, gamma * ap)
            ad = min(1.0, gamma * ad)
            if ap < 1e-10 and ad < 1e-10:
                stall += 1
                if stall >= 3:
                    break
            else:
                stall = 0
            ap = self._backtrack(X, dX, ap)
            ad = self._backtrack(S, dS, ad)
            X = [x + ap * d for x, d in zip(X, dX)]
            y = y + ad * dy
            S = [s + ad * d if self.blocks[k].kind != FREE else s for k, (s, d) in enumerate(zip(S, dS))]
            for k in self.cone_idx:
                if self.blocks[k].kind == PSD:
                    X[k] = _sym(X[k])
                    S[k] = _sym(S[k])
        if status is None:
            if best is not None:
                score, Xb, yb, Sb = best
                if score <= 1e3 * max(st.tol_feas, st.tol_gap):
                    return Xb, yb, Sb, SLOW_PROGRESS, it
            if it >= st.max_iter:
                raise IterationLimit(f"no convergence in {st.max_iter} iterations")
            raise NumericalFailure("interior-point iterations stalled")
        return X, y, S, status, it
