"""Sampling-based verification and closed-loop simulation (no SOS involved)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from cbcert import kernels
from cbcert.model import Certificate, SynthesisProblem
from cbcert.poly import Polynomial, PolynomialVector

DIVERGENCE_BOUND = 1e6
LEVEL_TOL = 1e-8
INV_TOL = 1e-6
NUDGE = 1e-4


class EmptySet(RuntimeError):
    pass


class Divergence(RuntimeError):
    pass


# regions


def region_bbox(p: Polynomial, grid: int = 400, inflate: float = 0.5, start: float = 1.0,
                limit: float = 1e3) -> np.ndarray:
    """Axis-aligned box around {p >= 0} found by grid scan, inflated by ``inflate``.

    Returns an [n, 2] array of (low, high). The scan window doubles until the
    set no longer touches its edge.
    """
    n = p.n_vars
    per_axis = grid if n <= 2 else max(9, int(round(2e5 ** (1.0 / n))))
    R = start
    while True:
        axes = [np.linspace(-R, R, per_axis)] * n
        pts = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
        inside = p.evaluate_many(pts) >= 0
        if not np.any(inside):
            if R >= limit:
                raise EmptySet("set is empty within the scan limit")
            R *= 2.0
            continue
        sel = pts[inside]
        lo, hi = sel.min(axis=0), sel.max(axis=0)
        if np.all(lo > -R * 0.999) and np.all(hi < R * 0.999):
            break
        if R >= limit:
            raise EmptySet("set is unbounded within the scan limit")
        R *= 2.0
    step = 2 * R / (per_axis - 1)
    lo, hi = lo - step, hi + step
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * (1.0 + inflate)
    return np.stack([mid - half, mid + half], axis=1)


def safe_bbox(problem: SynthesisProblem) -> np.ndarray:
    return region_bbox(problem.s)


def grid_points(bbox: np.ndarray, grid: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, grid) for lo, hi in bbox]
    return np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)


def area_proxy(B: Polynomial, bbox: np.ndarray, grid: int = 200) -> float:
    """Fraction of grid points in the box where B >= 0."""
    n = B.n_vars
    per_axis = grid if n <= 2 else max(5, int(round(4e4 ** (1.0 / n))))
    return float(np.mean(B.evaluate_many(grid_points(bbox, per_axis)) >= 0))


def sample_box(bbox: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = bbox[:, 0], bbox[:, 1]
    return lo + (hi - lo) * rng.random((count, bbox.shape[0]))


def sample_region(pred: Callable[[np.ndarray], np.ndarray], bbox: np.ndarray, count: int,
                  rng: np.random.Generator, max_rounds: int = 200) -> np.ndarray:
    """Rejection-sample ``count`` points of the box satisfying ``pred``."""
    out, have = [], 0
    for _ in range(max_rounds):
        pts = sample_box(bbox, max(4 * count, 1000), rng)
        pts = pts[pred(pts)]
        out.append(pts)
        have += len(pts)
        if have >= count:
            break
    pts = np.concatenate(out, axis=0) if out else np.zeros((0, bbox.shape[0]))
    return pts[:count]


# boundary sampling


@dataclass
class BoundarySample:
    points: np.ndarray
    center: np.ndarray
    open_rays: int  # rays that left the box without crossing B = 0

    @property
    def flagged(self) -> bool:
        return self.open_rays > 0 or len(self.points) == 0


def interior_point(B: Polynomial, bbox: np.ndarray, grid: int = 400) -> np.ndarray:
    n = B.n_vars
    per_axis = grid if n <= 2 else max(5, int(round(1.6e5 ** (1.0 / n))))
    pts = grid_points(bbox, per_axis)
    vals = B.evaluate_many(pts)
    k = int(np.argmax(vals))
    if vals[k] <= 0:
        raise EmptySet("no point with B > 0 on the grid")
    return pts[k]


def ray_directions(n: int, count: int, seed: int = 0) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    d = np.random.default_rng(seed).standard_normal((count, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def sample_boundary(B: Polynomial, bbox: np.ndarray, count: int = 720, level_tol: float = LEVEL_TOL,
                    center: Optional[np.ndarray] = None, seed: int = 0, scan: int = 400) -> BoundarySample:
    """First crossing of B = 0 along rays from an interior point, refined by bisection."""
    c = interior_point(B, bbox) if center is None else np.asarray(center, dtype=float)
    D = ray_directions(B.n_vars, count, seed)
    lo, hi = bbox[:, 0], bbox[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_hi = np.where(D > 0, (hi - c) / D, np.where(D < 0, (lo - c) / D, np.inf))
    t_exit = t_hi.min(axis=1)
    # coarse scan for the first sign change
    fr = np.linspace(0.0, 1.0, scan + 1)[1:]
    T = t_exit[:, None] * fr[None, :]
    P = c[None, None, :] + T[:, :, None] * D[:, None, :]
    V = B.evaluate_many(P.reshape(-1, B.n_vars)).reshape(len(D), scan)
    neg = V < 0
    has = neg.any(axis=1)
    first = np.argmax(neg, axis=1)
    a = np.where(first > 0, T[np.arange(len(D)), np.maximum(first - 1, 0)], 0.0)[has]
    b = T[np.arange(len(D)), first][has]
    Dh = D[has]
    for _ in range(200):
        mid = 0.5 * (a + b)
        vm = B.evaluate_many(c + mid[:, None] * Dh)
        pos = vm >= 0
        a = np.where(pos, mid, a)
        b = np.where(pos, b, mid)
        done = np.abs(vm) <= level_tol
        if np.all(done | (b - a <= 1e-16 * np.maximum(1.0, np.abs(b)))):
            break
    # pick whichever end is closer to the level set
    pa, pb = c + a[:, None] * Dh, c + b[:, None] * Dh
    va, vb = np.abs(B.evaluate_many(pa)), np.abs(B.evaluate_many(pb))
    pts = np.where((va <= vb)[:, None], pa, pb)
    return BoundarySample(pts, c, int((~has).sum()))


def boundary_starts(B: Polynomial, bbox: np.ndarray, count: int, nudge: float = NUDGE, seed: int = 0) -> np.ndarray:
    """Boundary points moved ``nudge`` along grad B, i.e. into {B > 0}."""
    bs = sample_boundary(B, bbox, count, seed=seed)
    G = B.gradient().evaluate_many(bs.points)
    norm = np.linalg.norm(G, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    return bs.points + nudge * G / norm


# certificate checks


@dataclass
class ConditionResult:
    name: str
    passed: bool
    margin: float
    witness: Optional[List[float]]
    count: int
    gating: bool = True


@dataclass
class VerificationReport:
    conditions: Dict[str, ConditionResult]
    boundary_count: int
    open_rays: int
    trajectory: Optional[dict] = None
    sos: Optional[Dict[str, dict]] = None

    @property
    def passed(self) -> bool:
        ok = all(c.passed for c in self.conditions.values() if c.gating)
        if self.trajectory is not None:
            ok = ok and bool(self.trajectory.get("passed", True))
        return ok and self.open_rays == 0 and self.boundary_count > 0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "conditions": {k: asdict(v) for k, v in self.conditions.items()},
            "boundary_count": self.boundary_count,
            "open_rays": self.open_rays,
            "trajectory": self.trajectory,
            "sos": self.sos,
        }

    def summary(self) -> str:
        lines = []
        for c in self.conditions.values():
            tag = "PASS" if c.passed else "FAIL"
            extra = "" if c.gating else " (informational)"
            lines.append(f"{tag} {c.name}: margin {c.margin:.6g} over {c.count} points{extra}")
        lines.append(f"boundary samples: {self.boundary_count}, open rays: {self.open_rays}")
        if self.trajectory is not None:
            t = self.trajectory
            lines.append(
                f"{'PASS' if t['passed'] else 'FAIL'} trajectories: {t['count']} runs, T={t['horizon']}, "
                f"min B {t['min_B']:.6g}, min s {t['min_s']:.6g}"
            )
        if self.sos is not None:
            for k, v in self.sos.items():
                lines.append(f"{'PASS' if v['sos'] else 'FAIL'} sos {k}: residual {v['residual']:.3g}")
        lines.append("VERIFIED" if self.passed else "NOT VERIFIED")
        return "\n".join(lines)


@dataclass
class VerifySettings:
    region_samples: int = 10_000
    boundary_rays: int = 720
    input_tol: float = 1e-6
    seed: int = 0


def _worst(vals: np.ndarray, pts: np.ndarray, minimize: bool):
    if len(vals) == 0:
        return (np.inf if minimize else -np.inf), None
    k = int(np.argmin(vals) if minimize else np.argmax(vals))
    return float(vals[k]), pts[k].tolist()


def verify_certificate(problem: SynthesisProblem, cert: Certificate,
                       settings: Optional[VerifySettings] = None) -> VerificationReport:
    st = settings or VerifySettings()
    rng = np.random.default_rng(st.seed)
    bbox = safe_bbox(problem)
    B = cert.B
    conds: Dict[str, ConditionResult] = {}

    unsafe = sample_region(lambda p: problem.s.evaluate_many(p) < 0, bbox, st.region_samples, rng)
    worst, wit = _worst(B.evaluate_many(unsafe), unsafe, minimize=False)
    conds["unsafe"] = ConditionResult("B < 0 outside the safe set", worst < 0, -worst, wit, len(unsafe))

    ibox = region_bbox(problem.w, inflate=0.0)
    init = sample_region(lambda p: problem.w.evaluate_many(p) >= 0, ibox, st.region_samples, rng)
    worst, wit = _worst(B.evaluate_many(init), init, minimize=True)
    conds["initial"] = ConditionResult("B >= 0 on the initial set", worst >= 0, worst, wit, len(init))

    try:
        bs = sample_boundary(B, bbox, st.boundary_rays, seed=st.seed)
    except EmptySet:
        bs = BoundarySample(np.zeros((0, problem.n)), np.zeros(problem.n), st.boundary_rays)
    pts = bs.points
    if len(pts):
        lie = problem.lie(B, cert.u).evaluate_many(pts)
        worst, wit = _worst(lie, pts, minimize=True)
        conds["boundary"] = ConditionResult("Lie derivative > 0 on B = 0", worst > 0, worst, wit, len(pts))
        U = cert.u.evaluate_many(pts)
        marg = problem.input_margin(U).min(axis=1)
        worst, wit = _worst(marg, pts, minimize=True)
        conds["inputs"] = ConditionResult(
            "A u + b >= 0 on B = 0", worst >= -st.input_tol, worst, wit, len(pts)
        )
    else:
        conds["boundary"] = ConditionResult("Lie derivative > 0 on B = 0", False, -np.inf, None, 0)
        conds["inputs"] = ConditionResult("A u + b >= 0 on B = 0", False, -np.inf, None, 0)

    # admissibility inside {B >= 0} is reported but does not gate the verdict
    inner = sample_region(lambda p: B.evaluate_many(p) >= 0, bbox, st.region_samples, rng)
    if len(inner):
        marg = problem.input_margin(cert.u.evaluate_many(inner)).min(axis=1)
        worst, wit = _worst(marg, inner, minimize=True)
    else:
        worst, wit = np.inf, None
    conds["interior_inputs"] = ConditionResult(
        "A u + b >= 0 inside B >= 0", worst >= -st.input_tol, worst, wit, len(inner), gating=False
    )
    return VerificationReport(conds, len(pts), bs.open_rays)


# simulation


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # [K, n]
    inputs: np.ndarray  # [K, m]
    diverged: bool = False


Controller = Union[PolynomialVector, Sequence[Polynomial], Callable[[np.ndarray], np.ndarray]]


def _field_table(problem: SynthesisProblem):
    polys = list(problem.f) + [q for row in problem.g for q in row]
    return kernels.pack(polys, problem.n)


def simulate(problem: SynthesisProblem, controller: Controller, x0, T: float = 10.0, dt: float = 1e-3,
             bound: float = DIVERGENCE_BOUND) -> List[Trajectory]:
    """RK4 integration of x' = f(x) + g(x) u(x) from each row of x0."""
    if dt <= 0 or T < dt:
        raise ValueError("need dt > 0 and T >= dt")
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    steps = int(round(T / dt))
    times = dt * np.arange(steps + 1)
    if callable(controller) and not isinstance(controller, (PolynomialVector, list, tuple)):
        return [_simulate_callable(problem, controller, x, dt, steps, times, bound) for x in x0]
    u = PolynomialVector(list(controller), problem.n) if len(controller) else PolynomialVector([], problem.n)
    F = problem.closed_loop(list(u)) if len(u) else problem.f
    exps, coefs, offs = kernels.pack(list(F), problem.n)
    states, n_valid = kernels.rk4_field(exps, coefs, offs, x0, dt, steps, bound)
    out = []
    for k in range(len(x0)):
        nv = int(n_valid[k])
        S = states[k, :nv]
        U = u.evaluate_many(S) if len(u) else np.zeros((nv, 0))
        out.append(Trajectory(times[:nv], S, U, diverged=nv < steps + 1))
    return out


def _simulate_callable(problem, ctrl, x, dt, steps, times, bound):
    exps, coefs, offs = _field_table(problem)
    n, m = problem.n, problem.m

    def field(z):
        vals = kernels.eval_table(exps, coefs, offs, z[None, :])[0]
        f, G = vals[:n], vals[n:].reshape(n, m)
        uz = np.asarray(ctrl(z), dtype=float).reshape(m)
        return f + G @ uz, uz

    S = np.full((steps + 1, n), np.nan)
    U = np.full((steps + 1, m), np.nan)
    S[0] = x
    diverged = False
    k_last = steps
    for k in range(steps):
        k1, U[k] = field(S[k])
        k2, _ = field(S[k] + 0.5 * dt * k1)
        k3, _ = field(S[k] + 0.5 * dt * k2)
        k4, _ = field(S[k] + dt * k3)
        z = S[k] + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > bound:
            diverged, k_last = True, k
            break
        S[k + 1] = z
    if not diverged:
        _, U[steps] = field(S[steps])
    nv = k_last + 1
    return Trajectory(times[:nv], S[:nv], U[:nv], diverged)


@dataclass
class InvarianceResult:
    passed: bool
    min_B: float
    min_s: float
    count: int
    worst_trajectory: int = -1
    diverged: int = 0

    def to_dict(self, horizon: float) -> dict:
        d = asdict(self)
        d["horizon"] = horizon
        return d


def invariance_check(problem: SynthesisProblem, cert: Certificate, trajectories: Sequence[Trajectory],
                     inv_tol: float = INV_TOL) -> InvarianceResult:
    min_B, min_s, worst, div = np.inf, np.inf, -1, 0
    for k, tr in enumerate(trajectories):
        if tr.diverged:
            div += 1
        if len(tr.states) == 0:
            continue
        b = float(np.min(cert.B.evaluate_many(tr.states)))
        s = float(np.min(problem.s.evaluate_many(tr.states)))
        if tr.diverged:
            b, s = min(b, -np.inf), min(s, -np.inf)
        if b < min_B:
            min_B, worst = b, k
        min_s = min(min_s, s)
    passed = min_B >= -inv_tol and min_s >= 0
    return InvarianceResult(bool(passed), float(min_B), float(min_s), len(trajectories), worst, div)
