"""Control barrier certificate synthesis by alternating SOS programs.

Each subproblem fixes one factor of every bilinear product so the remaining
constraints are affine in the unknowns:

* init_controller: a rational input num / sigma_cont that is admissible everywhere
* init_cbc: a first barrier for that input, with the derivative condition localized to the safe set
* update_controller: input and multipliers for a fixed barrier
* update_cbc: a new barrier for fixed input and multipliers, containing the previous one
* update_multipliers: multipliers for the fixed pair

synthesize_cbf replaces the multiplier term lam1 * B by (alpha - sigma_cbf) * B with
alpha maximized.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from cbcert import sdp, sos, verify
from cbcert.model import Certificate, SynthesisProblem, certificate_conditions
from cbcert.poly import Polynomial, PolynomialVector, monomial_basis
from cbcert.sos import NotSos, PolyExpr, SosProgram, solve_program

log = logging.getLogger(__name__)

REMARK_HINT = (
    "try larger polynomial degrees (--degrees B=4, u=2, ...) or another "
    "initialization objective (--seed N)"
)


class SynthesisError(RuntimeError):
    pass


class Infeasible(SynthesisError):
    pass


class InitializationFailed(SynthesisError):
    pass


@dataclass
class SynthOptions:
    max_iter: int = 20
    growth_tol: float = 0.01
    area_grid: int = 200
    init_retries: int = 3
    boundary_samples: int = 64
    settings: Optional[sdp.SdpSettings] = None


@dataclass
class RationalController:
    """u(x) = num(x) / den(x) with den >= eps3 > 0."""

    num: PolynomialVector
    den: Polynomial

    def evaluate_many(self, pts) -> np.ndarray:
        return self.num.evaluate_many(pts) / self.den.evaluate_many(pts)[:, None]


@dataclass
class IterationRecord:
    k: int
    B: Polynomial
    u: Optional[PolynomialVector]
    lam1: Optional[Polynomial]
    lam2: List[Polynomial]
    area: float
    statuses: Dict[str, str]
    alpha: Optional[float] = None


@dataclass
class IterationTrace:
    records: List[IterationRecord] = field(default_factory=list)
    stop_reason: str = ""

    def areas(self) -> List[float]:
        return [r.area for r in self.records]

    def rows(self) -> List[List[str]]:
        head = ["k", "area", "alpha", "statuses", "B", "u", "lam1", "lam2"]
        out = [head]
        for r in self.records:
            out.append([
                str(r.k), repr(r.area), "" if r.alpha is None else repr(r.alpha),
                ";".join(f"{k}={v}" for k, v in r.statuses.items()),
                r.B.to_string(), "" if r.u is None else ";".join(p.to_string() for p in r.u),
                "" if r.lam1 is None else r.lam1.to_string(), ";".join(p.to_string() for p in r.lam2),
            ])
        return out


# expression helpers


def _grad_dot(B, F: Sequence[Polynomial]):
    """sum_i dB/dx_i * F_i for a Polynomial or PolyExpr B and polynomial F."""
    out = None
    for i, Fi in enumerate(F):
        term = B.diff(i) * Fi
        out = term if out is None else out + term
    return out


def _lie_fixed_B(problem: SynthesisProblem, B: Polynomial, u: Sequence[PolyExpr]) -> PolyExpr:
    """grad B . (f + g u) with u unknown."""
    expr = PolyExpr.from_poly(_grad_dot(B, problem.f))
    grad = [B.diff(i) for i in range(problem.n)]
    for j in range(problem.m):
        col = Polynomial.zero(problem.n)
        for i in range(problem.n):
            col = col + grad[i] * problem.g[i][j]
        expr = expr + u[j] * col
    return expr


def _admissibility(problem: SynthesisProblem, u) -> list:
    rows = []
    for r in range(problem.h):
        e = problem.b[r]
        for j in range(problem.m):
            if problem.A[r, j] != 0.0:
                e = u[j] * float(problem.A[r, j]) + e
        rows.append(e)
    return rows


def _u_basis(problem):
    return monomial_basis(problem.n, problem.degrees.u)


def _even_ceil(d: int) -> int:
    return max(0, d + (d % 2))


def _status(res) -> str:
    return res.status


# initialization


def init_controller(problem: SynthesisProblem, options: Optional[SynthOptions] = None) -> RationalController:
    """An input num / sigma_cont with A u + b >= 0 for every x.

    Admissibility is certified through A num + b sigma_cont in SOS and
    sigma_cont - eps3 in SOS. Among admissible inputs the first attempt picks
    the one pushing hardest into the initial set along its boundary; retries
    use seeded random linear objectives.
    """
    opt = options or SynthOptions()
    n, deg = problem.n, problem.degrees
    ibox = verify.region_bbox(problem.w, inflate=0.2)
    ring = verify.sample_boundary(problem.w, ibox, opt.boundary_samples).points
    rng = np.random.default_rng(problem.seed)
    for attempt in range(opt.init_retries + 1):
        prog = SosProgram(n)
        sc = prog.sos_poly(deg.cont, "sigma_cont")
        num = [prog.free_poly(_u_basis(problem), f"num{j + 1}") for j in range(problem.m)]
        prog.add_sos(sc - problem.epsilons.eps3, "cont")
        for r, e in enumerate(_admissibility(problem, num)):
            # A num + b sigma_cont: replace the constant b_r by b_r * sigma_cont
            prog.add_sos(e - problem.b[r] + sc * float(problem.b[r]), f"adm{r + 1}")
        scale = None
        if attempt == 0:
            t = prog.scalar("t")
            gw = [problem.w.diff(i) for i in range(n)]
            inward = sc * _grad_dot(problem.w, problem.f)
            for j in range(problem.m):
                col = Polynomial.zero(n)
                for i in range(n):
                    col = col + gw[i] * problem.g[i][j]
                inward = inward + num[j] * col
            for x in ring:
                prog.add_linear(inward.at(x) - t, ">=")
            avg = None
            for x in ring:
                avg = sc.at(x) if avg is None else avg + sc.at(x)
            prog.add_linear(avg * (1.0 / len(ring)) - 1.0, "==")
            prog.set_objective(t, "max")
            scale = t
        else:
            coef = None
            for p in num:
                for v in p.var_ids:
                    c = float(rng.standard_normal())
                    term = PolyExpr({(0,) * n: {v: c}}, n)
                    coef = term if coef is None else coef + term
            prog.add_linear(sc.at(np.zeros(n)) - 1.0, "==")
            prog.set_objective(coef, "max")
            scale = coef
        res = solve_program(prog, opt.settings)
        if not res.ok:
            log.info("init_controller attempt %d: %s", attempt, res.status)
            continue
        # back off from the optimum and re-center as a margin problem
        best = res.objective
        prog.set_objective(None)
        prog.add_linear(scale - (best - 0.1 * abs(best) - 1e-6), ">=")
        res2 = solve_program(prog, opt.settings)
        if res2.ok:
            res = res2
        ctrl = RationalController(PolynomialVector([res[p] for p in num], n), res[sc])
        if _admissible_everywhere(problem, ctrl):
            return ctrl
        log.info("init_controller attempt %d: sampled admissibility failed", attempt)
    raise InitializationFailed("no globally admissible initial controller; " + REMARK_HINT)


def _admissible_everywhere(problem, ctrl, count: int = 10_000, tol: float = 1e-8) -> bool:
    rng = np.random.default_rng(problem.seed)
    pts = rng.uniform(-3.0, 3.0, size=(count, problem.n))
    return bool(np.all(problem.input_margin(ctrl.evaluate_many(pts)) >= -tol))


@dataclass
class InitResult:
    B: Polynomial
    sigma_safe: Polynomial
    sigma_init: Polynomial
    shell: float
    status: str


SHELL_FRACTIONS = (1.0, 0.5, 0.25, 0.1)


def init_cbc(problem: SynthesisProblem, ctrl: RationalController,
             options: Optional[SynthOptions] = None, shells: Optional[Sequence[float]] = None) -> InitResult:
    """First barrier for the rational input.

    The derivative condition is imposed on the shell {-r <= w <= 0} around the
    initial set, and B is forced negative outside it, so {B = 0} lies in the
    shell. Shell widths r are tried from wide to narrow, as fractions of max w.
    """
    opt = options or SynthOptions()
    n, deg, eps = problem.n, problem.degrees, problem.epsilons
    ibox = verify.region_bbox(problem.w, inflate=0.0)
    w_max = float(np.max(problem.w.evaluate_many(verify.grid_points(ibox, 101 if n <= 2 else 9))))
    # sigma_cont * (f + g u0) = sigma_cont f + g num is polynomial
    F = []
    for i in range(n):
        Fi = ctrl.den * problem.f[i]
        for j in range(problem.m):
            Fi = Fi + problem.g[i][j] * ctrl.num[j]
        F.append(Fi)
    last = "not run"
    for frac in (shells or SHELL_FRACTIONS):
        r = frac * w_max
        outer = problem.w + r
        prog = SosProgram(n)
        B = prog.free_poly(monomial_basis(n, deg.B), "B")
        ss = prog.sos_poly(deg.safe, "sigma_safe")
        si = prog.sos_poly(deg.init, "sigma_init")
        so = prog.sos_poly(deg.safe, "sigma_shell")
        prog.add_sos(-B + ss * problem.s - eps.eps1, "safe")
        prog.add_sos(B - si * problem.w, "init")
        prog.add_sos(-B + so * outer - eps.eps1, "shell")
        lie = _grad_dot(B, F)
        loc = deg.loc if deg.loc is not None else _even_ceil(max(lie.degree, deg.B) - problem.w.degree)
        sa = prog.sos_poly(loc, "sigma_out")
        sb = prog.sos_poly(loc, "sigma_in")
        prog.add_sos(lie - eps.eps2 - sa * outer + sb * problem.w, "lie")
        res = solve_program(prog, opt.settings)
        last = res.status
        if res.ok:
            return InitResult(res[B], res[ss], res[si], r, res.status)
        log.info("init_cbc shell %.3g: %s", r, res.status)
    raise InitializationFailed(f"initial barrier program is {last}; " + REMARK_HINT)


# alternation steps


@dataclass
class ControllerStep:
    u: PolynomialVector
    lam1: Polynomial
    lam2: List[Polynomial]
    status: str


def _multiplier_program(problem, B_prev, u_fixed=None):
    n, deg, eps = problem.n, problem.degrees, problem.epsilons
    prog = SosProgram(n)
    if u_fixed is None:
        u = [prog.free_poly(_u_basis(problem), f"u{j + 1}") for j in range(problem.m)]
        lie = _lie_fixed_B(problem, B_prev, u)
    else:
        u = list(u_fixed)
        lie = PolyExpr.from_poly(problem.lie(B_prev, u))
    lam1 = prog.free_poly(monomial_basis(n, deg.lam1), "lam1")
    lam2 = [prog.free_poly(monomial_basis(n, deg.lam2), f"lam2_{r + 1}") for r in range(problem.h)]
    prog.add_sos(lie + lam1 * B_prev - eps.eps2, "lie")
    for r, e in enumerate(_admissibility(problem, u)):
        prog.add_sos(lam2[r] * (-B_prev) + e, f"adm{r + 1}")
    return prog, u, lam1, lam2


def update_controller(problem: SynthesisProblem, B_prev: Polynomial,
                      options: Optional[SynthOptions] = None) -> ControllerStep:
    """Polynomial input and multipliers for the fixed barrier B_prev."""
    opt = options or SynthOptions()
    prog, u, lam1, lam2 = _multiplier_program(problem, B_prev)
    res = solve_program(prog, opt.settings)
    if not res.ok:
        raise Infeasible(f"controller update is {res.status}")
    return ControllerStep(PolynomialVector([res[p] for p in u], problem.n), res[lam1],
                          [res[p] for p in lam2], res.status)


def update_multipliers(problem: SynthesisProblem, B: Polynomial, u: Sequence[Polynomial],
                       options: Optional[SynthOptions] = None) -> ControllerStep:
    """Multipliers certifying the fixed pair (B, u)."""
    opt = options or SynthOptions()
    prog, _, lam1, lam2 = _multiplier_program(problem, B, u_fixed=u)
    res = solve_program(prog, opt.settings)
    if not res.ok:
        raise Infeasible(f"multiplier update is {res.status}")
    return ControllerStep(PolynomialVector(list(u), problem.n), res[lam1], [res[p] for p in lam2], res.status)


@dataclass
class BarrierStep:
    B: Polynomial
    sigma_safe: Polynomial
    sigma_init: Polynomial
    sigma_enl: Polynomial
    status: str


def update_cbc(problem: SynthesisProblem, u: Sequence[Polynomial], lam1: Polynomial,
               lam2: Sequence[Polynomial], B_prev: Polynomial,
               options: Optional[SynthOptions] = None, lam1_term: Optional[Polynomial] = None) -> BarrierStep:
    """New barrier for fixed input and multipliers with {B_prev >= 0} inside {B >= 0}."""
    opt = options or SynthOptions()
    n, deg, eps = problem.n, problem.degrees, problem.epsilons
    prog = SosProgram(n)
    B = prog.free_poly(monomial_basis(n, deg.B), "B")
    ss = prog.sos_poly(deg.safe, "sigma_safe")
    si = prog.sos_poly(deg.init, "sigma_init")
    se = prog.sos_poly(deg.enl, "sigma_enl")
    prog.add_sos(-B + ss * problem.s - eps.eps1, "safe")
    prog.add_sos(B - si * problem.w, "init")
    F = problem.closed_loop(list(u))
    prog.add_sos(_grad_dot(B, F) + B * lam1 - eps.eps2, "lie")
    for r, e in enumerate(_admissibility(problem, list(u))):
        prog.add_sos(B * (-lam2[r]) + e, f"adm{r + 1}")
    prog.add_sos(B - se * B_prev, "enl")
    res = solve_program(prog, opt.settings)
    if not res.ok:
        raise Infeasible(f"barrier update is {res.status}")
    return BarrierStep(res[B], res[ss], res[si], res[se], res.status)


# main loops


def _alternate(problem, B_start, sigma_safe, sigma_init, opt, trace, bbox, k0=1):
    """Steps 2-4 repeated; returns the last certified Certificate or None."""
    B_prev, cert = B_start, None
    area_prev = verify.area_proxy(B_prev, bbox, opt.area_grid)
    ss_prev, si_prev = sigma_safe, sigma_init
    for k in range(k0, k0 + opt.max_iter):
        statuses = {}
        try:
            cs = update_controller(problem, B_prev, opt)
        except Infeasible as exc:
            trace.stop_reason = f"iteration {k}: {exc}"
            break
        statuses["controller"] = cs.status
        # (B_prev, u_k) is already certified by the controller step
        cert = Certificate(B_prev, cs.u, ss_prev, si_prev, cs.lam1, cs.lam2, iterations=k)
        try:
            bs = update_cbc(problem, cs.u, cs.lam1, cs.lam2, B_prev, opt)
        except Infeasible as exc:
            trace.stop_reason = f"iteration {k}: {exc}"
            break
        statuses["barrier"] = bs.status
        try:
            ms = update_multipliers(problem, bs.B, cs.u, opt)
        except Infeasible as exc:
            trace.stop_reason = f"iteration {k}: {exc}"
            break
        statuses["multipliers"] = ms.status
        cert = Certificate(bs.B, cs.u, bs.sigma_safe, bs.sigma_init, ms.lam1, ms.lam2, bs.sigma_enl, iterations=k)
        area = verify.area_proxy(bs.B, bbox, opt.area_grid)
        trace.records.append(IterationRecord(k, bs.B, cs.u, ms.lam1, ms.lam2, area, statuses))
        log.info("iteration %d: area %.4f", k, area)
        growth = (area - area_prev) / max(area_prev, 1e-12)
        B_prev, ss_prev, si_prev, area_prev = bs.B, bs.sigma_safe, bs.sigma_init, area
        if growth < opt.growth_tol:
            trace.stop_reason = f"iteration {k}: area growth {growth:.4g} below {opt.growth_tol}"
            break
    else:
        trace.stop_reason = f"reached {opt.max_iter} iterations"
    return cert


def synthesize(problem: SynthesisProblem, options: Optional[SynthOptions] = None):
    """Run the full alternation; returns (Certificate, IterationTrace)."""
    opt = options or SynthOptions()
    bbox = verify.safe_bbox(problem)
    trace = IterationTrace()
    ctrl = init_controller(problem, opt)
    init = init_cbc(problem, ctrl, opt)
    trace.records.append(IterationRecord(0, init.B, None, None, [], verify.area_proxy(init.B, bbox, opt.area_grid),
                                         {"init": init.status}))
    cert = _alternate(problem, init.B, init.sigma_safe, init.sigma_init, opt, trace, bbox)
    if cert is None:
        raise InitializationFailed(f"no polynomial controller for the initial barrier ({trace.stop_reason}); "
                                   + REMARK_HINT)
    cert.witnesses = certify(problem, cert)
    return cert, trace


def certify(problem: SynthesisProblem, cert: Certificate) -> Dict[str, object]:
    """check_sos on every condition with the certificate's multipliers substituted."""
    return {name: sos.check_sos(p) for name, p in certificate_conditions(problem, cert).items()}


def recover_multipliers(problem: SynthesisProblem, cert: Certificate,
                        options: Optional[SynthOptions] = None) -> Certificate:
    """Fill in missing multipliers for a fixed (B, u), e.g. a certificate transcribed without them.

    Raises Infeasible when no multipliers of the configured degrees exist.
    """
    opt = options or SynthOptions()
    n, deg, eps = problem.n, problem.degrees, problem.epsilons
    out = replace(cert)
    if cert.sigma_safe is None or cert.sigma_init is None:
        prog = SosProgram(n)
        ss = prog.sos_poly(deg.safe, "sigma_safe")
        si = prog.sos_poly(deg.init, "sigma_init")
        prog.add_sos(ss * problem.s - cert.B - eps.eps1, "safe")
        prog.add_sos(si * (-problem.w) + cert.B, "init")
        res = solve_program(prog, opt.settings)
        if not res.ok:
            raise Infeasible(f"set-containment multipliers are {res.status}")
        out.sigma_safe = cert.sigma_safe if cert.sigma_safe is not None else res[ss]
        out.sigma_init = cert.sigma_init if cert.sigma_init is not None else res[si]
    if cert.lam1 is None or not cert.lam2:
        ms = update_multipliers(problem, cert.B, list(cert.u), opt)
        out.lam1 = cert.lam1 if cert.lam1 is not None else ms.lam1
        out.lam2 = list(cert.lam2) if cert.lam2 else ms.lam2
    return out


def certified(cert: Certificate) -> bool:
    return bool(cert.witnesses) and all(bool(w) for w in cert.witnesses.values())


# CBF mode


@dataclass
class CbfStep:
    u: PolynomialVector
    sigma_cbf: Polynomial
    alpha: float
    lam2: List[Polynomial]
    status: str


def _cbf_program(problem, B, alpha_floor=None):
    n, deg, eps = problem.n, problem.degrees, problem.epsilons
    prog = SosProgram(n)
    u = [prog.free_poly(_u_basis(problem), f"u{j + 1}") for j in range(problem.m)]
    # no constant monomial: a constant in sigma_cbf would trade one-for-one with alpha
    sc = prog.sos_poly(deg.cbf, "sigma_cbf", min_half_degree=1)
    alpha = prog.scalar("alpha", nonneg=True)
    lam2 = [prog.free_poly(monomial_basis(n, deg.lam2), f"lam2_{r + 1}") for r in range(problem.h)]
    prog.add_sos(_lie_fixed_B(problem, B, u) - sc * B + alpha * B - eps.eps2, "lie")
    for r, e in enumerate(_admissibility(problem, u)):
        prog.add_sos(lam2[r] * (-B) + e, f"adm{r + 1}")
    return prog, u, sc, alpha, lam2


def cbf_controller_step(problem: SynthesisProblem, B: Polynomial, options: Optional[SynthOptions] = None,
                        alpha_max: Optional[float] = None) -> CbfStep:
    """Fixed B: maximize alpha over inputs, sigma_cbf and lam2."""
    opt = options or SynthOptions()
    prog, u, sc, alpha, lam2 = _cbf_program(problem, B)
    if alpha_max is not None:
        prog.add_linear(-alpha + alpha_max, ">=")
    prog.set_objective(alpha, "max")
    res = solve_program(prog, opt.settings)
    if not res.ok:
        raise Infeasible(f"CBF controller step is {res.status}")
    best = res.objective
    prog.set_objective(None)
    prog.add_linear(alpha - (best - 0.01 * abs(best)), ">=")
    res2 = solve_program(prog, opt.settings)
    if res2.ok:
        res = res2
    a = float(res[alpha].coeff((0,) * problem.n))
    return CbfStep(PolynomialVector([res[p] for p in u], problem.n), res[sc], a,
                   [res[p] for p in lam2], res.status)


def synthesize_cbf(problem: SynthesisProblem, options: Optional[SynthOptions] = None):
    """CBF-mode synthesis with a maximized linear class-K rate alpha."""
    opt = options or SynthOptions()
    bbox = verify.safe_bbox(problem)
    trace = IterationTrace()
    ctrl = init_controller(problem, opt)
    init = init_cbc(problem, ctrl, opt)
    B, ss, si = init.B, init.sigma_safe, init.sigma_init
    area_prev = verify.area_proxy(B, bbox, opt.area_grid)
    trace.records.append(IterationRecord(0, B, None, None, [], area_prev, {"init": init.status}))
    try:
        step = cbf_controller_step(problem, B, opt)
    except Infeasible as exc:
        raise InitializationFailed(f"{exc}; " + REMARK_HINT) from exc
    cert = _cbf_cert(B, step, ss, si, 0)
    for k in range(1, opt.max_iter + 1):
        lam_term = Polynomial.constant(step.alpha, problem.n) - step.sigma_cbf
        try:
            bs = update_cbc(problem, step.u, lam_term, step.lam2, B, opt)
            new_step = cbf_controller_step(problem, bs.B, opt)
        except Infeasible as exc:
            trace.stop_reason = f"iteration {k}: {exc}"
            break
        area = verify.area_proxy(bs.B, bbox, opt.area_grid)
        trace.records.append(IterationRecord(k, bs.B, new_step.u, None, new_step.lam2, area,
                                             {"barrier": bs.status, "controller": new_step.status},
                                             alpha=new_step.alpha))
        B, ss, si, step = bs.B, bs.sigma_safe, bs.sigma_init, new_step
        cert = _cbf_cert(B, step, ss, si, k)
        growth = (area - area_prev) / max(area_prev, 1e-12)
        area_prev = area
        if growth < opt.growth_tol:
            trace.stop_reason = f"iteration {k}: area growth {growth:.4g} below {opt.growth_tol}"
            break
    else:
        trace.stop_reason = f"reached {opt.max_iter} iterations"
    cert.witnesses = certify(problem, cert)
    return cert, trace


def _cbf_cert(B, step, ss, si, k):
    lam1 = Polynomial.constant(step.alpha, B.n_vars) - step.sigma_cbf
    return Certificate(B, step.u, ss, si, lam1, step.lam2, mode="CBF", alpha=step.alpha,
                       sigma_cbf=step.sigma_cbf, iterations=k)


# set inclusion


@dataclass
class InclusionWitness:
    sigma: Polynomial
    witness: sos.SosCertificateWitness

    def __bool__(self):
        return True


@dataclass
class Unknown:
    reason: str

    def __bool__(self):
        return False


def check_inclusion(B_outer: Polynomial, B_inner: Polynomial, degree: int = 2,
                    settings: Optional[sdp.SdpSettings] = None) -> Union[InclusionWitness, Unknown]:
    """Search sigma in SOS with B_outer - sigma * B_inner in SOS, proving {B_inner >= 0} in {B_outer >= 0}."""
    if B_outer.n_vars != B_inner.n_vars:
        raise ValueError("variable count mismatch")
    prog = SosProgram(B_outer.n_vars)
    sg = prog.sos_poly(degree, "sigma")
    prog.add_sos(sg * (-B_inner) + B_outer, "incl")
    res = solve_program(prog, settings)
    if not res.ok:
        return Unknown(f"no multiplier of degree {degree} found ({res.status})")
    return InclusionWitness(res[sg], res.witnesses[0])


@dataclass
class CompareResult:
    cbc: Certificate
    cbf: Certificate
    inclusion: Union[InclusionWitness, Unknown]
    reseeded: bool
    traces: Dict[str, IterationTrace]


def compare(problem: SynthesisProblem, options: Optional[SynthOptions] = None) -> CompareResult:
    """Synthesize in both modes and certify {B_cbf >= 0} inside {B_cbc >= 0}.

    When the independent runs are not nested, the CBC alternation is restarted
    from the CBF barrier; its enlargement constraint then keeps the CBF set inside.
    """
    opt = options or SynthOptions()
    cbc_cert, cbc_trace = synthesize(problem, opt)
    cbf_cert, cbf_trace = synthesize_cbf(problem, opt)
    inc = check_inclusion(cbc_cert.B, cbf_cert.B, problem.degrees.incl, opt.settings)
    reseeded = False
    if not inc:
        trace = IterationTrace()
        bbox = verify.safe_bbox(problem)
        trace.records.append(IterationRecord(0, cbf_cert.B, None, None, [],
                                             verify.area_proxy(cbf_cert.B, bbox, opt.area_grid), {"seed": "cbf"}))
        seeded = _alternate(problem, cbf_cert.B, cbf_cert.sigma_safe, cbf_cert.sigma_init, opt, trace, bbox)
        if seeded is not None:
            seeded.witnesses = certify(problem, seeded)
            inc2 = check_inclusion(seeded.B, cbf_cert.B, problem.degrees.incl, opt.settings)
            if inc2 and certified(seeded):
                cbc_cert, cbc_trace, inc, reseeded = seeded, trace, inc2, True
    return CompareResult(cbc_cert, cbf_cert, inc, reseeded, {"cbc": cbc_trace, "cbf": cbf_trace})
