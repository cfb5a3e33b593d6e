"""Acceptance criteria 1-7; each test prints one PASS/FAIL line."""

import time

import numpy as np
import pytest

from cbcert import cbc, cli, sdp, sos, verify
from cbcert.model import Certificate, certificate_conditions
from cbcert.poly import Polynomial, monomial_basis
from cbcert.qpfilter import FilterConfig, filter_input
from cbcert.sdp import PSD, Block, SdpProblem
from conftest import P, PV


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {k}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def test_criterion_1_printed_certificate(report, capsys):
    t0 = time.perf_counter()
    code = cli.main(["verify", "lti_unstable.json", "lti_paper_certificate.json"])
    elapsed = time.perf_counter() - t0
    out = capsys.readouterr().out
    margins = " ".join(line.split(":")[0] for line in out.splitlines() if line.startswith("PASS"))
    report(1, code == cli.EXIT_OK and elapsed < 5.0,
           f"printed certificate verify exit {code} in {elapsed:.2f} s (limit 5 s); {margins.count('PASS')} checks passed")


def test_criterion_2_lti_synthesis(report, lti):
    t0 = time.perf_counter()
    cert, trace = cbc.synthesize(lti)
    elapsed = time.perf_counter() - t0
    rep = verify.verify_certificate(lti, cert)
    ok = rep.passed and cbc.certified(cert) and elapsed < 60
    report(2, ok, f"LTI synthesis verified={rep.passed}, sos={cbc.certified(cert)}, "
                  f"{len(trace.records) - 1} iterations in {elapsed:.1f} s (limit 60 s)")


def test_criterion_3_nonlinear_synthesis(report, nonlinear):
    t0 = time.perf_counter()
    cert, trace = cbc.synthesize(nonlinear)
    elapsed = time.perf_counter() - t0
    rep = verify.verify_certificate(nonlinear, cert)
    rng = np.random.default_rng(3)
    init = verify.sample_region(lambda p: nonlinear.w.evaluate_many(p) >= 0,
                                verify.region_bbox(nonlinear.w, inflate=0.0), 10_000, rng)
    contains_I = cert.B.evaluate_many(init).min() >= 0
    box = np.array([[-3.0, 3.0], [-3.0, 3.0]])
    inner = verify.sample_region(lambda p: cert.B.evaluate_many(p) >= 0, box, 10_000, rng)
    radius = float(np.linalg.norm(inner, axis=1).max())
    ok = rep.passed and cbc.certified(cert) and contains_I and radius < np.sqrt(3) and elapsed < 300
    report(3, ok, f"nonlinear synthesis verified={rep.passed}, contains I={contains_I}, "
                  f"max radius of {{B >= 0}} {radius:.4f} < {np.sqrt(3):.4f}, {elapsed:.1f} s (limit 300 s)")


def test_criterion_4_inclusion(report, comparison):
    _, res = comparison
    sigma = res.inclusion.sigma if res.inclusion else None
    report(4, bool(res.inclusion), f"CBF set inside CBC set, multiplier {sigma}, reseeded={res.reseeded}")


def test_criterion_5_trajectories(report, lti, lti_synth, nonlinear, nonlinear_synth):
    lines, ok = [], True
    for prob, (cert, _) in [(lti, lti_synth), (nonlinear, nonlinear_synth)]:
        x0 = verify.boundary_starts(cert.B, verify.safe_bbox(prob), 100, nudge=1e-4)
        trs = verify.simulate(prob, cert.u, x0, T=10.0, dt=1e-3)
        inv = verify.invariance_check(prob, cert, trs, inv_tol=1e-4)
        ok &= inv.passed and len(trs) == 100
        lines.append(f"{prob.name}: min B {inv.min_B:.3g}, min s {inv.min_s:.3g}")
    cert = lti_synth[0]
    x0 = verify.boundary_starts(cert.B, verify.safe_bbox(lti), 100, nudge=1e-4)
    zero = verify.invariance_check(lti, cert, verify.simulate(lti, PV(["0", "0"]), x0, T=10.0, dt=1e-3))
    ok &= zero.min_s < 0
    lines.append(f"zero controller exits S: {zero.min_s < 0}")
    report(5, ok, "; ".join(lines))


def test_criterion_6_solver_suite(report):
    trace = sdp.solve(SdpProblem([Block(PSD, 2)], [np.eye(2)[None]], [1.0], [np.diag([1.0, 2.0])]))
    trace_ok = trace.optimal and abs(trace.primal_objective - 1.0) <= 1e-6
    infeas = sdp.solve(SdpProblem([Block(PSD, 1)], [np.ones((1, 1, 1))], [-1.0], sense="feasibility"))
    rng = np.random.default_rng(6)
    gaps = []
    for _ in range(50):
        n, m = int(rng.integers(2, 6)), int(rng.integers(1, 6))
        G = rng.normal(size=(n, n))
        A = rng.normal(size=(m, n, n))
        A = A + A.transpose(0, 2, 1)
        b = np.einsum("kij,ij->k", A, G @ G.T + 0.5 * np.eye(n))
        H = rng.normal(size=(n, n))
        sol = sdp.solve(SdpProblem([Block(PSD, n)], [A], b, [H @ H.T + 0.1 * np.eye(n)]))
        gaps.append(sdp.residuals(SdpProblem([Block(PSD, n)], [A], b, [H @ H.T + 0.1 * np.eye(n)]), sol)[2]
                    if sol.optimal else np.inf)
    accepted = 0
    for k in range(50):
        basis = monomial_basis(2, 1 + k % 2)
        p = Polynomial.zero(2)
        for _ in range(3):
            q = Polynomial.from_basis(basis, rng.normal(size=len(basis)), 2)
            p = p + q * q
        accepted += bool(sos.check_sos(p))
    motzkin = sos.check_sos(P("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1"))
    minus_one = sos.check_sos(P("-1"))
    ok = trace_ok and infeas.status == sdp.INFEASIBLE and max(gaps) <= 1e-7 and accepted == 50 \
        and not motzkin and not minus_one
    report(6, ok, f"trace value {trace.primal_objective:.9f}, 1x1 infeasible: {infeas.status}, "
                  f"max gap {max(gaps):.2e} over 50, SOS accepted {accepted}/50, "
                  f"Motzkin rejected {not motzkin}, -1 rejected {not minus_one}")


def test_criterion_7_properties(report, lti, lti_synth, nonlinear, nonlinear_synth):
    rng = np.random.default_rng(7)
    basis = monomial_basis(2, 4)
    grad_err, hom_err = 0.0, 0.0
    for _ in range(200):
        p = Polynomial.from_basis(basis, rng.uniform(-5, 5, len(basis)), 2)
        q = Polynomial.from_basis(basis, rng.uniform(-5, 5, len(basis)), 2)
        x = rng.uniform(-2, 2, 2)
        g = p.gradient().evaluate(x)
        h = 1e-5
        fd = np.array([(p.evaluate(x + h * e) - p.evaluate(x - h * e)) / (2 * h) for e in np.eye(2)])
        grad_err = max(grad_err, float(np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(g)))))
        ref = p.evaluate(x) * q.evaluate(x)
        hom_err = max(hom_err, abs((p * q).evaluate(x) - ref) / max(1.0, abs(ref)))
    # SOS round trip on the synthesized certificates
    rt = max(w.residual for c in (lti_synth[0], nonlinear_synth[0]) for w in c.witnesses.values())
    # monotone enlargement across iterations
    mono = np.inf
    for prob, (_, trace) in [(lti, lti_synth), (nonlinear, nonlinear_synth)]:
        pts = verify.sample_box(verify.safe_bbox(prob), 10_000, rng)
        for prev, cur in zip(trace.records, trace.records[1:]):
            inside = prev.B.evaluate_many(pts) >= 0
            mono = min(mono, float(cur.B.evaluate_many(pts[inside]).min()))
    # QP filter idempotence and minimality
    cert = nonlinear_synth[0]
    cfg = FilterConfig(cert, nonlinear)
    idem, gap = 0.0, -np.inf
    for x in verify.sample_boundary(cert.B, verify.safe_bbox(nonlinear), 16).points:
        u_star = rng.uniform(-4, 4, 2)
        u = filter_input(cfg, x, u_star)
        idem = max(idem, float(np.max(np.abs(filter_input(cfg, x, u) - u))))
        G, h = cfg.constraints(x)
        cand = rng.uniform(-1.5, 1.5, (20_000, 2))
        feas = cand[np.all(cand @ G.T <= h, axis=1)][:1000]
        gap = max(gap, float(np.linalg.norm(u - u_star) - np.linalg.norm(feas - u_star, axis=1).min()))
    ok = grad_err <= 1e-6 and hom_err <= 1e-10 and rt <= 1e-6 and mono >= -1e-8 and idem <= 1e-9 and gap <= 1e-9
    report(7, ok, f"gradient FD rel {grad_err:.1e}, homomorphism rel {hom_err:.1e}, SOS round-trip {rt:.1e}, "
                  f"enlargement min {mono:.2e}, filter idempotence {idem:.1e}, minimality excess {gap:.1e}")
