import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbcert import sdp, sos
from cbcert.poly import Polynomial, monomial_basis
from conftest import P

MOTZKIN = "x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1"


def random_sos(rng, n=2, half=2, terms=3):
    basis = monomial_basis(n, half)
    out = Polynomial.zero(n)
    for _ in range(terms):
        q = Polynomial.from_basis(basis, rng.normal(size=len(basis)), n)
        out = out + q * q
    return out


def test_declare_poly_examples():
    prog = sos.SosProgram(2)
    v = prog.free_poly(monomial_basis(2, 2))
    assert prog.n_unknowns == 6 and len(v.unknowns()) == 6
    prog.scalar()
    assert prog.n_unknowns == 7
    prog.sos_poly(2)
    assert prog.n_unknowns == 7 + 6
    with pytest.raises(ValueError):
        prog.free_poly([(1, 0), (1, 0)])


def test_bilinear_rejected():
    prog = sos.SosProgram(2)
    lam, B = prog.free_poly(monomial_basis(2, 1)), prog.free_poly(monomial_basis(2, 2))
    with pytest.raises(sos.BilinearExpression):
        prog.add_sos(lam * B)


def test_known_sos_constraint():
    prog = sos.SosProgram(2)
    prog.add_sos(P("x1^2 + x2^2 + 1"))
    assert prog.n_unknowns == 6
    assert sos.solve_program(prog).ok


def test_safe_condition_unknown_count():
    eps1 = 1e-3
    prog = sos.SosProgram(2)
    B = prog.free_poly(monomial_basis(2, 2))
    sigma = prog.sos_poly(2)
    prog.add_sos(-B + sigma * P("3 - x1^2 - x2^2") - eps1)
    # 6 coefficients of B, 6 Gram entries of sigma, 21 for the 6x6 Gram of the quartic expression
    assert prog.n_unknowns == 6 + 6 + 21
    cp = sos.compile(prog)
    assert [b.size for b in cp.problem.blocks if b.kind == sdp.PSD] == [3, 6]


def test_minimize_offset():
    prog = sos.SosProgram(2)
    p = prog.scalar("p")
    prog.add_sos(P("x1^2 + x2^2") + p)
    prog.set_objective(p, "min")
    res = sos.solve_program(prog)
    assert res.ok
    assert res.objective == pytest.approx(0.0, abs=1e-6)
    # grid oracle: p works iff the Gram of x^2 + y^2 + p over [1, x, y] is PSD
    ok = [q for q in np.linspace(-1, 1, 201) if np.linalg.eigvalsh(np.diag([q, 1.0, 1.0]))[0] >= 0]
    assert min(ok) == pytest.approx(res.objective, abs=1e-2)


def test_empty_program():
    prog = sos.SosProgram(2)
    cp = sos.compile(prog)
    assert cp.problem.n_constraints == 0
    assert sos.solve_program(prog).status == sdp.OPTIMAL


@pytest.mark.parametrize("text", [MOTZKIN, "-1", "x1^3 + 1", "-x1^2 + x2^2"])
def test_not_sos(text):
    assert not sos.check_sos(P(text))


def test_motzkin_is_nonnegative_but_not_sos(rng):
    # the oracle: nonnegative on samples (AM-GM), yet no Gram witness exists
    pts = rng.uniform(-3, 3, (10_000, 2))
    assert P(MOTZKIN).evaluate_many(pts).min() >= 0
    prog = sos.SosProgram(2)
    prog.add_sos(P(MOTZKIN))
    assert not sos.solve_program(prog).ok


def test_check_sos_examples():
    w = sos.check_sos(P("x1^2 + 2*x1*x2 + x2^2"))
    assert w
    eig = np.linalg.eigvalsh(w.Q)
    assert eig[-2] <= 1e-6 * eig[-1]  # numerically rank one
    w = sos.check_sos(P("x1^2*x2^2 - x1*x2 + 1"))
    assert w and w.residual <= 1e-6
    assert sos.check_sos(Polynomial.zero(2))


def test_check_sos_accepts_random_sos():
    rng = np.random.default_rng(0)
    for k in range(50):
        p = random_sos(rng, n=2 if k % 2 else 3, half=1 + k % 2)
        w = sos.check_sos(p)
        assert w, f"case {k}"
        assert w.residual <= 1e-6
        assert w.min_eig >= -1e-8


def test_accepted_polynomials_are_nonnegative():
    rng = np.random.default_rng(1)
    for n in (1, 2, 3):
        p = random_sos(rng, n=n, half=2) - 0.0
        assert sos.check_sos(p)
        pts = rng.uniform(-3, 3, (10_000, n))
        assert p.evaluate_many(pts).min() >= -1e-6


@pytest.mark.parametrize("deg", [2, 3, 4, 5, 6])
def test_gram_basis_degree(deg):
    prog = sos.SosProgram(2)
    c = prog.free_poly(monomial_basis(2, deg))
    prog.add_sos(c)
    basis = prog.grams[-1].basis
    assert max(sum(m) for m in basis) == math.ceil(deg / 2)
    gram_monos = {tuple(a + b for a, b in zip(m1, m2)) for m1 in basis for m2 in basis}
    assert set(monomial_basis(2, deg)) <= gram_monos


def test_boundary_sos_accepted_as_feasible():
    # x1^2 + 1 in two variables forces a zero Gram diagonal: no strict margin, witness still valid
    res = sos.solve_program(_single(P("x1^2 + 1")))
    assert res.status == "Feasible" and res.ok


def _single(p):
    prog = sos.SosProgram(p.n_vars)
    prog.add_sos(p)
    return prog


def test_extract_requires_optimal():
    prog = sos.SosProgram(2)
    prog.add_sos(P("-1"))
    res = sos.solve_program(prog)
    assert not res.ok
    with pytest.raises(sos.ExtractOnNonOptimal):
        sos.extract(prog, res.sdp)


def test_extract_matches_gram_entries():
    prog = sos.SosProgram(1)
    a = prog.scalar("a")
    g = prog.sos_poly(2, "g")
    # g = a*x^2 + 2*x + 1 in Sigma, minimize a: optimum a = 1 with Gram [[1, 1], [1, 1]]
    prog.add_linear(g.coefficient((0,)) - 1.0)
    prog.add_linear(g.coefficient((1,)) - 2.0)
    prog.add_linear(g.coefficient((2,)) - a)
    prog.set_objective(a, "min")
    res = sos.solve_program(prog)
    assert res.ok
    vals = sos.extract(prog, res.sdp)
    assert vals["a"].coeff((0,)) == pytest.approx(1.0, abs=1e-6)
    assert vals["g"].almost_equal(P("x1^2 + 2*x1 + 1", 1), 1e-6)
    Q = res.sdp.X[g.gram_block]
    assert vals["g"].coeff((1,)) == pytest.approx(2 * Q[0, 1], abs=1e-8)
    assert vals["g"].coeff((2,)) == pytest.approx(Q[1, 1], abs=1e-8)


def test_extract_fixed_polynomial_unchanged():
    prog = sos.SosProgram(2)
    prog.add_sos(P("x1^2 + x2^2 + 1"))
    res = sos.solve_program(prog)
    assert sos.extract(prog, res.sdp) == {}
    assert res.witnesses[0].residual <= 1e-6


def test_round_trip_residuals(rng):
    prog = sos.SosProgram(2)
    B = prog.free_poly(monomial_basis(2, 2), "B")
    sigma = prog.sos_poly(2, "sigma")
    prog.add_sos(-B + sigma * P("3 - x1^2 - x2^2") - 1e-3)
    prog.add_sos(B - 0.5 * P("1 - x1^2 - x2^2"))
    res = sos.solve_program(prog)
    assert res.ok
    assert res.max_residual <= 1e-6
    for con, w in zip(prog.sos_constraints, res.witnesses):
        p = con.expr.to_polynomial(sos.unknown_values(sos.compile(prog), res.sdp.X, prog))
        Z = [Polynomial({m: 1.0}, 2) for m in w.Z]
        zqz = sum((Z[i] * Z[j] * float(w.Q[i, j]) for i in range(len(Z)) for j in range(len(Z))), Polynomial.zero(2))
        assert (p - zqz).max_abs_coeff() <= 1e-6


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=12, max_size=12))
def test_sos_round_trip_property(coefs):
    c = np.array(coefs)
    basis = monomial_basis(2, 1)
    p = Polynomial.from_basis(basis, c[:3], 2) ** 2 + Polynomial.from_basis(basis, c[3:6], 2) ** 2 + 0.1
    w = sos.check_sos(p)
    assert w and w.residual <= 1e-6
