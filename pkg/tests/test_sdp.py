import numpy as np
import pytest

from cbcert import sdp
from cbcert.sdp import FREE, LP, PSD, Block, SdpProblem, SdpSettings, SdpSolution


def trace_problem():
    # minimize tr(diag(1, 2) X) s.t. tr(X) = 1
    return SdpProblem([Block(PSD, 2)], [np.eye(2)[None]], [1.0], [np.diag([1.0, 2.0])])


def random_problem(rng, n=4, m=5):
    G = rng.normal(size=(n, n))
    X0 = G @ G.T + 0.5 * np.eye(n)
    A = rng.normal(size=(m, n, n))
    A = 0.5 * (A + A.transpose(0, 2, 1))
    b = np.einsum("kij,ij->k", A, X0)
    H = rng.normal(size=(n, n))
    C = H @ H.T + 0.1 * np.eye(n)  # C > 0 keeps the objective bounded on the cone
    return SdpProblem([Block(PSD, n)], [A], b, [C])


def test_one_by_one_minimum():
    sol = sdp.solve(SdpProblem([Block(PSD, 1)], [np.ones((1, 1, 1))], [1.0], [np.ones((1, 1))]))
    assert sol.status == sdp.OPTIMAL
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)


def test_trace_example():
    prob = trace_problem()
    sol = sdp.solve(prob)
    assert sol.status == sdp.OPTIMAL
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(sol.X[0], np.diag([1.0, 0.0]), atol=1e-6)


def test_trace_example_matches_grid_oracle():
    # brute force over X = [[a, c], [c, 1 - a]] with X >= 0
    best = np.inf
    for a in np.linspace(0, 1, 201):
        for c in np.linspace(-0.5, 0.5, 101):
            X = np.array([[a, c], [c, 1 - a]])
            if np.linalg.eigvalsh(X)[0] >= -1e-12:
                best = min(best, a + 2 * (1 - a))
    assert sdp.solve(trace_problem()).primal_objective == pytest.approx(best, abs=1e-6)


def test_residuals_at_analytic_optimum():
    prob = trace_problem()
    # dual: max y s.t. diag(1, 2) - y I >= 0, so y = 1 and S = diag(0, 1)
    sol = SdpSolution([np.diag([1.0, 0.0])], np.array([1.0]), [np.diag([0.0, 1.0])], sdp.OPTIMAL, 0, 0, 0)
    assert max(sdp.residuals(prob, sol)) <= 1e-9


def test_residuals_zero_primal():
    prob = SdpProblem([Block(PSD, 2)], [np.stack([np.eye(2), np.diag([1.0, 0.0])])], [3.0, -5.0])
    sol = SdpSolution([np.zeros((2, 2))], np.zeros(2), [np.zeros((2, 2))], sdp.OPTIMAL, 0, 0, 0)
    assert sdp.residuals(prob, sol)[0] == 5.0


def test_gap_grows_along_feasible_direction():
    prob = trace_problem()
    gaps = []
    for eps in [0.0, 1e-3, 2e-3, 4e-3]:
        X = np.diag([1.0 - eps, eps])  # stays feasible
        sol = SdpSolution([X], np.array([1.0]), [np.diag([0.0, 1.0])], sdp.OPTIMAL, 0, 0, 0)
        gaps.append(sdp.residuals(prob, sol)[2])
    assert all(b > a for a, b in zip(gaps, gaps[1:]))


def test_rank_one_feasibility():
    E = [np.array([[1.0, 0], [0, 0]]), np.array([[0, 0], [0, 1.0]]), np.array([[0, 0.5], [0.5, 0]])]
    prob = SdpProblem([Block(PSD, 2)], [np.stack(E)], [1.0, 1.0, 1.0], sense="feasibility")
    sol = sdp.solve(prob)
    # the only feasible point is [[1, 1], [1, 1]], which has no strict margin
    assert sol.margin == pytest.approx(0.0, abs=1e-6)
    np.testing.assert_allclose(sol.X[0], np.ones((2, 2)), atol=1e-5)
    assert sdp.min_eigenvalue(prob.blocks, sol.X) >= -1e-8


def test_infeasible_one_by_one():
    prob = SdpProblem([Block(PSD, 1)], [np.ones((1, 1, 1))], [-1.0], sense="feasibility")
    assert sdp.solve(prob).status == sdp.INFEASIBLE
    prob = SdpProblem([Block(PSD, 1)], [np.ones((1, 1, 1))], [-1.0], [np.ones((1, 1))])
    assert sdp.solve(prob).status == sdp.INFEASIBLE


def test_random_problems_converge():
    rng = np.random.default_rng(7)
    for _ in range(50):
        prob = random_problem(rng, n=int(rng.integers(2, 6)), m=int(rng.integers(1, 6)))
        sol = sdp.solve(prob)
        assert sol.status == sdp.OPTIMAL
        pres, dres, gap = sdp.residuals(prob, sol)
        assert gap <= 1e-7
        assert pres <= 1e-7 * (1 + np.max(np.abs(prob.b))) and dres <= 1e-7
        assert sdp.min_eigenvalue(prob.blocks, sol.X) >= -1e-8
        assert sdp.min_eigenvalue(prob.blocks, sol.S) >= -1e-8


def test_random_feasibility_problems_are_feasible():
    rng = np.random.default_rng(11)
    for _ in range(10):
        prob = random_problem(rng)
        prob = SdpProblem(prob.blocks, prob.A, prob.b, sense="feasibility")
        assert sdp.solve(prob).status == sdp.OPTIMAL


def test_mixed_blocks():
    # minimize x_lp + X11 s.t. x_lp + X11 + z = 2, z = 1 (free)
    A = [np.array([[[1.0]], [[0.0]]]), np.array([[1.0], [0.0]]), np.array([[1.0], [1.0]])]
    C = [np.ones((1, 1)), np.ones(1), np.zeros(1)]
    prob = SdpProblem([Block(PSD, 1), Block(LP, 1), Block(FREE, 1)], A, [2.0, 1.0], C)
    sol = sdp.solve(prob)
    assert sol.status == sdp.OPTIMAL
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)
    assert sol.X[2][0] == pytest.approx(1.0, abs=1e-6)


def test_deterministic():
    prob = random_problem(np.random.default_rng(3))
    a, b = sdp.solve(prob), sdp.solve(prob)
    assert a.status == b.status and a.iterations == b.iterations
    np.testing.assert_allclose(a.X[0], b.X[0], atol=1e-10, rtol=0)
    np.testing.assert_allclose(a.y, b.y, atol=1e-10, rtol=0)


def test_dump_load_roundtrip(tmp_path):
    prob = random_problem(np.random.default_rng(5))
    path = tmp_path / "p.txt"
    prob.dump(path)
    back = SdpProblem.load(path)
    assert back.blocks == prob.blocks and back.sense == prob.sense
    np.testing.assert_array_equal(back.b, prob.b)
    np.testing.assert_array_equal(back.A[0], prob.A[0])
    np.testing.assert_array_equal(back.C[0], prob.C[0])
    assert sdp.solve(back).primal_objective == sdp.solve(prob).primal_objective


def test_validation():
    with pytest.raises(ValueError):
        Block("cone", 2)
    with pytest.raises(ValueError):
        SdpProblem([Block(PSD, 2)], [np.array([[[0.0, 1.0], [0.0, 0.0]]])], [1.0])
    with pytest.raises(ValueError):
        SdpProblem([Block(PSD, 1)], [np.ones((1, 1, 1))], [np.inf])


def test_iteration_limit_reported():
    prob = random_problem(np.random.default_rng(9))
    try:
        sol = sdp.solve(prob, SdpSettings(max_iter=2))
    except sdp.IterationLimit:
        return
    assert sol.status != sdp.OPTIMAL
