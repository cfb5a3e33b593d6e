import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbcert import cbc, qpfilter, verify
from cbcert.qpfilter import FilterConfig, filter_input, kkt_residual, solve_qp
from conftest import PV


@pytest.fixture(scope="module")
def nl_config(nonlinear, nonlinear_synth):
    return FilterConfig(nonlinear_synth[0], nonlinear)


@pytest.fixture(scope="module")
def lti_config(lti, printed_cert):
    return FilterConfig(cbc.recover_multipliers(lti, printed_cert), lti)


def test_unconstrained_qp():
    u_star = np.array([0.3, -2.0])
    np.testing.assert_allclose(solve_qp(np.eye(2), -u_star), u_star)


def test_single_halfspace():
    assert solve_qp(np.eye(1), [-1.0], [[1.0]], [0.0])[0] == pytest.approx(0.0, abs=1e-15)
    assert solve_qp(np.eye(1), [1.0], [[1.0]], [0.0])[0] == -1.0


def test_infeasible_and_zero_rows():
    with pytest.raises(qpfilter.InfeasibleQp):
        solve_qp(np.eye(1), [0.0], [[1.0], [-1.0]], [-1.0, -1.0])
    with pytest.raises(qpfilter.InfeasibleQp):
        solve_qp(np.eye(2), [0.0, 0.0], [[0.0, 0.0]], [-1.0])
    np.testing.assert_allclose(solve_qp(np.eye(2), [-1.0, 0.0], [[0.0, 0.0]], [1.0]), [1.0, 0.0])


def _grid_min(G, h, u_star, size=400):
    # two-level brute force: a grid over U = [-1, 1]^2, then a grid around the coarse minimizer
    lo, hi = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
    best = None
    for _ in range(2):
        ax = [np.linspace(lo[i], hi[i], size) for i in range(2)]
        U = np.stack(np.meshgrid(*ax), axis=-1).reshape(-1, 2)
        U = U[np.all(U @ G.T <= h + 1e-12, axis=1)]
        best = U[np.argmin(np.sum((U - u_star) ** 2, axis=1))]
        step = (hi - lo) / (size - 1)
        lo, hi = best - 10 * step, best + 10 * step
    return best


def test_random_qps_match_grid():
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 25:
        G = rng.normal(size=(4, 2))
        u0 = rng.uniform(-0.5, 0.5, 2)
        h = G @ u0 + rng.uniform(0.05, 0.5, 4)
        u_star = rng.uniform(-1.5, 1.5, 2)
        u = solve_qp(np.eye(2), -u_star, G, h)
        if np.max(np.abs(u)) > 0.95:
            continue  # the oracle only covers U = [-1, 1]^2
        assert kkt_residual(np.eye(2), -u_star, G, h, u) <= 1e-9
        ref = _grid_min(G, h, u_star)
        d_qp, d_grid = np.linalg.norm(u - u_star), np.linalg.norm(ref - u_star)
        assert d_qp <= d_grid + 1e-9
        # the objective is flat along active edges, so compare optimal distances
        assert d_grid - d_qp <= 1e-3
        checked += 1


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_kkt_random(seed):
    rng = np.random.default_rng(seed)
    m, k = int(rng.integers(1, 5)), int(rng.integers(0, 11))
    H = rng.normal(size=(m, m))
    Q = H @ H.T + 0.1 * np.eye(m)
    G = rng.normal(size=(k, m))
    h = G @ rng.normal(size=m) + rng.uniform(0, 1, k)
    c = rng.normal(size=m) * 3
    u = solve_qp(Q, c, G, h)
    assert kkt_residual(Q, c, G, h, u) <= 1e-9


def test_interior_state_returns_nominal(lti_config, printed_cert):
    x = np.array([0.4, 0.4])
    assert printed_cert.B.evaluate(x) > lti_config.band
    u_star = np.array([0.5, -1.0])
    out = filter_input(lti_config, x, u_star)
    assert np.array_equal(out, u_star)


def test_box_clamp(lti, printed_cert):
    cfg = FilterConfig(printed_cert, lti, mode="switching")
    out = filter_input(cfg, np.array([0.4, 0.4]), np.array([4.0, -7.0]))
    np.testing.assert_allclose(out, [2.5, -2.5], atol=1e-12)


def test_outward_input_is_corrected(nonlinear, nl_config, nonlinear_synth):
    cert = nonlinear_synth[0]
    pts = verify.sample_boundary(cert.B, verify.safe_bbox(nonlinear), 72).points
    for x in pts:
        _, _, dB, f, g = nl_config.evaluate(x)
        u_star = -10.0 * (dB @ g)  # pushes outward as hard as possible
        u = filter_input(nl_config, x, u_star)
        assert dB @ (f + g @ u) > 0
        assert np.all(nonlinear.input_margin(u[None])[0] >= -1e-9)


def test_idempotent_and_minimal(nonlinear, nl_config, nonlinear_synth, rng):
    cert = nonlinear_synth[0]
    pts = verify.sample_boundary(cert.B, verify.safe_bbox(nonlinear), 24).points
    for x in pts[:8]:
        u_star = rng.uniform(-4, 4, 2)
        u = filter_input(nl_config, x, u_star)
        np.testing.assert_allclose(filter_input(nl_config, x, u), u, atol=1e-9)
        G, h = nl_config.constraints(x)
        cand = rng.uniform(-1.5, 1.5, (20_000, 2))
        feas = cand[np.all(cand @ G.T <= h, axis=1)][:1000]
        assert len(feas) == 1000
        dist = np.linalg.norm(feas - u_star, axis=1)
        assert np.linalg.norm(u - u_star) <= dist.min() + 1e-9


def test_infeasible_state(lti, printed_cert):
    cfg = FilterConfig(cbc.recover_multipliers(lti, printed_cert), lti, margin=1e6)
    with pytest.raises(qpfilter.InfeasibleAtState):
        filter_input(cfg, np.array([0.4, 0.4]), np.zeros(2))


def test_config_validation(lti, printed_cert):
    with pytest.raises(ValueError):
        FilterConfig(printed_cert, lti)  # relaxed mode without lam1
    with pytest.raises(ValueError):
        FilterConfig(printed_cert, lti, mode="switching", band=0.0)
    with pytest.raises(ValueError):
        FilterConfig(printed_cert, lti, mode="bang")


def test_closed_loop_with_destabilizing_nominal(nonlinear, nl_config, nonlinear_synth):
    cert = nonlinear_synth[0]
    nominal = PV(["3*x1", "3*x2"])
    starts = verify.boundary_starts(cert.B, verify.safe_bbox(nonlinear), 2)
    trs = verify.simulate(nonlinear, qpfilter.filtered_controller(nl_config, nominal), starts, T=10.0, dt=1e-3)
    res = verify.invariance_check(nonlinear, cert, trs, inv_tol=1e-4)
    assert res.passed, res
    # the nominal controller alone leaves the safe set
    bare = verify.simulate(nonlinear, nominal, starts, T=10.0, dt=1e-3)
    assert not verify.invariance_check(nonlinear, cert, bare).passed
