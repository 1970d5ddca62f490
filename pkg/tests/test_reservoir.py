import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybrid_rscn.lasso import LassoModel
from hybrid_rscn.reservoir import (
    InvalidCandidate,
    NilpotentReservoirWarning,
    Readout,
    ReservoirNet,
    SingularReadoutError,
    batch_scores,
    build_esn,
    check_constraint,
    compute_states,
    draw_candidate,
    draw_candidates,
    extended,
    penalized_objective,
    predict_compensated,
    scale_echo_state,
    solve_readout_elastic,
    solve_readout_ls,
    solve_readout_ridge,
    spectral_radius,
    xi_star,
)
from hybrid_rscn._cd import kkt_violation

from oracles import constructive_residual


def _tri_net(n, k, seed, alpha=0.8, density=0.3):
    rng = np.random.default_rng(seed)
    w_r = np.tril(np.where(rng.random((n, n)) < density, rng.uniform(-1, 1, (n, n)), 0.0))
    w_r[0, 0] = 0.5
    return ReservoirNet(rng.uniform(-1, 1, (n, k)), scale_echo_state(w_r, alpha, False), rng.uniform(-1, 1, n), alpha)


# --- states -----------------------------------------------------------------


def test_states_zero_weights():
    net = ReservoirNet(np.zeros((3, 2)), np.zeros((3, 3)), np.zeros(3), 0.5)
    assert np.all(compute_states(net, np.ones((2, 7))) == 0)


def test_states_single_node():
    net = ReservoirNet([[1.0]], [[0.0]], [0.0], 0.5)
    np.testing.assert_allclose(compute_states(net, [[0.5, 0.5]]), [[np.tanh(0.5)] * 2], rtol=0, atol=0)


@given(st.integers(0, 10**6), st.integers(2, 12))
def test_incremental_consistency(seed, n):
    big = _tri_net(n, 2, seed)
    small = ReservoirNet(big.w_in[:-1], big.w_r[:-1, :-1], big.b[:-1], big.alpha)
    u = np.random.default_rng(seed).uniform(-1, 1, (2, 30))
    # equal up to BLAS summation order (the extra column only adds zeros)
    np.testing.assert_allclose(compute_states(big, u)[:-1], compute_states(small, u), rtol=0, atol=1e-14)
    assert np.array_equal(big.truncated(n - 1).w_r, small.w_r)


def test_states_errors():
    net = _tri_net(3, 2, 0)
    with pytest.raises(ValueError):
        compute_states(net, np.ones((3, 4)))
    with pytest.raises(ValueError):
        compute_states(net, np.ones((2, 4)), x0=np.ones(2))
    with pytest.raises(ValueError):
        ReservoirNet(np.ones((2, 1)), [[0.0, 0.1], [0.0, 0.0]], np.zeros(2), 0.5)


def test_extended_stacks_inputs():
    x = extended(np.zeros((2, 3)), np.ones((1, 3)))
    assert x.shape == (3, 3) and np.all(x[2] == 1)


# --- echo-state scaling -----------------------------------------------------


def test_scale_example():
    out = scale_echo_state(np.array([[0.5, 0.0], [0.3, 0.5]]), 0.8, warn_bound=False)
    np.testing.assert_allclose(out, [[0.8, 0.0], [0.48, 0.8]], atol=1e-15)


def test_scale_nilpotent_flagged():
    w = np.array([[0.0, 0.0], [0.7, 0.0]])
    with pytest.warns(NilpotentReservoirWarning):
        out = scale_echo_state(w, 0.8)
    np.testing.assert_array_equal(out, w)


@given(st.integers(0, 10**6), st.floats(0.05, 0.99))
def test_scale_hits_alpha_and_is_idempotent(seed, alpha):
    rng = np.random.default_rng(seed)
    w = np.tril(rng.uniform(-2, 2, (6, 6)))
    once = scale_echo_state(w, alpha, warn_bound=False)
    assert abs(np.max(np.abs(np.diag(once))) - alpha) <= 1e-12
    assert abs(np.max(np.abs(np.linalg.eigvals(once))) - alpha) <= 1e-12
    np.testing.assert_allclose(scale_echo_state(once, alpha, warn_bound=False), once, rtol=0, atol=1e-15)


@pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5, -0.2])
def test_scale_rejects_alpha(alpha):
    with pytest.raises(ValueError):
        scale_echo_state(np.eye(2) * 0.5, alpha)


# --- candidates -------------------------------------------------------------


def _net_and_states(seed=0, n=6, k=2, t=40):
    net = _tri_net(n, k, seed)
    u = np.random.default_rng(seed + 1).uniform(-1, 1, (k, t))
    return net, u, compute_states(net, u)


def test_candidate_full_density():
    net, u, states = _net_and_states()
    c = draw_candidate(net, 1.0, 1.0, np.random.default_rng(3), u, states)
    assert np.count_nonzero(c.w_r_row) == net.n_nodes + 1


def test_candidate_support():
    net, u, states = _net_and_states()
    b = draw_candidates(net, 0.1, 0.5, np.random.default_rng(4), u, states, 200)
    assert np.all(np.abs(b.w_in) <= 0.1) and np.all(np.abs(b.bias) <= 0.1)
    assert np.all(np.abs(b.w_r) <= 0.1)


def test_candidate_deterministic():
    net, u, states = _net_and_states()
    a = draw_candidate(net, 1.0, 0.3, np.random.default_rng(9), u, states)
    b = draw_candidate(net, 1.0, 0.3, np.random.default_rng(9), u, states)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


@given(st.integers(0, 10**6), st.sampled_from([0.1, 1.0, 10.0]), st.sampled_from([0.03, 0.3, 1.0]))
def test_candidate_states_match_full_recursion(seed, lam, sparsity):
    net, u, states = _net_and_states(seed % 1000)
    c = draw_candidate(net, lam, sparsity, np.random.default_rng(seed), u, states)
    grown = net.with_node(c.w_in_row, c.w_r_row, c.bias)
    full = compute_states(grown, u)
    np.testing.assert_allclose(c.g, full[-1], rtol=0, atol=1e-12)
    # the candidate never raises the spectral radius above alpha
    assert spectral_radius(grown.w_r) <= net.alpha + 1e-15


# --- supervisory inequality and scores --------------------------------------


def test_constraint_orthogonal_fails():
    e = np.array([[1.0, 0.0, 0.0]])
    res = check_constraint(e, np.array([0.0, 1.0, 0.0]), 2.0, 0.01, 0.9, 0.05)
    assert not res.passed and np.all(res.margins < 0)


def test_constraint_example_regularized():
    # 1 - (1.0201 / 1.02) * 0.05
    res = check_constraint([[1.0]], np.array([1.0]), 1.0 + 1e-9, 0.01, 0.9, 0.05)
    assert res.passed
    assert res.margins[0] == pytest.approx(0.949995, abs=1e-6)


def test_constraint_example_plain():
    bg = 1.0 + 1e-12
    res = check_constraint([[1.0]], np.array([1.0 - 1e-13]), bg, 0.0, 0.9, 0.05)
    expect = (1.0 - 1e-13) ** 2 - bg**2 * 0.05
    assert res.margins[0] == pytest.approx(expect, abs=1e-14)
    assert res.margins[0] == pytest.approx(0.95, abs=1e-10)


def test_constraint_invalid_candidate():
    with pytest.raises(InvalidCandidate):
        check_constraint([[1.0]], np.array([0.0]), 1.0, 0.01, 0.9, 0.05)
    with pytest.raises(InvalidCandidate):
        check_constraint([[1.0]], np.array([2.0]), 1.0, 0.01, 0.9, 0.05)
    with pytest.raises(ValueError):
        check_constraint([[1.0]], np.array([0.5]), 1.0, 0.01, 0.9, 0.2)


def test_xi_star_examples():
    xi, total = xi_star([[1.0]], np.array([1.0]), 0.01, 0.9, 0.05)
    assert total == pytest.approx(1.02 / 1.0201 - 0.05, abs=1e-15)
    assert total == pytest.approx(0.94990, abs=1e-5)
    xi, _ = xi_star([[2.0, 0.0]], np.array([0.0, 1.0]), 0.01, 0.9, 0.05)
    assert xi[0] == pytest.approx(-0.05 * 4)


@given(st.integers(0, 10**6))
def test_c_zero_collapse(seed):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=(2, 15))
    g = np.tanh(rng.normal(size=15))
    r, mu = 0.9, 0.01
    xi, _ = xi_star(e, g, 0.0, r, mu)
    plain = (e @ g) ** 2 / (g @ g) - (1 - mu - r) * np.sum(e * e, axis=1)
    np.testing.assert_allclose(xi, plain, rtol=0, atol=1e-14 * max(1.0, np.abs(plain).max()))
    bg = 4.0
    m = check_constraint(e, g, bg, 0.0, r, mu).margins
    np.testing.assert_allclose(m, (e @ g) ** 2 - bg**2 * (1 - r - mu) * np.sum(e * e, axis=1), rtol=0, atol=1e-13)


@given(st.integers(0, 10**6), st.floats(0.0, 0.5), st.floats(0.5, 0.999))
def test_xi_star_equals_constructive_decrease(seed, c, r):
    # xi* is exactly (r + mu)||e||^2 minus the residual left by the
    # per-node constructive weight <e, g> / (||g||^2 + c)
    rng = np.random.default_rng(seed)
    e = rng.normal(size=(3, 20))
    g = np.tanh(rng.normal(size=20))
    mu = (1 - r) / 7
    xi, _ = xi_star(e, g, c, r, mu)
    res, _ = constructive_residual(e, g, c)
    expect = (r + mu) * np.sum(e * e, axis=1) - np.sum(res * res, axis=1)
    np.testing.assert_allclose(xi, expect, rtol=1e-10, atol=1e-10)


@given(st.integers(0, 10**6))
def test_batch_scores_match_scalar(seed):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=(2, 12))
    gs = np.tanh(rng.normal(size=(5, 12)))
    bg = np.sqrt(12) * (1 + 1e-6)
    xi, margins, valid = batch_scores(e, gs, bg, 0.01, 0.95, 0.01)
    assert valid.all()
    for i, g in enumerate(gs):
        np.testing.assert_allclose(xi[i], xi_star(e, g, 0.01, 0.95, 0.01)[0], rtol=1e-12)
        np.testing.assert_allclose(margins[i], check_constraint(e, g, bg, 0.01, 0.95, 0.01).margins, rtol=1e-12)


def test_ridge_beats_constructive_weight():
    # global re-solve minimizes the penalized objective, so it can do no worse
    # than keeping old weights and adding the constructive weight
    hits = 0
    for seed in range(30):
        rng = np.random.default_rng(seed)
        x = np.tanh(rng.normal(size=(4, 40)))
        y = rng.normal(size=(1, 40))
        c = 1e-3
        old = solve_readout_ridge(x, y, c)
        e = y - old(x)
        g = np.tanh(rng.normal(size=40))
        res, beta = constructive_residual(e, g, c)
        x_new = np.vstack([x, g])
        new = solve_readout_ridge(x_new, y, c)
        w_cons = Readout(np.hstack([old.w_out, beta[:, None]]), c)
        assert penalized_objective(new, x_new, y) <= penalized_objective(w_cons, x_new, y) + 1e-12
        hits += np.linalg.norm(y - new(x_new)) <= np.linalg.norm(res) + 1e-12
    assert hits == 30


# --- readouts ---------------------------------------------------------------


def test_ridge_scalar_example():
    assert solve_readout_ridge([[1.0, 0.0]], [[1.0, 0.0]], 1.0).w_out[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_ridge_interpolation_and_zero_target(rng):
    x = rng.normal(size=(4, 4))
    y = rng.normal(size=(1, 4))
    np.testing.assert_allclose(solve_readout_ridge(x, y, 0.0)(x), y, atol=1e-10)
    assert np.all(solve_readout_ridge(x, np.zeros((1, 4)), 0.1).w_out == 0)


def test_ridge_rank_deficient(rng):
    x = rng.normal(size=(3, 10))
    x[2] = x[1]
    with pytest.raises(SingularReadoutError, match="c > 0"):
        solve_readout_ridge(x, rng.normal(size=(1, 10)), 0.0)


@given(st.integers(0, 10**6), st.integers(1, 12), st.integers(1, 40), st.floats(1e-6, 10.0))
def test_ridge_normal_equations(seed, m, n, c):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(m, n))
    y = rng.normal(size=(2, n))
    w = solve_readout_ridge(x, y, c).w_out
    lhs = (x @ x.T + c * np.eye(m)) @ w.T
    rhs = x @ y.T
    assert np.linalg.norm(lhs - rhs) <= 1e-8 * max(np.linalg.norm(rhs), 1e-300) + 1e-12


def test_ls_cases(rng):
    x = rng.normal(size=(3, 3))
    y = rng.normal(size=(1, 3))
    np.testing.assert_allclose(solve_readout_ls(x, y)(x), y, atol=1e-10)
    x = rng.normal(size=(3, 20))
    w = rng.normal(size=(1, 3))
    np.testing.assert_allclose(solve_readout_ls(x, w @ x).w_out, w, atol=1e-10)


@given(st.integers(0, 10**6))
def test_ls_is_ridge_limit(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 15))
    y = rng.normal(size=(1, 15))
    np.testing.assert_allclose(
        solve_readout_ls(x, y).w_out, solve_readout_ridge(x, y, 1e-12).w_out, atol=1e-6
    )


def test_elastic_scalar_example():
    w = solve_readout_elastic([[1.0, -1.0]], [[1.0, -1.0]], 2.0, 1.0).w_out[0, 0]
    assert abs(w - 1.0 / 3.0) <= 1e-10


@given(st.integers(0, 10**6))
def test_elastic_collapses(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(5, 30))
    y = rng.normal(size=(1, 30))
    np.testing.assert_allclose(
        solve_readout_elastic(x, y, 0.0, 0.3).w_out, solve_readout_ridge(x, y, 0.3).w_out, atol=1e-8
    )
    w = solve_readout_elastic(x, y, 2.0, 0.0).w_out[0]
    assert kkt_violation(x @ x.T, x @ y[0], w, 2.0) <= 1e-6


def test_elastic_on_collinear_states():
    # reservoir states are nearly collinear; the solver must still satisfy KKT
    net = _tri_net(40, 1, 0, alpha=0.9, density=0.05)
    u = np.random.default_rng(1).uniform(-0.7, 0.7, (1, 500))
    x = extended(compute_states(net, u), u)
    y = np.sin(np.cumsum(u, axis=1))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ro = solve_readout_elastic(x, y, 0.01, 1e-3)
    b = x @ y[0]
    assert kkt_violation(x @ x.T, b, ro.w_out[0], 0.01, 1e-3) <= 1e-8 * max(1.0, np.abs(b).max())


# --- echo state network baseline --------------------------------------------


def test_esn_single_node():
    net = build_esn(1, 1, 0.5, 1.0, 0.7, seed=2)
    assert abs(abs(net.w_r[0, 0]) - 0.7) <= 1e-12


def test_esn_radius_and_determinism():
    a = build_esn(2, 80, 0.5, 0.1, 0.9, seed=5)
    b = build_esn(2, 80, 0.5, 0.1, 0.9, seed=5)
    np.testing.assert_array_equal(a.w_r, b.w_r)
    assert abs(spectral_radius(a.w_r, triangular=False) - 0.9) <= 1e-8
    assert not a.triangular


# --- fading memory ----------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.8, 0.95])
def test_fading_memory(alpha):
    from hybrid_rscn.dataset import generate_sysid_series

    u = generate_sysid_series(400, "test").inputs
    net = _tri_net(30, 1, 11, alpha=alpha, density=0.1)
    x0 = np.where(np.random.default_rng(0).random(30) < 0.5, -0.5, 0.5)
    a = compute_states(net, u)
    b = compute_states(net, u, x0)
    assert np.max(np.abs(a[:, 100:] - b[:, 100:])) <= 1e-6


# --- compensated prediction -------------------------------------------------


def test_predict_compensated_parts(rng):
    net = _tri_net(5, 2, 3)
    u = rng.uniform(-1, 1, (2, 25))
    design = rng.normal(size=(25, 3))
    lm = LassoModel(np.array([[0.3, 0.0, -0.2]]), np.array([0.1]), 0.5, (("a", 0), ("a", 1), ("b", 0)))
    zero_ro = Readout(np.zeros((1, 7)))
    np.testing.assert_array_equal(predict_compensated(net, zero_ro, lm, u, design), lm.predict_design(design))
    ro = Readout(rng.normal(size=(1, 7)))
    res_only = ro(extended(compute_states(net, u), u))
    zero_lm = LassoModel(np.zeros((1, 3)), np.zeros(1), 0.5, lm.feature_map)
    np.testing.assert_array_equal(predict_compensated(net, ro, zero_lm, u, design), res_only)
    t = rng.normal(size=(1, 25))
    y_l = lm.predict_design(design)
    total = predict_compensated(net, ro, lm, u, design)
    np.testing.assert_allclose(t - total, (t - y_l) - res_only, atol=1e-12)
    with pytest.raises(ValueError):
        predict_compensated(net, ro, lm, u, design[:-1])
