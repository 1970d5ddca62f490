import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybrid_rscn.online import (
    OnlineState,
    SequencingError,
    StreamSample,
    init_state,
    run_stream,
    step,
    stream_from_arrays,
)
from hybrid_rscn.reservoir import Readout, ReservoirNet, compute_states, extended, predict_compensated

from oracles import least_change


def _silent_net():
    # zero weights: x stays 0, so g = [0, u]
    return ReservoirNet([[0.0]], [[0.0]], [0.0], 0.5)


def test_step_single_coordinate():
    net = _silent_net()
    s = OnlineState(np.zeros(1), np.array([[0.0, 0.0]]))
    pred, s2 = step(s, net, [1.0], [2.0])
    assert pred[0] == 0.0
    assert s2.w_out[0, 1] == pytest.approx(2.0, rel=1e-7)
    assert s2.w_out[0] @ np.array([0.0, 1.0]) == pytest.approx(2.0, rel=1e-7)


def test_step_update_arithmetic():
    net = _silent_net()
    s = OnlineState(np.zeros(1), np.array([[0.0, 1.0]]))
    pred, s2 = step(s, net, [2.0], [4.0])
    assert pred[0] == 2.0
    # 1 + (2 / 4) * 2
    assert s2.w_out[0, 1] == pytest.approx(2.0, rel=1e-8)


def test_zero_innovation_is_identity():
    net = ReservoirNet([[0.3], [-0.2]], [[0.5, 0.0], [0.1, 0.2]], [0.1, 0.0], 0.5)
    w = np.array([[0.2, -0.4, 1.5]])
    x1 = np.tanh(net.w_in @ [0.7] + net.b)
    y = w @ np.concatenate([x1, [0.7]])
    _, s2 = step(OnlineState(np.zeros(2), w), net, [0.7], y)
    np.testing.assert_array_equal(s2.w_out, w)


def test_frozen_step_keeps_weights():
    net = _silent_net()
    s = OnlineState(np.zeros(1), np.array([[0.0, 1.0]]))
    _, s2 = step(s, net, [2.0], [10.0], adapt=False)
    np.testing.assert_array_equal(s2.w_out, s.w_out)
    assert s2.step == 1


def _random_net(rng, n=6, k=2):
    w_r = np.tril(rng.uniform(-0.3, 0.3, (n, n)))
    return ReservoirNet(rng.uniform(-1, 1, (n, k)), w_r, rng.uniform(-1, 1, n), 0.5)


def test_interpolation_1000_steps():
    rng = np.random.default_rng(0)
    net = _random_net(rng)
    s = OnlineState(np.zeros(6), rng.normal(size=(2, 8)))
    for _ in range(1000):
        u = rng.uniform(-1, 1, 2)
        y = rng.normal(size=2) * 3
        _, s = step(s, net, u, y)
        g = np.concatenate([s.x, u])
        assert s.guard <= 1e-8 * (g @ g)
        assert np.all(np.abs(s.w_out @ g - y) <= 1e-8 * (1 + np.abs(y)))


@given(st.integers(0, 10**6))
def test_minimal_change(seed):
    rng = np.random.default_rng(seed)
    net = _random_net(rng, n=3, k=1)
    w = rng.normal(size=(2, 4))
    s = OnlineState(rng.uniform(-0.5, 0.5, 3), w)
    u = rng.uniform(-1, 1, 1)
    y = rng.normal(size=2)
    _, s2 = step(s, net, u, y)
    g = np.concatenate([s2.x, u])
    v = least_change(w, g, y)
    np.testing.assert_allclose(s2.w_out, v, atol=1e-7)
    # any other interpolating matrix moves further
    other = v + np.outer(rng.normal(size=2), rng.normal(size=4) - g * 0)
    other -= np.outer(other @ g - y, g) / (g @ g)
    assert np.linalg.norm(s2.w_out - w) <= np.linalg.norm(other - w) + 1e-9


def test_online_state_checks():
    with pytest.raises(ValueError):
        OnlineState(np.zeros(1), np.zeros((1, 2)), guard=0.0)
    with pytest.raises(FloatingPointError):
        OnlineState(np.array([np.nan]), np.zeros((1, 2)))
    net = _silent_net()
    with pytest.raises(FloatingPointError):
        step(OnlineState(np.zeros(1), np.zeros((1, 2))), net, [np.inf], [0.0])
    with pytest.raises(ValueError):
        step(OnlineState(np.zeros(1), np.zeros((1, 2))), net, [1.0, 2.0], [0.0])
    with pytest.raises(ValueError):
        init_state(net, Readout(np.zeros((1, 5))))


def _stream_case(seed=1, n=80):
    rng = np.random.default_rng(seed)
    net = _random_net(rng, n=5, k=2)
    u = rng.uniform(-1, 1, (2, n))
    design = rng.normal(size=(n, 3))
    from hybrid_rscn.lasso import LassoModel

    lm = LassoModel(np.array([[0.4, 0.0, -0.1]]), np.array([0.2]), 0.1, (("a", 0), ("a", 1), ("b", 0)))
    ro = Readout(rng.normal(size=(1, 7)) * 0.3)
    t = rng.normal(size=(1, n))
    return net, ro, lm, u, design, t


def test_frozen_stream_equals_batch():
    net, ro, lm, u, design, t = _stream_case()
    tr = run_stream(net, ro, lm, stream_from_arrays(u, design, t), adapt=False)
    np.testing.assert_allclose(tr.y_total, predict_compensated(net, ro, lm, u, design), rtol=0, atol=1e-12)
    np.testing.assert_allclose(tr.final_state.x, compute_states(net, u)[:, -1], rtol=0, atol=1e-12)


def test_stream_states_match_batch():
    net, ro, lm, u, design, t = _stream_case(2)
    s = init_state(net, ro)
    batch = compute_states(net, u)
    for i in range(u.shape[1]):
        _, s = step(s, net, u[:, i], t[:, i])
        np.testing.assert_allclose(s.x, batch[:, i], rtol=0, atol=1e-12)


def test_adaptive_stream_uses_residual_target():
    net, ro, lm, u, design, t = _stream_case(3)
    tr = run_stream(net, ro, lm, stream_from_arrays(u, design, t), adapt=True)
    # after the last update the readout reproduces the last residual target
    g = extended(tr.final_state.x[:, None], u[:, -1:])[:, 0]
    resid = t[:, -1] - lm.predict_design(design[-1:])[:, 0]
    np.testing.assert_allclose(tr.final_state.w_out @ g, resid, atol=1e-8 * (1 + abs(resid[0])))


def test_sequencing_errors():
    net, ro, lm, u, design, t = _stream_case()
    samples = list(stream_from_arrays(u, design, t))
    with pytest.raises(SequencingError):
        run_stream(net, ro, lm, [samples[0], samples[2]])
    with pytest.raises(SequencingError):
        run_stream(net, ro, lm, [samples[1], samples[0]])
    with pytest.raises(SequencingError):
        run_stream(net, ro, lm, [])


def test_trajectory_csv(tmp_path):
    net, ro, lm, u, design, t = _stream_case()
    tr = run_stream(net, ro, lm, stream_from_arrays(u, design, t, start=7), adapt=True)
    tr.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "step,y_lasso,y_reservoir,y_total,y_obs,error,cumulative_nrmse"
    assert lines[1].startswith("7,") and len(lines) == 81
    assert np.isfinite(tr.cumulative_nrmse[-1])
    assert tr.cumulative_nrmse[-1] == pytest.approx(tr.nrmse(), rel=1e-10)


@pytest.fixture(scope="module")
def sysid_model():
    from hybrid_rscn.presets import PRESETS, make_task
    from hybrid_rscn.variants import fit_variant

    task = make_task("sysid", 0)
    return task, fit_variant(task, "LASSO-RSCN-L2", PRESETS["sysid"].settings, 1).model


def _run(model, raw, adapt, offset=0.0, at=200):
    d = model.lagged(raw)
    u = model.reservoir_input(d)
    t = d.targets.copy()
    t[:, at:] += offset
    return run_stream(model.net, model.readout, model.linear, stream_from_arrays(u, d.design, t), adapt=adapt)


@pytest.mark.xfail(strict=True, reason="undamped projection update tracks per-sample noise on i.i.d. input; "
                   "measured adaptive NRMSE is 35-45% above frozen on held-out training-distribution data")
def test_adapt_close_to_frozen_without_drift(sysid_model):
    task, model = sysid_model
    w = model.washout
    a = _run(model, task.val, True).nrmse(w)
    f = _run(model, task.val, False).nrmse(w)
    assert abs(a - f) / f < 0.10


def test_adaptation_recovers_from_drift(sysid_model):
    task, model = sysid_model
    a = _run(model, task.test, True, offset=0.2).nrmse(200, 400)
    f = _run(model, task.test, False, offset=0.2).nrmse(200, 400)
    assert a < f
