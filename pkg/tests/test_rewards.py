import numpy as np
import pytest
from hypothesis import given, strategies as st

from gscioc.core import AgentDynamics, Dims, DynamicsModel, JointState, JointTrajectory
from gscioc.errors import DimensionMismatch, InputError, MissingCoefficient, NonFiniteDerivative
from gscioc.rewards import (
    ActionQuadratic,
    CoupledAction,
    CustomTerm,
    RewardModel,
    StateQuadratic,
    WeightedTerm,
    ZebraInteraction,
    sigmoid,
    taylor_expand,
)
from gscioc.scenarios import build_group_goal_scenario, build_zebra_scenario

from oracles import richardson_ratio

D1 = Dims(1, 1, 1, 1)


def _ref(rng, T, dims):
    return JointTrajectory(rng.normal(size=(T + 1, dims.n_i)), rng.normal(size=(T + 1, dims.n_j)), rng.normal(size=(T, dims.m_i)), rng.normal(size=(T, dims.m_j)))


def _fd_hessian(f, z, h=1e-4):
    n = z.size
    H = np.empty((n, n))
    E = np.eye(n) * h
    for a in range(n):
        for b in range(n):
            H[a, b] = (f(z + E[a] + E[b]) - f(z + E[a] - E[b]) - f(z - E[a] + E[b]) + f(z - E[a] - E[b])) / (4 * h * h)
    return H


def test_action_quadratic_expansion():
    rng = np.random.default_rng(0)
    d = Dims(2, 2, 2, 2)
    ref = _ref(rng, 3, d)
    e = taylor_expand(RewardModel([WeightedTerm(ActionQuadratic("i"), 0)], [1.0], "i", d), ref)
    np.testing.assert_array_equal(e.H_action_ii, np.broadcast_to(-2 * np.eye(2), (3, 2, 2)))
    np.testing.assert_allclose(e.grad("ui"), -2 * ref.actions_i)


def test_coupled_action_cross_block():
    d = Dims(2, 2, 2, 2)
    e = taylor_expand(RewardModel([WeightedTerm(CoupledAction(), 0)], [3.0], "i", d), _ref(np.random.default_rng(1), 2, d))
    np.testing.assert_array_equal(e.H_action_ji, np.broadcast_to(-6 * np.eye(2), (2, 2, 2)))


def test_zebra_term_matches_fd_oracle():
    term = ZebraInteraction()
    z0 = np.array([-1.0, 3.0, 0.0, 0.0])  # y_p = -1, x_c = 3
    _, g, H = term.derivatives(z0, D1)
    f = lambda z: float(term.value(z, D1))
    for h in (1e-4, 1e-5, 1e-6):
        e = np.eye(4) * h
        fd = np.array([(f(z0 + e[a]) - f(z0 - e[a])) / (2 * h) for a in range(4)])
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(H, _fd_hessian(f, z0), rtol=1e-5, atol=1e-8)
    for k in (0, 1):
        ratio = richardson_ratio(lambda s: f(z0 + s * np.eye(4)[k]), 0.0, 0.2)
        assert 3.0 <= ratio <= 5.0


def test_zebra_term_formula():
    z = np.array([-10.0, 0.1, 0.0, 0.0])
    want = np.log(0.2) * sigmoid(5.9) * sigmoid(0.1) * sigmoid(10.0)
    assert ZebraInteraction().value(z, D1) == pytest.approx(want, rel=1e-12)


@given(seed=st.integers(0, 2**31))
def test_catalog_hessians_match_fd(seed):
    rng = np.random.default_rng(seed)
    cfg = build_zebra_scenario(True)
    z = np.array([rng.uniform(-8, 8), rng.uniform(0.5, 8), rng.normal(), rng.normal()])
    if rng.random() < 0.5:
        z[1] = -z[1]
    for r in cfg.rewards():
        _, _, H = r.derivatives(z)
        fd = _fd_hessian(lambda zz: float(r.value(zz)), z)
        scale = max(1.0, np.max(np.abs(H)))
        assert np.max(np.abs(H - fd)) / scale <= 1e-5


@given(seed=st.integers(0, 2**31))
def test_quadratic_reward_reconstructed(seed):
    rng = np.random.default_rng(seed)
    cfg = build_group_goal_scenario(rng.uniform(0.1, 2, 3), rng.uniform(0.1, 2, 3))
    ref = _ref(rng, 4, cfg.dims)
    for r in cfg.rewards():
        e = taylor_expand(r, ref)
        zb = rng.normal(scale=3, size=(4, cfg.dims.nz))
        truth = r.value(ref.stage_vectors() + zb)
        np.testing.assert_allclose(e.evaluate(zb), truth, rtol=1e-10)


@given(seed=st.integers(0, 2**31))
def test_expansion_symmetry(seed):
    rng = np.random.default_rng(seed)
    for cfg in (build_zebra_scenario(False), build_zebra_scenario(True)):
        ref = _ref(rng, 3, cfg.dims)
        for r in cfg.rewards():
            e = taylor_expand(r, ref)
            np.testing.assert_array_equal(e.H, np.swapaxes(e.H, -1, -2))
            np.testing.assert_array_equal(e.block("xj", "xi"), np.swapaxes(e.block("xi", "xj"), -1, -2))
            np.testing.assert_array_equal(e.block("ui", "xj"), np.swapaxes(e.block("xj", "ui"), -1, -2))


def test_custom_term_fd_derivatives():
    fn = lambda xi, xj, ui, uj: float(np.sin(xi[0]) * xj[0] + ui[0] ** 2 * uj[0])
    term = CustomTerm(fn)
    z = np.array([0.3, -1.2, 0.7, 2.0])
    v, g, H = term.derivatives(z, D1)
    want_g = [np.cos(0.3) * -1.2, np.sin(0.3), 2 * 0.7 * 2.0, 0.7**2]
    want_H = np.zeros((4, 4))
    want_H[0, 0] = -np.sin(0.3) * -1.2
    want_H[0, 1] = want_H[1, 0] = np.cos(0.3)
    want_H[2, 2] = 2 * 2.0
    want_H[2, 3] = want_H[3, 2] = 2 * 0.7
    np.testing.assert_allclose(g, want_g, rtol=1e-8)
    np.testing.assert_allclose(H, want_H, atol=1e-6)
    with pytest.raises(InputError):
        term.to_dict()


def test_non_finite_derivative_reports_stage():
    d = D1
    term = CustomTerm(lambda xi, xj, ui, uj: float(np.log(ui[0])))
    ref = JointTrajectory(np.zeros((3, 1)), np.zeros((3, 1)), np.array([[1.0], [-1.0]]), np.zeros((2, 1)))
    with np.errstate(invalid="ignore", divide="ignore"), pytest.raises(NonFiniteDerivative) as info:
        taylor_expand(RewardModel([WeightedTerm(term, None, 1.0)], [], "i", d), ref)
    assert info.value.t == 2


def test_weighted_term_dict():
    wt = WeightedTerm.from_dict({"type": "state_quadratic", "of": "j", "target": [1.0], "theta_index": 2})
    assert wt.to_dict() == {"type": "state_quadratic", "of": "j", "target": [1.0], "theta_index": 2}
    with pytest.raises(MissingCoefficient):
        WeightedTerm.from_dict({"type": "coupled_action"})
    with pytest.raises(InputError):
        WeightedTerm.from_dict({"type": "banana", "weight": 1})


def test_reward_model_checks():
    with pytest.raises(DimensionMismatch):
        RewardModel([WeightedTerm(StateQuadratic("i"), 3)], [1.0], "i", D1)
    with pytest.raises(DimensionMismatch):
        RewardModel([WeightedTerm(StateQuadratic("i", components=(2,)), 0)], [1.0], "i", D1)


def test_scenario_reward_zero_deviation():
    cfg = build_zebra_scenario(True)
    integ = AgentDynamics("integrator", 1, 1)
    ref = DynamicsModel(integ, integ).rollout(JointState([-2.0], [4.0]), np.ones((3, 1)), -np.ones((3, 1)))
    for r in cfg.rewards():
        e = taylor_expand(r, ref)
        z = ref.stage_vectors()
        raw = sum(w * wt.term.value(z, cfg.dims) for w, wt in zip(r.weights(), r.terms))
        np.testing.assert_allclose(e.evaluate(np.zeros_like(z)), raw, rtol=0, atol=1e-12)
