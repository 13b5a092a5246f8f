import numpy as np
import pytest
from hypothesis import given, strategies as st

from gscioc.core import (
    AgentDynamics,
    AgentId,
    Dims,
    DynamicsModel,
    JointState,
    JointTrajectory,
    from_deviation,
    linearize,
    to_deviation,
)
from gscioc.errors import DimensionMismatch, InputError, NonFiniteDerivative


def _traj(rng, T=4, dims=Dims(2, 1, 2, 1)):
    return JointTrajectory(
        rng.normal(size=(T + 1, dims.n_i)), rng.normal(size=(T + 1, dims.n_j)), rng.normal(size=(T, dims.m_i)), rng.normal(size=(T, dims.m_j))
    )


def test_agent_id_parse():
    assert AgentId.parse("i") is AgentId.I
    assert AgentId.parse(AgentId.J).other is AgentId.I
    with pytest.raises(InputError):
        AgentId.parse("k")


def test_dims_slices():
    d = Dims(2, 1, 3, 1)
    sl = d.z_slices()
    assert (sl["xi"], sl["xj"], sl["ui"], sl["uj"]) == (slice(0, 2), slice(2, 3), slice(3, 6), slice(6, 7))
    assert d.nz == 7


def test_joint_state_rejects_nan():
    with pytest.raises(InputError):
        JointState([np.nan], [0.0])


def test_trajectory_shape_checks(rng):
    t = _traj(rng)
    with pytest.raises(DimensionMismatch):
        JointTrajectory(t.states_i, t.states_j[:-1], t.actions_i, t.actions_j)


def test_zero_deviation(rng):
    t = _traj(rng)
    xb, ub = to_deviation(t, t)
    assert not xb.any() and not ub.any()


def test_deviation_subtraction():
    ref = JointTrajectory(np.full((2, 1), 20.0), np.zeros((2, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
    obs = JointTrajectory(np.array([[20.0], [21.0]]), np.zeros((2, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
    xb, _ = to_deviation(obs, ref)
    assert xb[..., 0].tolist() == [0.0, 1.0]


@given(seed=st.integers(0, 2**31))
def test_deviation_round_trip(seed):
    rng = np.random.default_rng(seed)
    t, ref = _traj(rng), _traj(rng)
    back = from_deviation(*to_deviation(t, ref), ref)
    assert back.allclose(t, atol=1e-12)


def test_deviation_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        to_deviation(_traj(rng, T=3), _traj(rng, T=4))


def test_linearize_integrator():
    integ = AgentDynamics("integrator", 2, 2)
    dyn = DynamicsModel(integ, integ)
    ref = dyn.rollout(JointState([1, 2], [3, 4]), np.ones((5, 2)), -np.ones((5, 2)))
    lin = linearize(dyn, ref)
    for M in (lin.A_i, lin.B_i, lin.A_j, lin.B_j):
        np.testing.assert_array_equal(M, np.broadcast_to(np.eye(2), (5, 2, 2)))


def test_linearize_pure_input_map():
    lin_dyn = AgentDynamics("linear", 1, 1, {"A": [[0.0]], "B": [[1.0]]})
    dyn = DynamicsModel(lin_dyn, lin_dyn)
    lin = linearize(dyn, dyn.rollout(JointState([1.0], [2.0]), np.ones((3, 1)), np.ones((3, 1))))
    assert np.all(lin.A_i == 0) and np.all(lin.B_j == 1)


def test_linearize_sine_map():
    s = AgentDynamics("sin_integrator", 1, 1)
    dyn = DynamicsModel(s, s)
    lin = linearize(dyn, dyn.rollout(JointState([0.0], [0.0]), np.zeros((2, 1)), np.full((2, 1), 0.3)))
    np.testing.assert_allclose(lin.B_i, 1.0)
    np.testing.assert_allclose(lin.B_j, np.cos(0.3))


def test_custom_dynamics_fd_jacobian():
    c = AgentDynamics("custom", 1, 1, fn=lambda x, u: x + u**3)
    dyn = DynamicsModel(c, c)
    lin = linearize(dyn, dyn.rollout(JointState([0.0], [0.0]), np.full((1, 1), 0.5), np.full((1, 1), 1.0)))
    np.testing.assert_allclose(lin.B_i, 0.75, rtol=1e-8)
    np.testing.assert_allclose(lin.B_j, 3.0, rtol=1e-8)


def test_linearize_non_finite():
    c = AgentDynamics("custom", 1, 1, fn=lambda x, u: x + np.sqrt(u))
    dyn = DynamicsModel(c, c)
    ref = JointTrajectory(np.zeros((3, 1)), np.zeros((3, 1)), np.array([[1.0], [-1.0]]), np.ones((2, 1)))
    with np.errstate(invalid="ignore"), pytest.raises(NonFiniteDerivative) as info:
        linearize(dyn, ref)
    assert info.value.t == 2


def test_rollout_feasible(rng):
    integ = AgentDynamics("tanh_integrator", 2, 2, {"vmax": 0.5})
    dyn = DynamicsModel(integ, integ)
    t = dyn.rollout(JointState([0, 0], [1, 1]), rng.normal(size=(6, 2)), rng.normal(size=(6, 2)))
    assert dyn.residual(t) <= 1e-12


def test_trajectory_dict_round_trip(rng):
    t = _traj(rng)
    assert JointTrajectory.from_dict(t.to_dict()).allclose(t)
    with pytest.raises(InputError):
        JointTrajectory.from_dict({"states_i": []})


def test_stack_and_index(rng):
    ts = [_traj(rng) for _ in range(3)]
    b = JointTrajectory.stack(ts)
    assert b.batch_shape == (3,) and len(b) == 3
    assert b[1].allclose(ts[1])
    with pytest.raises(InputError):
        JointTrajectory.stack([])


def test_dynamics_dict():
    lin_dyn = AgentDynamics("linear", 1, 1, {"A": [[0.5]], "B": [[2.0]]})
    assert lin_dyn.to_dict() == {"type": "linear", "params": {"A": [[0.5]], "B": [[2.0]]}}
    with pytest.raises(DimensionMismatch):
        AgentDynamics("integrator", 2, 1)
    with pytest.raises(InputError):
        AgentDynamics("warp", 1, 1)
