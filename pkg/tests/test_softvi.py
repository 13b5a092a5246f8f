import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gscioc import softvi
from gscioc._accel import USE_NUMBA
from gscioc.core import AgentDynamics, Dims, DynamicsModel, JointState
from gscioc.errors import GridTooCoarse, InputError, InsufficientSamples, NoConvergence
from gscioc.experiments import quadratic_policies
from gscioc.softvi import Axis, GridSpec, joint_state_index, soft_vi_solve, tabular_rollout, write_policy_csv

from oracles import group_goal_1d, policy_gap

@pytest.fixture(scope="module")
def decoupled():
    cfg = group_goal_1d((0.2, 1.0, 0.0), T=3)
    res = soft_vi_solve(*cfg.rewards(), cfg.dynamics, GridSpec.default_for(cfg.dims, cfg.x0), cfg.T)
    return cfg, res


def test_zero_reward_is_uniform():
    cfg = group_goal_1d((0.0, 0.0, 0.0), T=2)
    grid = GridSpec.default_for(cfg.dims, cfg.x0, state_bins=21, action_bins=5)
    res = soft_vi_solve(*cfg.rewards(), cfg.dynamics, grid, cfg.T)
    np.testing.assert_allclose(res.policy_i.probs, 0.2, atol=1e-15)
    np.testing.assert_allclose(res.policy_j.probs, 0.2, atol=1e-15)


def test_matches_analytic_policy_default_grid(decoupled):
    cfg, res = decoupled
    pols = quadratic_policies(cfg)
    for agent in (0, 1):
        gm, gv = policy_gap(cfg, res, pols, agent)
        assert gm <= 0.05 and gv <= 0.05


def test_matches_analytic_policy_coupled():
    cfg = group_goal_1d(T=2)
    grid = GridSpec.default_for(cfg.dims, cfg.x0, state_bins=61)
    res = soft_vi_solve(*cfg.rewards(), cfg.dynamics, grid, cfg.T, sweep_tol=1e-8, max_sweeps=500)
    pols = quadratic_policies(cfg)
    for agent in (0, 1):
        gm, gv = policy_gap(cfg, res, pols, agent)
        assert gm <= 0.05 and gv <= 0.05


def test_refinement_shrinks_gap():
    cfg = group_goal_1d((0.2, 1.0, 0.0), T=3, x0=(4.0, -2.0))
    pi, _ = quadratic_policies(cfg)
    stage = pi.stage(1)
    gaps = []
    for bins, abins in ((11, 9), (21, 17), (41, 33), (81, 65)):
        grid = GridSpec.default_for(cfg.dims, cfg.x0, state_bins=bins, action_bins=abins, action_reach=8.0)
        res = soft_vi_solve(*cfg.rewards(), cfg.dynamics, grid, cfg.T)
        s = joint_state_index(grid, cfg.x0.x_i, cfg.x0.x_j)
        m = res.policy_i.mean()[0, s, 0]
        v = res.policy_i.variance()[0, s, 0]
        gaps.append(abs(m - pi.reference.actions[0, 0] - stage.nu[0]) + abs(v - stage.covariance[0, 0]))
    for a, b in zip(gaps, gaps[1:]):
        assert b < a or b < 1e-12


def test_large_rewards_do_not_overflow():
    cfg = group_goal_1d(T=2)
    big = cfg.with_theta(cfg.theta * 1e3)
    grid = GridSpec.default_for(cfg.dims, cfg.x0, state_bins=21, action_bins=9)
    with np.errstate(over="raise", invalid="raise"):
        res = soft_vi_solve(*big.rewards(), big.dynamics, grid, big.T, max_sweeps=500)
    for p in res:
        assert np.all(np.isfinite(p.probs))
        np.testing.assert_allclose(p.probs.sum(-1), 1.0, atol=1e-9)


@settings(max_examples=10)
@given(a=st.tuples(st.floats(0.0, 2.0), st.floats(0.05, 2.0), st.floats(0.0, 3.0)), tol=st.sampled_from([np.inf, 1e-6]))
def test_policies_are_distributions(a, tol):
    cfg = group_goal_1d(a, T=2)
    grid = GridSpec.default_for(cfg.dims, cfg.x0, state_bins=15, action_bins=7)
    res = soft_vi_solve(*cfg.rewards(), cfg.dynamics, grid, cfg.T, sweep_tol=tol, max_sweeps=2000)
    for p in res:
        assert np.all(p.probs >= 0)
        np.testing.assert_allclose(p.probs.sum(-1), 1.0, atol=1e-9)


def test_no_convergence():
    cfg = group_goal_1d(T=2)
    grid = GridSpec.default_for(cfg.dims, cfg.x0, state_bins=15, action_bins=7)
    with pytest.raises(NoConvergence):
        soft_vi_solve(*cfg.rewards(), cfg.dynamics, grid, cfg.T, max_sweeps=1)


def _backup_args(seed, S_i=5, S_j=4, A=3, T=3):
    rng = np.random.default_rng(seed)
    pol = rng.random((T, S_i * S_j, A))
    pol /= pol.sum(-1, keepdims=True)
    return (
        pol,
        rng.normal(size=(A, A)),
        rng.normal(size=S_i * S_j),
        rng.normal(size=(S_i * S_j, A, A)),
        rng.integers(0, S_i, size=(S_i, A)),
        rng.integers(0, S_j, size=(S_j, A)),
        S_j,
    )


@pytest.mark.skipif(not USE_NUMBA, reason="numba not active")
@pytest.mark.parametrize("own_first", [True, False])
def test_backup_kernels_agree(own_first):
    pol, Ru, Rx, Rfull, nxt_i, nxt_j, S_j = _backup_args(3)
    outs = []
    for fn in (softvi._backup_numba, softvi._backup_numpy):
        V = np.empty(Rx.size)
        out = np.empty_like(pol)
        if own_first:
            fn(pol, Ru, Rx, Rfull, nxt_i, nxt_j, S_j, True, V, out)
        else:
            fn(pol, Ru, Rx, Rfull, nxt_j, nxt_i, S_j, False, V, out)
        outs.append(out)
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-12, atol=1e-14)


@pytest.mark.skipif(not USE_NUMBA, reason="numba not active")
def test_sampling_kernels_agree():
    rng = np.random.default_rng(4)
    probs = rng.random((10, 6))
    probs /= probs.sum(-1, keepdims=True)
    states = rng.integers(0, 10, 500)
    u = rng.random(500)
    a, b = np.empty(500, np.int64), np.empty(500, np.int64)
    softvi._sample_numba(probs, states, u, a)
    softvi._sample_numpy(probs, states, u, b)
    np.testing.assert_array_equal(a, b)


def test_deterministic_tie_break_lowest_index():
    cfg = group_goal_1d((0.0, 0.0, 0.0), T=3)
    grid = GridSpec.default_for(cfg.dims, cfg.x0, state_bins=21, action_bins=5)
    res = soft_vi_solve(*cfg.rewards(), cfg.dynamics, grid, cfg.T)
    b = tabular_rollout(res, cfg.dynamics, cfg.x0, 2, deterministic=True)
    np.testing.assert_array_equal(b.trajectories.actions, grid.action_i[0].lo)


def test_rollout_validation_and_determinism(decoupled):
    cfg, res = decoupled
    with pytest.raises(InsufficientSamples):
        tabular_rollout(res, cfg.dynamics, cfg.x0, 0)
    a = tabular_rollout(res, cfg.dynamics, cfg.x0, 20, seed=3)
    b = tabular_rollout(res, cfg.dynamics, cfg.x0, 20, seed=3)
    np.testing.assert_array_equal(a.trajectories.actions, b.trajectories.actions)
    assert a.provenance == "soft-VI"


def test_rollout_statistics_match_analytic(decoupled):
    cfg, res = decoupled
    pi, pj = quadratic_policies(cfg)
    n = 4000
    b = tabular_rollout(res, cfg.dynamics, cfg.x0, n, seed=1)
    u = b.trajectories.actions[:, 0]
    for k, pol in enumerate((pi, pj)):
        mu = pol.reference.actions[0, k] + pol.nu[0, 0]
        sd = np.sqrt(pol.covariance[0, 0, 0])
        assert abs(u[:, k].mean() - mu) <= 4 * sd / np.sqrt(n)
        assert u[:, k].std(ddof=1) == pytest.approx(sd, rel=0.05)


def test_scope_guards():
    ax = Axis(-1, 1, 5)
    with pytest.raises(GridTooCoarse):
        GridSpec((ax,) * 3, (ax,), (ax,), (ax,))
    x0 = JointState([0.0, 0.0, 0.0], [0.0])
    with pytest.raises(GridTooCoarse):
        GridSpec.default_for(Dims(3, 1, 3, 1), x0)
    with pytest.raises(InputError):
        Axis(0, 1, 1)
    with pytest.raises(InputError):
        Axis(1, 1, 5)


def test_step_exceeding_range_refused():
    cfg = group_goal_1d(T=2)
    grid = GridSpec([(-1, 1, 5)], [(-1, 1, 5)], [(-5, 5, 5)], [(-1, 1, 3)])
    with pytest.raises(GridTooCoarse):
        soft_vi_solve(*cfg.rewards(), cfg.dynamics, grid, cfg.T)


def test_grid_dims_must_match():
    cfg = group_goal_1d(T=2)
    ax = (-1, 1, 5)
    with pytest.raises(GridTooCoarse):
        soft_vi_solve(*cfg.rewards(), cfg.dynamics, GridSpec([ax, ax], [ax], [ax], [ax]), cfg.T)


def test_nonlinear_dynamics_supported():
    s = AgentDynamics("tanh_integrator", 1, 1, {"vmax": 2.0})
    cfg = group_goal_1d(T=2)
    dyn = DynamicsModel(s, s)
    res = soft_vi_solve(*cfg.rewards(), dyn, GridSpec.default_for(cfg.dims, cfg.x0, state_bins=31, action_bins=9), cfg.T)
    np.testing.assert_allclose(res.policy_i.probs.sum(-1), 1.0, atol=1e-9)


def test_policy_csv_golden_header():
    cfg = group_goal_1d((0.0, 0.0, 0.0), T=1)
    grid = GridSpec([(-1, 1, 3)], [(-1, 1, 3)], [(-1, 1, 3)], [(-1, 1, 3)])
    res = soft_vi_solve(*cfg.rewards(), cfg.dynamics, grid, cfg.T)
    lines = write_policy_csv(res).splitlines()
    assert lines[0] == '# gscioc-vi-policy v1 grid={"state_i":[[-1,1,3]],"state_j":[[-1,1,3]],"action_i":[[-1,1,3]],"action_j":[[-1,1,3]]}'
    assert lines[1] == "agent,t,xi0,xj0,mean0,std0"
    assert lines[2].startswith("i,1,-1.0,-1.0,0.0,0.816496580927726")
    assert len(lines) == 2 + 2 * 9
    assert len(write_policy_csv(res, stride=2).splitlines()) == 2 + 2 * 4
