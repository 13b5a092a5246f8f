import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gscioc.errors import DivergentTrajectory, InputError, NonConvergent
from gscioc.experiments import zebra_solution, zebra_summary
from gscioc.iterative import IterationConfig, iterative_gs_cioc, standing_still
from gscioc.scenarios import build_group_goal_scenario, build_zebra_scenario


def _random_start(cfg, seed, scale=5.0):
    rng = np.random.default_rng(seed)
    d = cfg.dims
    return cfg.dynamics.rollout(cfg.x0, rng.normal(scale=scale, size=(cfg.T, d.m_i)), rng.normal(scale=scale, size=(cfg.T, d.m_j)))


@given(seed=st.integers(0, 2**31))
def test_quadratic_game_converges_in_one_iteration(seed):
    cfg = build_group_goal_scenario((0.4, 1.5, 2.5), (0.2, 1.0, 3.0))
    res = iterative_gs_cioc(*cfg.rewards(), cfg.dynamics, _random_start(cfg, seed), IterationConfig(eta=1.0, convergence_tol=1e-8))
    assert res.converged and res.iterations == 2
    assert res.log[1].delta <= 1e-8


def test_quadratic_fixed_point_reference_independent():
    cfg = build_group_goal_scenario()
    out = []
    for seed in (1, 2):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            res = iterative_gs_cioc(*cfg.rewards(), cfg.dynamics, _random_start(cfg, seed), IterationConfig(eta=0.5, convergence_tol=1e-10))
        out.append(res)
    np.testing.assert_allclose(out[0].reference.states, out[1].reference.states, atol=1e-6)
    a, b = out[0].policy_i.absolute(), out[1].policy_i.absolute()
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, atol=1e-6)


def test_quadratic_reward_monotone_under_damping():
    cfg = build_group_goal_scenario()
    res = iterative_gs_cioc(*cfg.rewards(), cfg.dynamics, standing_still(cfg.dynamics, cfg.x0, cfg.T), IterationConfig(eta=0.5))
    rewards = np.array([r.reward for r in res.log])
    assert np.all(np.diff(rewards) >= -1e-9 * np.abs(rewards[:-1]))


def test_non_convergence_is_flagged():
    cfg = build_zebra_scenario(False)
    ri, rj = cfg.rewards()
    with pytest.warns(NonConvergent):
        res = iterative_gs_cioc(ri, rj, cfg.dynamics, standing_still(cfg.dynamics, cfg.x0, cfg.T), IterationConfig(max_iterations=2))
    assert not res.converged and res.iterations == 2
    assert res.final_delta == res.log[-1].delta


def test_divergence_detected():
    cfg = build_group_goal_scenario()
    with pytest.raises(DivergentTrajectory):
        iterative_gs_cioc(*cfg.rewards(), cfg.dynamics, _random_start(cfg, 0), IterationConfig(state_bound=1.0))


def test_config_and_input_validation():
    with pytest.raises(InputError):
        IterationConfig(eta=0.0)
    with pytest.raises(InputError):
        IterationConfig(max_iterations=0)
    cfg = build_group_goal_scenario()
    ref = standing_still(cfg.dynamics, cfg.x0, cfg.T)
    xi = ref.states_i.copy()
    xi[-1] += 1.0
    bad = type(ref)(xi, ref.states_j, ref.actions_i, ref.actions_j)
    with pytest.raises(InputError):
        iterative_gs_cioc(*cfg.rewards(), cfg.dynamics, bad)


def test_zebra_log_records():
    cfg, res = zebra_solution(False)
    assert res.converged
    rec = res.log[-1].to_dict()
    assert set(rec) == {"iteration", "delta", "reward", "regularization", "repairs"}
    assert res.log[-1].delta < IterationConfig().convergence_tol
    s = zebra_summary(cfg, res)
    assert s["car_yields"]
