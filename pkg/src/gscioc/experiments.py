"""The two experiments end to end: group goal (sampling, statistics, inference) and zebra crossing.

Used by ``gscioc reproduce`` and the acceptance tests.
"""
from __future__ import annotations

import logging
import warnings

import numpy as np

from .core import linearize
from .inference import Demonstration, InferenceConfig, infer
from .iterative import IterationConfig, iterative_gs_cioc, standing_still
from .plotting import plot_batches
from .recursion import gs_cioc_backward, m_cioc_backward
from .rewards import taylor_expand
from .rollout import RolloutBatch, batch_statistics, mean_rollout, sample_rollouts, variance_ratio, write_batch_csv
from .scenarios import ScenarioConfig, build_group_goal_scenario, build_zebra_scenario

log = logging.getLogger(__name__)

COOPERATIVE = (0.2, 1.0, 3.0)
HETEROGENEOUS = ((0.4, 1.5, 2.5), (0.2, 1.0, 3.0))


def quadratic_policies(cfg: ScenarioConfig, joint=False):
    """GS-CIOC pair (or the joint M-CIOC policy) around standing still; exact for quadratic games."""
    ref = standing_still(cfg.dynamics, cfg.x0, cfg.T)
    lin = linearize(cfg.dynamics, ref)
    if joint:
        return m_cioc_backward(taylor_expand(cfg.shared_reward(), ref), lin), None
    ri, rj = cfg.rewards()
    return gs_cioc_backward(taylor_expand(ri, ref), taylor_expand(rj, ref), lin)


def demonstrations(cfg: ScenarioConfig, n=None, seed=None, joint=False) -> RolloutBatch:
    n = cfg.n_rollouts if n is None else n
    seed = cfg.seed if seed is None else seed
    pi, pj = quadratic_policies(cfg, joint)
    return sample_rollouts(pi, pj, cfg.dynamics, cfg.x0, n, seed, provenance="M-CIOC" if joint else "GS-CIOC")


def cooperative_comparison(n=2000, seed=0) -> dict:
    """GS-CIOC vs M-CIOC roll-outs on the cooperative group-goal game."""
    cfg = build_group_goal_scenario(COOPERATIVE)
    gs = demonstrations(cfg, n, seed)
    m = demonstrations(cfg, n, seed, joint=True)
    s_gs, s_m = batch_statistics(gs), batch_statistics(m)
    pi, pj = quadratic_policies(cfg)
    pm, _ = quadratic_policies(cfg, joint=True)
    mean_gs = mean_rollout(pi, pj, cfg.dynamics, cfg.x0)
    mean_m = mean_rollout(pm, None, cfg.dynamics, cfg.x0)
    gap = max(np.max(np.abs(mean_gs.states - mean_m.states)), np.max(np.abs(mean_gs.actions - mean_m.actions)))
    return {
        "scenario": cfg,
        "gs": gs,
        "m": m,
        "stats_gs": s_gs,
        "stats_m": s_m,
        "variance_ratio": variance_ratio(s_m, s_gs),
        "mean_gap": float(gap),
        "initial_displacement": float(np.max(np.abs(cfg.x0.joint))),
    }


def recover(cfg: ScenarioConfig, batch: RolloutBatch, model="gs-cioc", theta0=None, **kw):
    theta0 = np.ones_like(cfg.theta) if theta0 is None else theta0
    return infer(Demonstration(batch.trajectories, cfg), InferenceConfig(theta0=theta0, model=model, **kw))


def implied_scales(estimate, truth):
    """Per-component ratio estimate / truth and its within-agent relative spread."""
    r = np.asarray(estimate, float) / np.asarray(truth, float)
    return r, float((r.max() - r.min()) / r.min())


def zebra_solution(social: bool, max_iterations=300, eta=0.5, coefficients=None):
    """Iterative GS-CIOC from both agents standing still."""
    cfg = build_zebra_scenario(social, coefficients)
    ri, rj = cfg.rewards()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = iterative_gs_cioc(ri, rj, cfg.dynamics, standing_still(cfg.dynamics, cfg.x0, cfg.T), IterationConfig(eta=eta, max_iterations=max_iterations))
    return cfg, res


def zebra_summary(cfg, res, steps=4) -> dict:
    """Early pedestrian progress and whether the car stays before the crossing until the pedestrian clears it."""
    ped = res.reference.states_i[:, 0]
    car = res.reference.states_j[:, 0]
    uncleared = ped <= 0
    return {
        "pedestrian": ped.tolist(),
        "car": car.tolist(),
        "early_displacement": float(ped[steps] - ped[0]),
        "car_yields": bool(np.all(car[uncleared] > 0)),
        "converged": res.converged,
        "iterations": res.iterations,
    }


def reproduce(run, seed=0, quick=False, skip_inference=False) -> dict:
    """Full pipeline; writes artifacts through ``run.write`` and returns a summary."""
    n = 200 if quick else 2000
    summary = {"n_rollouts": n, "seed": seed}

    coop = cooperative_comparison(n, seed)
    run.write("group_goal_gs.csv", write_batch_csv(coop["gs"]))
    run.write("group_goal_m.csv", write_batch_csv(coop["m"]))
    run.write("group_goal_actions.svg", plot_batches([coop["gs"], coop["m"]], ["GS-CIOC", "M-CIOC"], "actions", 0, "group goal: actions (x)"))
    summary["cooperative"] = {
        "correlation_gs": coop["stats_gs"].correlation,
        "correlation_m": coop["stats_m"].correlation,
        "variance_ratio_m_over_gs": coop["variance_ratio"],
        "mean_gap": coop["mean_gap"],
    }
    log.info("cooperative statistics %s", summary["cooperative"])

    if not skip_inference:
        kw = {"max_iterations": 2000} if quick else {}
        inf = {}
        cfg = coop["scenario"]
        inf["gs_on_gs"] = recover(cfg, coop["gs"], **kw).theta.tolist()
        inf["gs_on_m"] = recover(cfg, coop["m"], **kw).theta.tolist()
        het = build_group_goal_scenario(*HETEROGENEOUS)
        het_batch = demonstrations(het, n, seed)
        run.write("group_goal_heterogeneous.csv", write_batch_csv(het_batch))
        inf["gs_on_heterogeneous"] = recover(het, het_batch, **kw).theta.tolist()
        sa = recover(het, het_batch, "single-agent", **kw).theta
        inf["single_agent_on_heterogeneous"] = sa.tolist()
        truth = np.concatenate(HETEROGENEOUS)
        inf["single_agent_scales"] = [implied_scales(sa[k : k + 3], truth[k : k + 3])[0].tolist() for k in (0, 3)]
        summary["inference"] = inf
        log.info("inference %s", inf)

    zebra = {}
    for social in (False, True):
        cfg, res = zebra_solution(social)
        name = cfg.name
        batch = sample_rollouts(res.policy_i, res.policy_j, cfg.dynamics, cfg.x0, n, seed, provenance="iterative GS-CIOC")
        run.write(f"{name}_gs.csv", write_batch_csv(batch))
        zebra[name] = zebra_summary(cfg, res)
        batches, labels = [batch], ["GS-CIOC"]
        if not quick:
            from .softvi import GridSpec, soft_vi_solve, tabular_rollout

            ri, rj = cfg.rewards()
            vi = soft_vi_solve(ri, rj, cfg.dynamics, GridSpec.default_for(cfg.dims, cfg.x0), cfg.T)
            vb = tabular_rollout(vi, cfg.dynamics, cfg.x0, n, seed)
            run.write(f"{name}_vi.csv", write_batch_csv(vb))
            batches.append(vb)
            labels.append("soft VI")
            zebra[name]["vi_mean_pedestrian"] = vb.trajectories.states_i[..., 0].mean(axis=0).tolist()
            zebra[name]["vi_mean_car"] = vb.trajectories.states_j[..., 0].mean(axis=0).tolist()
        run.write(f"{name}_states.svg", plot_batches(batches, labels, "states", 0, f"{name}: positions"))
    summary["zebra"] = zebra
    return summary
