"""Iterative GS-CIOC for non-quadratic rewards and nonlinear dynamics.

Each iteration expands the rewards and linearizes the dynamics around the
current reference, runs the two-agent backward pass and replaces the
reference by a deterministic roll-out of the ``eta``-scaled policy means
(``u = u_ref + eta * (nu + K x_bar)``, covariance ignored).  There is no
convergence guarantee; hitting ``max_iterations`` returns the last policies
with ``converged = False`` and a :class:`NonConvergent` warning.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import DynamicsModel, JointTrajectory, linearize
from .errors import DivergentTrajectory, InputError, NonConvergent
from .recursion import PolicySequence, gs_cioc_backward
from .rewards import RewardModel, taylor_expand
from .rollout import mean_rollout

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterationConfig:
    eta: float = 0.5
    max_iterations: int = 100
    convergence_tol: float = 1e-6
    regularization: float = 1e-6
    state_bound: float = 1e6

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise InputError(f"eta must lie in (0, 1], got {self.eta}")
        if int(self.max_iterations) < 1:
            raise InputError("max_iterations must be at least 1")
        if self.convergence_tol < 0 or self.regularization < 0:
            raise InputError("tolerances must be nonnegative")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    delta: float
    reward: float
    regularization: float
    repairs: int = 0

    def to_dict(self):
        return {
            "iteration": self.iteration,
            "delta": self.delta,
            "reward": self.reward,
            "regularization": self.regularization,
            "repairs": self.repairs,
        }


@dataclass
class IterativeResult:
    policy_i: PolicySequence
    policy_j: PolicySequence
    reference: JointTrajectory
    log: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.log)

    @property
    def final_delta(self) -> float:
        return self.log[-1].delta if self.log else float("nan")

    def __iter__(self):
        return iter((self.policy_i, self.policy_j, self.reference, self.log))


def total_reward(rewards, traj: JointTrajectory) -> float:
    z = traj.stage_vectors()
    return float(sum(np.sum(r.value(z)) for r in rewards))


def local_policies(reward_i: RewardModel, reward_j: RewardModel, dynamics: DynamicsModel, reference: JointTrajectory, *, regularize=False, lam0=1e-6):
    """GS-CIOC policies of both agents around ``reference``."""
    lin = linearize(dynamics, reference)
    return gs_cioc_backward(taylor_expand(reward_i, reference), taylor_expand(reward_j, reference), lin, regularize=regularize, lam0=lam0)


def iterative_gs_cioc(reward_i: RewardModel, reward_j: RewardModel, dynamics: DynamicsModel, initial: JointTrajectory, cfg: IterationConfig = IterationConfig()) -> IterativeResult:
    if initial.batch_shape:
        raise InputError("the iterative solver works on a single initial trajectory")
    if dynamics.residual(initial) > 1e-9:
        raise InputError("initial trajectory is not dynamically feasible")
    ref = initial
    x0 = JointTrajectory.x0.fget(initial)
    records = []
    converged = False
    regularize = cfg.regularization > 0
    for it in range(1, int(cfg.max_iterations) + 1):
        pol_i, pol_j = local_policies(reward_i, reward_j, dynamics, ref, regularize=regularize, lam0=cfg.regularization or 1e-6)
        new = mean_rollout(pol_i, pol_j, dynamics, x0, cfg.eta)
        norm = float(np.max(np.abs(new.states)))
        if not np.isfinite(norm) or norm > cfg.state_bound:
            raise DivergentTrajectory(it, norm)
        delta = float(max(np.max(np.abs(new.states - ref.states)), np.max(np.abs(new.actions - ref.actions))))
        lam = max((r[2] for r in pol_i.regularization), default=0.0)
        rec = IterationRecord(it, delta, total_reward((reward_i, reward_j), new), lam, len(pol_i.regularization))
        records.append(rec)
        log.debug("iteration %d delta %.3g reward %.6g", it, delta, rec.reward)
        ref = new
        if delta < cfg.convergence_tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"iterative GS-CIOC stopped after {cfg.max_iterations} iterations (last change {records[-1].delta:.3g})",
            NonConvergent,
            stacklevel=2,
        )
    pol_i, pol_j = local_policies(reward_i, reward_j, dynamics, ref, regularize=regularize, lam0=cfg.regularization or 1e-6)
    return IterativeResult(pol_i, pol_j, ref, records, converged)


def standing_still(dynamics: DynamicsModel, x0, T: int) -> JointTrajectory:
    """Initial guess with zero actions (agents standing still under integrator dynamics)."""
    d = dynamics.dims
    return dynamics.rollout(x0, np.zeros((T, d.m_i)), np.zeros((T, d.m_j)))
