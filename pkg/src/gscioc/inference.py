"""Maximum-likelihood reward inference from demonstrations.

Each demonstration serves as its own reference trajectory, so every
observed action sits at zero deviation and its log-likelihood under the
local stage policy is ``log N(0; nu_t, (-M~_t)^{-1})``.  The objective is the
sum over stages and agents, averaged over trajectories.

All trajectories are processed as one batch: rewards are linear in
``theta``, so the per-term Taylor expansions along every demonstration are
computed once and only re-weighted for each trial ``theta``.

When the reward Hessians and dynamics Jacobians are the same along every
demonstration (quadratic rewards, linear dynamics) the stage precisions are
shared and each ``nu`` is a linear function of that trajectory's reward
gradients.  The average log-likelihood is then ``c(theta) - 0.5 * mean_n
q(d_n)`` with ``q`` a quadratic form in the stacked feature gradients ``d_n``.
Replacing the ``N`` rows of ``d`` by the scaled right singular vectors of
``d / sqrt(N)`` preserves that mean exactly while shrinking the batch to the
rank of ``d`` (at most ``T * (n + m) + 1`` for the built-in terms).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import AgentId, JointTrajectory, LinearizedDynamics, linearize
from ._kernels import NOT_PD, SINGULAR, quadratic_game_loglik
from .errors import (
    IllConditioned,
    InputError,
    InsufficientSamples,
    NonFiniteObjective,
    NonPositiveDefinitePrecision,
    SingularMeanSystem,
    SolverError,
)
from .recursion import (
    ILL_CONDITIONED,
    gaussian_logpdf,
    gs_cioc_backward,
    m_cioc_backward,
    single_agent_cioc_backward,
    transition,
)
from .rewards import expand_features, expansion_from_features
from .scenarios import ScenarioConfig

log = logging.getLogger(__name__)

MODELS = ("gs-cioc", "single-agent", "m-cioc")


class Demonstration:
    """A batch of observed trajectories bound to a scenario's reward structure."""

    def __init__(self, trajectories: JointTrajectory, scenario: ScenarioConfig, compress: bool = True):
        if len(trajectories.batch_shape) == 0:
            trajectories = JointTrajectory.stack([trajectories])
        if len(trajectories.batch_shape) != 1 or trajectories.batch_shape[0] == 0:
            raise InsufficientSamples("demonstration needs a nonempty 1-D batch of trajectories")
        if trajectories.dims != scenario.dims:
            raise InputError(f"demonstration dims {trajectories.dims} do not match scenario dims {scenario.dims}")
        self.trajectories = trajectories
        self.scenario = scenario
        self.compress = compress
        self._cache = {}

    def __len__(self):
        return self.trajectories.batch_shape[0]

    @property
    def lin(self):
        if "lin" not in self._cache:
            lin = linearize(self.scenario.dynamics, self.trajectories)
            if all(_uniform(a) for a in (lin.A_i, lin.B_i, lin.A_j, lin.B_j)):
                lin = LinearizedDynamics(lin.A_i[0], lin.B_i[0], lin.A_j[0], lin.B_j[0])
            self._cache["lin"] = lin
        return self._cache["lin"]

    def features(self, agent):
        key = ("feat", AgentId.parse(agent))
        if key not in self._cache:
            vals, grads, hess = expand_features(self.scenario.reward(agent), self.trajectories)
            if _uniform(hess, axis=1):
                hess = hess[:, 0]
            self._cache[key] = (vals, grads, hess)
        return self._cache[key]

    @property
    def compressed(self) -> bool:
        """Whether the exact low-rank surrogate batch is in use."""
        if "compressed" not in self._cache:
            ok = self.compress and self.lin.A_i.ndim == 3
            ok = ok and all(self.features(k)[2].ndim == 4 for k in ("i", "j"))
            if ok:
                self._build_surrogate()
            self._cache["compressed"] = ok
        return self._cache["compressed"]

    def _build_surrogate(self):
        gi, gj = self.features("i")[1], self.features("j")[1]
        K_i, N = gi.shape[:2]
        D = np.concatenate([gi.transpose(1, 0, 2, 3).reshape(N, -1), gj.transpose(1, 0, 2, 3).reshape(N, -1)], axis=1)
        _, S, Vt = np.linalg.svd(D / np.sqrt(N), full_matrices=False)
        keep = S > S[0] * 1e-13 if S.size and S[0] > 0 else np.zeros(S.shape, bool)
        # row 0 is all zeros and evaluates the gradient-free part of the likelihood
        rows = np.vstack([np.zeros((1, D.shape[1])), S[keep, None] * Vt[keep]])
        split = gi[:, 0].size
        self._cache["surrogate"] = {
            "i": rows[:, :split].reshape((rows.shape[0], K_i) + gi.shape[2:]).transpose(1, 0, 2, 3),
            "j": rows[:, split:].reshape((rows.shape[0], gj.shape[0]) + gj.shape[2:]).transpose(1, 0, 2, 3),
        }

    def expansion(self, agent, theta, surrogate=False):
        vals, grads, hess = self.features(agent)
        if surrogate:
            grads = self._cache["surrogate"][AgentId.parse(agent).value]
            vals = np.zeros(grads.shape[:-1])
        return expansion_from_features(self.scenario.reward(agent, theta), (vals, grads, hess), theta, None if surrogate else self.trajectories)

    def subset(self, idx) -> "Demonstration":
        return Demonstration(self.trajectories[idx], self.scenario)


def _uniform(a, axis=0):
    """True when ``a`` does not vary along the trajectory axis."""
    first = np.take(a, [0], axis=axis)
    return bool(np.all(a == first))


def _zero_dev_logpdf(pol):
    """Per-trajectory sum over stages of ``log N(0; nu_t, precision_t^{-1})``."""
    return gaussian_logpdf(-pol.nu, pol.precision).sum(axis=-1)


def per_trajectory_log_likelihood(theta, demo: Demonstration, model="gs-cioc", surrogate=False) -> np.ndarray:
    """Log-likelihood of every demonstration (or of every surrogate row)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != demo.scenario.theta.shape:
        raise InputError(f"theta has {theta.size} entries, the reward structure expects {demo.scenario.theta.size}")
    try:
        e_i = demo.expansion("i", theta, surrogate)
        e_j = demo.expansion("j", theta, surrogate)
        if model == "gs-cioc":
            pol_i, pol_j = gs_cioc_backward(e_i, e_j, demo.lin)
            return _zero_dev_logpdf(pol_i) + _zero_dev_logpdf(pol_j)
        if model == "single-agent":
            pol_i = single_agent_cioc_backward(e_i, demo.lin, "i")
            pol_j = single_agent_cioc_backward(e_j, demo.lin, "j")
            return _zero_dev_logpdf(pol_i) + _zero_dev_logpdf(pol_j)
        if model == "m-cioc":
            if not demo.scenario.cooperative:
                raise InputError("the joint model needs a cooperative scenario")
            return _zero_dev_logpdf(m_cioc_backward(e_i, demo.lin))
    except SolverError as err:
        idx = getattr(err, "index", None)
        if idx is not None and not hasattr(err, "trajectory"):
            err.trajectory = idx[0]
            err.args = (f"{err.args[0]} (trajectory {idx[0]})",) + err.args[1:]
        raise
    raise InputError(f"unknown likelihood model {model!r}; expected one of {MODELS}")


def _own_mask(dims, agent):
    sl = dims.z_slices()
    mask = np.zeros(dims.nz, bool)
    mask[sl[f"x{agent}"]] = True
    mask[sl[f"u{agent}"]] = True
    return mask


def _kernel_log_likelihood(theta, demo: Demonstration, model):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != demo.scenario.theta.shape:
        raise InputError(f"theta has {theta.size} entries, the reward structure expects {demo.scenario.theta.size}")
    d = demo.scenario.dims
    e_i = demo.expansion("i", theta, surrogate=True)
    e_j = demo.expansion("j", theta, surrogate=True)
    Hi, Hj, gi, gj = e_i.H, e_j.H, e_i.g, e_j.g
    if model == "single-agent":
        # without cross blocks the two-agent recursion splits into two single-agent ones
        mi_, mj_ = _own_mask(d, "i"), _own_mask(d, "j")
        Hi = Hi * np.outer(mi_, mi_)
        Hj = Hj * np.outer(mj_, mj_)
        gi = gi * mi_
        gj = gj * mj_
    if "Tm" not in demo._cache:
        demo._cache["Tm"] = transition(*demo.lin.joint())
    ll, status, t, agent, worst = quadratic_game_loglik(Hi, Hj, gi, gj, demo._cache["Tm"], d.n, d.m_i, d.m_j)
    if status == NOT_PD:
        raise NonPositiveDefinitePrecision(int(t), "ij"[int(agent)])
    if status == SINGULAR:
        raise SingularMeanSystem(int(t), 1.0 / worst if worst else 0.0)
    if worst > ILL_CONDITIONED:
        warnings.warn(f"coupled mean system ill-conditioned (cond={worst:.3g})", IllConditioned, stacklevel=3)
    return ll


def log_likelihood(theta, demo: Demonstration, model="gs-cioc") -> float:
    """Average over trajectories of the summed stage log-densities of both agents."""
    if demo.compressed and model in ("gs-cioc", "single-agent"):
        ll = _kernel_log_likelihood(theta, demo, model)
        return float(ll[0] + np.sum(ll[1:] - ll[0]))
    if demo.compressed:
        ll = per_trajectory_log_likelihood(theta, demo, model, surrogate=True)
        # the first row is the zero-gradient baseline c(theta)
        return float(ll[0] + np.sum(ll[1:] - ll[0]))
    return float(np.mean(per_trajectory_log_likelihood(theta, demo, model)))


def fd_gradient(f: Callable, theta, rel_step=1e-5) -> np.ndarray:
    """Central differences with step ``rel_step * max(1, |theta_k|)``."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for k in range(theta.size):
        h = rel_step * max(1.0, abs(theta[k]))
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        g[k] = (f(tp) - f(tm)) / (2 * h)
    return g


def grad_log_likelihood(theta, demo: Demonstration, model="gs-cioc", fd_step=1e-5) -> np.ndarray:
    return fd_gradient(lambda th: log_likelihood(th, demo, model), theta, fd_step)


@dataclass
class InferenceConfig:
    theta0: Optional[np.ndarray] = None
    learning_rate: float = 1e-3
    max_iterations: int = 50000
    grad_tol: float = 0.0
    fd_step: float = 1e-5
    projection: bool = True
    model: str = "gs-cioc"
    stall_tol: float = 1e-9
    stall_window: int = 10
    max_halvings: int = 20
    gradient: Optional[Callable] = None  # (theta, demo) -> grad; defaults to finite differences

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be positive")
        if int(self.max_iterations) < 1:
            raise InputError("max_iterations must be at least 1")
        if self.model not in MODELS:
            raise InputError(f"unknown likelihood model {self.model!r}")


@dataclass
class InferenceResult:
    theta: np.ndarray
    objective: float
    iterations: int
    trace: list = field(default_factory=list)  # (iteration, objective, theta, step)
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "objective": self.objective,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "trace": [{"iteration": i, "objective": f, "theta": th.tolist(), "step": s} for i, f, th, s in self.trace],
        }


def infer(demo: Demonstration, cfg: InferenceConfig) -> InferenceResult:
    """Projected gradient ascent with backtracking on the log-likelihood."""
    theta = demo.scenario.theta.copy() if cfg.theta0 is None else np.atleast_1d(np.asarray(cfg.theta0, dtype=float)).copy()
    if cfg.projection:
        theta = np.maximum(theta, 0.0)

    def objective(th):
        try:
            return log_likelihood(th, demo, cfg.model)
        except SolverError:
            return -np.inf

    grad = cfg.gradient or (lambda th, d: fd_gradient(objective, th, cfg.fd_step))
    f = objective(theta)
    if not np.isfinite(f):
        raise NonFiniteObjective(0)
    trace = [(0, f, theta.copy(), 0.0)]
    stalls = 0
    reason = "max_iterations"
    it = 0
    for it in range(1, int(cfg.max_iterations) + 1):
        g = grad(theta, demo)
        if not np.all(np.isfinite(g)):
            raise NonFiniteObjective(it)
        if np.linalg.norm(g) <= cfg.grad_tol:
            reason = "grad_tol"
            it -= 1
            break
        step = cfg.learning_rate
        for _ in range(cfg.max_halvings + 1):
            cand = theta + step * g
            if cfg.projection:
                cand = np.maximum(cand, 0.0)
            fc = objective(cand)
            if np.isnan(fc):
                raise NonFiniteObjective(it)
            if fc >= f:
                break
            step *= 0.5
        else:
            reason = "stagnation"
            it -= 1
            break
        stalls = stalls + 1 if abs(fc - f) < cfg.stall_tol else 0
        theta, f = cand, fc
        trace.append((it, f, theta.copy(), step))
        if it % 500 == 0:
            log.info("iteration %d objective %.9g theta %s", it, f, np.array2string(theta, precision=4))
        if stalls >= cfg.stall_window:
            reason = "converged"
            break
    return InferenceResult(theta, f, it, trace, reason)
