"""Discretized soft value iteration for two agents.

The baseline alternates best responses: agent ``i`` runs a finite-horizon
soft-Bellman backward pass over the joint state grid while agent ``j``'s
tabular policy is held fixed (its action is marginalized), then the roles
swap, until neither policy moves by more than ``sweep_tol`` in total
variation.  GS-CIOC instead updates both policies in parallel, so the two
methods can settle on slightly different solutions.

Grids: each agent's state lives on a regular grid of at most two dimensions;
the joint grid is the product.  Next states are snapped to the nearest grid
point (clipped at the border).  Dynamics are decoupled, so the snapped
successor of a joint state factors into per-agent lookup tables.

Rewards are tabulated once.  Terms that only read states are evaluated on
the grid points, terms that only read actions on the action grid, and
anything else on the full (state, action_i, action_j) product, which is
size-guarded.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from ._accel import USE_NUMBA, njit, prange
from .core import AgentId, Dims, DynamicsModel, JointState, JointTrajectory
from .errors import GridTooCoarse, InputError, InsufficientSamples, NoConvergence
from .rewards import ActionQuadratic, CoupledAction, RewardModel, StateQuadratic, ZebraInteraction
from .rollout import RolloutBatch, stream

STATE_ONLY = (StateQuadratic, ZebraInteraction)
ACTION_ONLY = (ActionQuadratic, CoupledAction)
MAX_TABLE = 60_000_000


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    bins: int

    def __post_init__(self):
        if int(self.bins) < 2:
            raise InputError("grid axes need at least two bins")
        if not self.hi > self.lo:
            raise InputError(f"grid axis needs hi > lo, got [{self.lo}, {self.hi}]")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, int(self.bins))

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (int(self.bins) - 1)

    def snap(self, x):
        k = np.rint((np.asarray(x, dtype=float) - self.lo) / self.step)
        return np.clip(k, 0, int(self.bins) - 1).astype(np.int64)


@dataclass(frozen=True)
class GridSpec:
    """Per-agent state and action axes (lists of :class:`Axis`)."""

    state_i: tuple
    state_j: tuple
    action_i: tuple
    action_j: tuple

    def __post_init__(self):
        for name in ("state_i", "state_j", "action_i", "action_j"):
            axes = tuple(a if isinstance(a, Axis) else Axis(*a) for a in getattr(self, name))
            object.__setattr__(self, name, axes)
        for axes in (self.state_i, self.state_j):
            if len(axes) > 2:
                raise GridTooCoarse("soft value iteration supports at most two state dimensions per agent")

    def states(self, agent):
        return self.state_i if AgentId.parse(agent) is AgentId.I else self.state_j

    def actions(self, agent):
        return self.action_i if AgentId.parse(agent) is AgentId.I else self.action_j

    def size(self, axes) -> int:
        return int(np.prod([a.bins for a in axes]))

    @property
    def n_states(self):
        return self.size(self.state_i) * self.size(self.state_j)

    @staticmethod
    def default_for(dims: Dims, x0: JointState, state_bins=121, action_bins=41, half_width=None, action_reach=None):
        """Symmetric grids around the origin.

        The action spacing is an integer multiple of the state spacing, so
        integrator successors land exactly on grid points.  The multiple is
        the smallest one whose action range covers ``action_reach`` (default:
        the largest initial offset, i.e. crossing to the origin in one step).
        """
        if dims.n_i > 2 or dims.n_j > 2:
            raise GridTooCoarse("soft value iteration supports at most two state dimensions per agent")
        scale = float(np.max(np.abs(x0.joint)))
        if half_width is None:
            half_width = max(10.0, 1.5 * scale)
        if action_reach is None:
            action_reach = max(1.0, scale)
        dx = 2 * half_width / (state_bins - 1)
        k = max(1, int(np.ceil(action_reach / (dx * (action_bins - 1) / 2) - 1e-9)))
        da = k * dx * (action_bins - 1) / 2
        s = Axis(-half_width, half_width, state_bins)
        a = Axis(-da, da, action_bins)
        return GridSpec((s,) * dims.n_i, (s,) * dims.n_j, (a,) * dims.m_i, (a,) * dims.m_j)

    def to_dict(self):
        f = lambda axes: [[a.lo, a.hi, a.bins] for a in axes]
        return {"state_i": f(self.state_i), "state_j": f(self.state_j), "action_i": f(self.action_i), "action_j": f(self.action_j)}


def _mesh(axes):
    pts = np.meshgrid(*[a.points for a in axes], indexing="ij")
    return np.stack([p.ravel() for p in pts], axis=-1)


def _flat_index(axes, x):
    idx = np.zeros(np.shape(x)[:-1], dtype=np.int64)
    for k, a in enumerate(axes):
        idx = idx * a.bins + a.snap(x[..., k])
    return idx


@dataclass
class TabularPolicy:
    """``probs[t-1, s, a]``: probability of action index ``a`` at stage ``t`` in joint state ``s``."""

    probs: np.ndarray
    actions: np.ndarray  # (A, m) action values
    owner: AgentId

    @property
    def T(self):
        return self.probs.shape[0]

    def mean(self):
        return np.einsum("tsa,am->tsm", self.probs, self.actions)

    def variance(self):
        mu = self.mean()
        return np.einsum("tsa,am->tsm", self.probs, self.actions**2) - mu**2


@dataclass
class _Tables:
    Ru: np.ndarray  # (A_i, A_j) action-only reward
    Rx: np.ndarray  # (S,) state-only reward on the grid
    Rfull: np.ndarray  # (S, A_i, A_j) mixed terms or empty


def _tables(reward: RewardModel, grid: GridSpec, dims: Dims):
    Xi, Xj = _mesh(grid.state_i), _mesh(grid.state_j)
    Ui, Uj = _mesh(grid.action_i), _mesh(grid.action_j)
    Si, Sj, Ai, Aj = len(Xi), len(Xj), len(Ui), len(Uj)
    w = reward.weights()
    Rx = np.zeros(Si * Sj)
    Ru = np.zeros((Ai, Aj))
    Rfull = np.zeros((0, 0, 0))
    for wk, wt in zip(w, reward.terms):
        if wk == 0:
            continue
        term = wt.term
        if isinstance(term, STATE_ONLY):
            z = np.zeros((Si, Sj, dims.nz))
            z[..., : dims.n_i] = Xi[:, None, :]
            z[..., dims.n_i : dims.n] = Xj[None, :, :]
            Rx += wk * term.value(z, dims).ravel()
        elif isinstance(term, ACTION_ONLY):
            z = np.zeros((Ai, Aj, dims.nz))
            z[..., dims.n : dims.n + dims.m_i] = Ui[:, None, :]
            z[..., dims.n + dims.m_i :] = Uj[None, :, :]
            Ru += wk * term.value(z, dims)
        else:
            if Si * Sj * Ai * Aj > MAX_TABLE:
                raise GridTooCoarse("mixed state/action reward term needs a full table that exceeds the size guard")
            if Rfull.size == 0:
                Rfull = np.zeros((Si * Sj, Ai, Aj))
            z = np.zeros((Si, Sj, Ai, Aj, dims.nz))
            z[..., : dims.n_i] = Xi[:, None, None, None, :]
            z[..., dims.n_i : dims.n] = Xj[None, :, None, None, :]
            z[..., dims.n : dims.n + dims.m_i] = Ui[None, None, :, None, :]
            z[..., dims.n + dims.m_i :] = Uj[None, None, None, :, :]
            Rfull += wk * term.value(z, dims).reshape(Si * Sj, Ai, Aj)
    return _Tables(Ru, Rx, Rfull)


def _successors(dyn, state_axes, action_axes):
    """``nxt[s, a]``: snapped successor index for one agent."""
    X = _mesh(state_axes)
    U = _mesh(action_axes)
    Xn = dyn.step(X[:, None, :], U[None, :, :])
    if not np.all(np.isfinite(Xn)):
        raise GridTooCoarse("dynamics produce non-finite successors on the grid")
    width = np.array([a.hi - a.lo for a in state_axes])
    if np.any(np.max(np.abs(Xn - X[:, None, :]), axis=(0, 1)) > width):
        raise GridTooCoarse("a single dynamics step can leave the whole state range; widen the state grid")
    return _flat_index(state_axes, Xn)


# --------------------------------------------------------------------------- kernels


@njit(cache=True, parallel=True)
def _backup_numba(pol_other, Ru, Rx, Rfull, nxt_own, nxt_other, s_other_count, own_first, V, out_probs):
    """One agent's finite-horizon soft backward pass against a fixed opponent policy.

    ``own_first`` tells whether the owner is agent i (its index is the slow
    factor of the joint state).  Writes ``out_probs`` (T, S, A_own); ``V`` is
    scratch of size S.
    """
    T, S, Ao = out_probs.shape
    Ax = pol_other.shape[2]
    full = Rfull.shape[0] > 0
    U = np.empty(S)
    for s in range(S):
        V[s] = 0.0
    for t in range(T - 1, -1, -1):
        for s in range(S):
            U[s] = Rx[s] + V[s]
        for s in prange(S):
            Q = np.empty(Ao)
            if own_first:
                so = s // s_other_count
                sx = s % s_other_count
            else:
                sx = s // s_other_count
                so = s % s_other_count
            for a in range(Ao):
                acc = 0.0
                no = nxt_own[so, a]
                for b in range(Ax):
                    p = pol_other[t, s, b]
                    if p == 0.0:
                        continue
                    nx = nxt_other[sx, b]
                    if own_first:
                        sn = no * s_other_count + nx
                        r = Ru[a, b]
                        if full:
                            r += Rfull[s, a, b]
                    else:
                        sn = nx * s_other_count + no
                        r = Ru[b, a]
                        if full:
                            r += Rfull[s, b, a]
                    acc += p * (r + U[sn])
                Q[a] = acc
            mx = Q[0]
            for a in range(1, Ao):
                if Q[a] > mx:
                    mx = Q[a]
            tot = 0.0
            for a in range(Ao):
                e = np.exp(Q[a] - mx)
                out_probs[t, s, a] = e
                tot += e
            for a in range(Ao):
                out_probs[t, s, a] /= tot
            V[s] = mx + np.log(tot)
        # V now holds the value at t-1 for every state; it is consumed by stage t-1


def _backup_numpy(pol_other, Ru, Rx, Rfull, nxt_own, nxt_other, s_other_count, own_first, V, out_probs):
    T, S, Ao = out_probs.shape
    So = nxt_own.shape[0]
    Sx = nxt_other.shape[0]
    full = Rfull.shape[0] > 0
    Rab = Ru if own_first else Ru.T  # (A_own, A_other)
    V[:] = 0.0
    for t in range(T - 1, -1, -1):
        U = Rx + V
        if own_first:
            sn = nxt_own[:, None, :, None] * s_other_count + nxt_other[None, :, None, :]  # (So, Sx, Ao, Ax)
        else:
            sn = nxt_other[None, :, None, :] * s_other_count + nxt_own[:, None, :, None]  # indexed (so, sx)
        Unext = U[sn]
        if own_first:
            Unext = Unext.reshape(S, Ao, -1)
        else:
            Unext = Unext.transpose(1, 0, 2, 3).reshape(S, Ao, -1)
        inner = Rab[None] + Unext
        if full:
            inner = inner + (Rfull if own_first else Rfull.transpose(0, 2, 1))
        Q = np.einsum("sab,sb->sa", inner, pol_other[t])
        mx = Q.max(axis=1, keepdims=True)
        e = np.exp(Q - mx)
        tot = e.sum(axis=1, keepdims=True)
        out_probs[t] = e / tot
        V[:] = (mx + np.log(tot))[:, 0]


def soft_backup(*args):
    if USE_NUMBA:
        return _backup_numba(*args)
    return _backup_numpy(*args)


@njit(cache=True)
def _sample_numba(probs_t, states, uniforms, out):
    for k in range(states.shape[0]):
        row = probs_t[states[k]]
        u = uniforms[k]
        c = 0.0
        pick = row.shape[0] - 1
        for a in range(row.shape[0]):
            c += row[a]
            if u < c:
                pick = a
                break
        out[k] = pick


def _sample_numpy(probs_t, states, uniforms, out):
    cdf = np.cumsum(probs_t[states], axis=1)
    idx = (uniforms[:, None] >= cdf).sum(axis=1)
    out[:] = np.minimum(idx, probs_t.shape[1] - 1)


def sample_categorical(probs_t, states, uniforms):
    """Inverse-CDF draw of one action index per row."""
    out = np.empty(states.shape[0], dtype=np.int64)
    args = (np.ascontiguousarray(probs_t), np.ascontiguousarray(states, dtype=np.int64), np.ascontiguousarray(uniforms), out)
    if USE_NUMBA:
        _sample_numba(*args)
    else:
        _sample_numpy(*args)
    return out


# --------------------------------------------------------------------------- solver


@dataclass
class SoftVIResult:
    policy_i: TabularPolicy
    policy_j: TabularPolicy
    grid: GridSpec
    sweeps: int
    change: float

    def __iter__(self):
        return iter((self.policy_i, self.policy_j))


def soft_vi_solve(reward_i: RewardModel, reward_j: RewardModel, dynamics: DynamicsModel, grid: GridSpec, T: int, sweep_tol: float = 1e-6, max_sweeps: int = 200) -> SoftVIResult:
    dims = dynamics.dims
    if len(grid.state_i) != dims.n_i or len(grid.state_j) != dims.n_j or len(grid.action_i) != dims.m_i or len(grid.action_j) != dims.m_j:
        raise GridTooCoarse("grid dimensions do not match the scenario")
    Si, Sj = grid.size(grid.state_i), grid.size(grid.state_j)
    Ai, Aj = grid.size(grid.action_i), grid.size(grid.action_j)
    if T * Si * Sj * max(Ai, Aj) > MAX_TABLE:
        raise GridTooCoarse(f"joint grid too large ({Si * Sj} states x {max(Ai, Aj)} actions x {T} stages)")
    nxt_i = _successors(dynamics.agent_i, grid.state_i, grid.action_i)
    nxt_j = _successors(dynamics.agent_j, grid.state_j, grid.action_j)
    tab_i = _tables(reward_i, grid, dims)
    tab_j = _tables(reward_j, grid, dims)
    S = Si * Sj
    pol_i = np.full((T, S, Ai), 1.0 / Ai)
    pol_j = np.full((T, S, Aj), 1.0 / Aj)
    V = np.empty(S)
    change = np.inf
    for sweep in range(1, int(max_sweeps) + 1):
        new_i = np.empty_like(pol_i)
        soft_backup(pol_j, tab_i.Ru, tab_i.Rx, tab_i.Rfull, nxt_i, nxt_j, Sj, True, V, new_i)
        new_j = np.empty_like(pol_j)
        soft_backup(new_i, tab_j.Ru, tab_j.Rx, tab_j.Rfull, nxt_j, nxt_i, Sj, False, V, new_j)
        change = max(
            0.5 * float(np.max(np.abs(new_i - pol_i).sum(axis=-1))),
            0.5 * float(np.max(np.abs(new_j - pol_j).sum(axis=-1))),
        )
        pol_i, pol_j = new_i, new_j
        if change < sweep_tol:
            break
    else:
        raise NoConvergence(max_sweeps, change)
    return SoftVIResult(
        TabularPolicy(pol_i, _mesh(grid.action_i), AgentId.I),
        TabularPolicy(pol_j, _mesh(grid.action_j), AgentId.J),
        grid,
        sweep,
        change,
    )


def joint_state_index(grid: GridSpec, x_i, x_j):
    return _flat_index(grid.state_i, x_i) * grid.size(grid.state_j) + _flat_index(grid.state_j, x_j)


def tabular_rollout(result: SoftVIResult, dynamics: DynamicsModel, x0: JointState, n: int, seed: int = 0, deterministic: bool = False) -> RolloutBatch:
    """Sample ``n`` trajectories from the tabular policies.

    Actions are the grid values of the drawn indices; states evolve with the
    continuous dynamics and are snapped only to look up the policy.  With
    ``deterministic`` every agent takes its most likely action (ties go to
    the lowest index).
    """
    if n < 1:
        raise InsufficientSamples("need at least one roll-out")
    grid = result.grid
    pi, pj = result.policy_i, result.policy_j
    T = pi.T
    d = dynamics.dims
    u = np.stack([stream(seed, k).random((T, 2)) for k in range(n)])
    xi = np.empty((n, T + 1, d.n_i))
    xj = np.empty((n, T + 1, d.n_j))
    ui = np.empty((n, T, d.m_i))
    uj = np.empty((n, T, d.m_j))
    xi[:, 0] = x0.x_i
    xj[:, 0] = x0.x_j
    for t in range(T):
        s = joint_state_index(grid, xi[:, t], xj[:, t])
        if deterministic:
            ai = np.argmax(pi.probs[t][s], axis=1)
            aj = np.argmax(pj.probs[t][s], axis=1)
        else:
            ai = sample_categorical(pi.probs[t], s, u[:, t, 0])
            aj = sample_categorical(pj.probs[t], s, u[:, t, 1])
        ui[:, t] = pi.actions[ai]
        uj[:, t] = pj.actions[aj]
        xi[:, t + 1], xj[:, t + 1] = dynamics.step(xi[:, t], xj[:, t], ui[:, t], uj[:, t])
    return RolloutBatch(JointTrajectory(xi, xj, ui, uj), seed, "soft-VI")


def write_policy_csv(result: SoftVIResult, path=None, stride: int = 1) -> str:
    """Tabular policy summary: one row per (agent, stage, grid state) with the action mean and std.

    ``stride`` thins every state axis (keeps every ``stride``-th grid point).
    """
    grid = result.grid
    Xi, Xj = _mesh(grid.state_i), _mesh(grid.state_j)
    keep_i = _thin(grid.state_i, stride)
    keep_j = _thin(grid.state_j, stride)
    Sj = len(Xj)
    buf = io.StringIO()
    buf.write(f"# gscioc-vi-policy v1 grid={json.dumps(grid.to_dict(), separators=(',', ':'))}\n")
    w = csv.writer(buf, lineterminator="\n")
    ma = max(len(grid.action_i), len(grid.action_j))
    w.writerow(["agent", "t"] + [f"xi{k}" for k in range(Xi.shape[1])] + [f"xj{k}" for k in range(Xj.shape[1])]
               + [f"mean{k}" for k in range(ma)] + [f"std{k}" for k in range(ma)])
    for pol in (result.policy_i, result.policy_j):
        mu, sd = pol.mean(), np.sqrt(np.maximum(pol.variance(), 0.0))
        pad = [""] * (ma - mu.shape[-1])
        for t in range(pol.T):
            for a in keep_i:
                for b in keep_j:
                    s = a * Sj + b
                    w.writerow([pol.owner.value, t + 1] + [repr(float(v)) for v in Xi[a]] + [repr(float(v)) for v in Xj[b]]
                               + [repr(float(v)) for v in mu[t, s]] + pad + [repr(float(v)) for v in sd[t, s]] + pad)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def _thin(axes, stride):
    idx = np.arange(int(np.prod([a.bins for a in axes])))
    if stride <= 1:
        return idx
    sub = np.array(np.unravel_index(idx, [a.bins for a in axes]))
    return idx[np.all(sub % stride == 0, axis=0)]
