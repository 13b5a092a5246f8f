"""Domain types, deviation coordinates and dynamics linearization.

All array-valued fields may carry leading batch dimensions: a
:class:`JointTrajectory` whose ``states_i`` has shape ``(N, T+1, n_i)`` is a
batch of ``N`` trajectories.  Every function in the package broadcasts over
such leading dimensions, which is how the inference code evaluates thousands
of demonstrations in one backward pass.

Time indexing follows the convention that an action is indexed with the
stage it leads to: ``actions_i[t-1]`` holds ``u_{i,t}``, the action that takes
``x_{t-1}`` to ``x_t`` for ``t = 1..T``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, InputError, NonFiniteDerivative


class AgentId(str, enum.Enum):
    I = "i"
    J = "j"

    @property
    def other(self) -> "AgentId":
        return AgentId.J if self is AgentId.I else AgentId.I

    @classmethod
    def parse(cls, value) -> "AgentId":
        if isinstance(value, AgentId):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InputError(f"unknown agent {value!r}; expected 'i' or 'j'") from None


@dataclass(frozen=True)
class Dims:
    """State/action sizes of both agents."""

    n_i: int
    n_j: int
    m_i: int
    m_j: int

    @property
    def n(self) -> int:
        return self.n_i + self.n_j

    @property
    def m(self) -> int:
        return self.m_i + self.m_j

    @property
    def nz(self) -> int:
        return self.n + self.m

    def state_slice(self, agent) -> slice:
        agent = AgentId.parse(agent)
        return slice(0, self.n_i) if agent is AgentId.I else slice(self.n_i, self.n)

    def action_slice(self, agent) -> slice:
        """Slice of ``agent``'s action inside the stacked action ``[u_i, u_j]``."""
        agent = AgentId.parse(agent)
        return slice(0, self.m_i) if agent is AgentId.I else slice(self.m_i, self.m)

    def z_slices(self):
        """Slices of x_i, x_j, u_i, u_j inside the stage vector z."""
        n, ni, mi = self.n, self.n_i, self.m_i
        return {
            "xi": slice(0, ni),
            "xj": slice(ni, n),
            "ui": slice(n, n + mi),
            "uj": slice(n + mi, self.nz),
        }

    def state_dim(self, agent) -> int:
        return self.n_i if AgentId.parse(agent) is AgentId.I else self.n_j

    def action_dim(self, agent) -> int:
        return self.m_i if AgentId.parse(agent) is AgentId.I else self.m_j


@dataclass(frozen=True)
class JointState:
    x_i: np.ndarray
    x_j: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_i", np.atleast_1d(np.asarray(self.x_i, dtype=float)))
        object.__setattr__(self, "x_j", np.atleast_1d(np.asarray(self.x_j, dtype=float)))
        if not (np.all(np.isfinite(self.x_i)) and np.all(np.isfinite(self.x_j))):
            raise InputError("joint state contains non-finite entries")

    @property
    def joint(self) -> np.ndarray:
        return np.concatenate([self.x_i, self.x_j], axis=-1)


@dataclass(frozen=True)
class JointTrajectory:
    """States ``x_0..x_T`` split per agent plus both action sequences."""

    states_i: np.ndarray
    states_j: np.ndarray
    actions_i: np.ndarray
    actions_j: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.states_i, self.states_j, self.actions_i, self.actions_j)]
        for name, a in zip(("states_i", "states_j", "actions_i", "actions_j"), arrs):
            if a.ndim < 2:
                raise DimensionMismatch(f"{name} must be at least 2-D (time, dim), got shape {a.shape}")
            object.__setattr__(self, name, a)
        sx_i, sx_j, su_i, su_j = arrs
        batch = sx_i.shape[:-2]
        if any(a.shape[:-2] != batch for a in arrs):
            raise DimensionMismatch("trajectory arrays have inconsistent batch shapes")
        T = su_i.shape[-2]
        if T < 1:
            raise DimensionMismatch("horizon must be at least 1")
        if sx_i.shape[-2] != T + 1 or sx_j.shape[-2] != T + 1 or su_j.shape[-2] != T:
            raise DimensionMismatch(
                f"expected T+1 states and T actions, got {sx_i.shape[-2]}, {sx_j.shape[-2]} states "
                f"and {su_i.shape[-2]}, {su_j.shape[-2]} actions"
            )

    @property
    def T(self) -> int:
        return self.actions_i.shape[-2]

    @property
    def batch_shape(self) -> tuple:
        return self.states_i.shape[:-2]

    @property
    def dims(self) -> Dims:
        return Dims(self.states_i.shape[-1], self.states_j.shape[-1], self.actions_i.shape[-1], self.actions_j.shape[-1])

    @property
    def states(self) -> np.ndarray:
        """Joint states ``[x_i, x_j]`` with shape (..., T+1, n)."""
        return np.concatenate([self.states_i, self.states_j], axis=-1)

    @property
    def actions(self) -> np.ndarray:
        """Stacked actions ``[u_i, u_j]`` with shape (..., T, m)."""
        return np.concatenate([self.actions_i, self.actions_j], axis=-1)

    def stage_vectors(self) -> np.ndarray:
        """Per-stage reward arguments ``z_t = [x_i,t, x_j,t, u_i,t, u_j,t]`` for t = 1..T."""
        return np.concatenate(
            [self.states_i[..., 1:, :], self.states_j[..., 1:, :], self.actions_i, self.actions_j], axis=-1
        )

    def __len__(self):
        if not self.batch_shape:
            raise TypeError("unbatched trajectory has no len()")
        return self.batch_shape[0]

    def __getitem__(self, idx) -> "JointTrajectory":
        if not self.batch_shape:
            raise TypeError("cannot index an unbatched trajectory")
        return JointTrajectory(self.states_i[idx], self.states_j[idx], self.actions_i[idx], self.actions_j[idx])

    @property
    def x0(self) -> JointState:
        if self.batch_shape:
            raise TypeError("x0 of a batched trajectory is ambiguous; index first")
        return JointState(self.states_i[0], self.states_j[0])

    @staticmethod
    def stack(trajs) -> "JointTrajectory":
        trajs = list(trajs)
        if not trajs:
            raise InputError("cannot stack an empty list of trajectories")
        return JointTrajectory(
            np.stack([t.states_i for t in trajs]),
            np.stack([t.states_j for t in trajs]),
            np.stack([t.actions_i for t in trajs]),
            np.stack([t.actions_j for t in trajs]),
        )

    @staticmethod
    def from_joint(states: np.ndarray, actions: np.ndarray, dims: Dims) -> "JointTrajectory":
        return JointTrajectory(
            states[..., : dims.n_i],
            states[..., dims.n_i :],
            actions[..., : dims.m_i],
            actions[..., dims.m_i :],
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("states_i", "states_j", "actions_i", "actions_j")}

    @staticmethod
    def from_dict(d: dict) -> "JointTrajectory":
        try:
            return JointTrajectory(d["states_i"], d["states_j"], d["actions_i"], d["actions_j"])
        except KeyError as exc:
            raise InputError(f"trajectory record lacks {exc}") from None

    def allclose(self, other: "JointTrajectory", atol=1e-12) -> bool:
        return all(
            np.allclose(a, b, rtol=0, atol=atol)
            for a, b in zip(
                (self.states_i, self.states_j, self.actions_i, self.actions_j),
                (other.states_i, other.states_j, other.actions_i, other.actions_j),
            )
        )


def _check_same_layout(traj: JointTrajectory, ref: JointTrajectory):
    if traj.T != ref.T or traj.dims != ref.dims:
        raise DimensionMismatch(f"trajectory (T={traj.T}, {traj.dims}) does not match reference (T={ref.T}, {ref.dims})")


def to_deviation(traj: JointTrajectory, reference: JointTrajectory):
    """Return ``(x_bar, u_bar)`` = joint state/action deviations from ``reference``."""
    _check_same_layout(traj, reference)
    return traj.states - reference.states, traj.actions - reference.actions


def from_deviation(x_bar: np.ndarray, u_bar: np.ndarray, reference: JointTrajectory) -> JointTrajectory:
    x_bar = np.asarray(x_bar, dtype=float)
    u_bar = np.asarray(u_bar, dtype=float)
    if x_bar.shape[-2:] != reference.states.shape[-2:] or u_bar.shape[-2:] != reference.actions.shape[-2:]:
        raise DimensionMismatch("deviation arrays do not match the reference layout")
    return JointTrajectory.from_joint(reference.states + x_bar, reference.actions + u_bar, reference.dims)


# --------------------------------------------------------------------------- dynamics


def _central_jacobian(fn, x, u, step=1e-6):
    """Central-difference Jacobians of ``fn(x, u)`` w.r.t. x and u (batched)."""
    f0 = np.asarray(fn(x, u), dtype=float)
    n, m = x.shape[-1], u.shape[-1]
    A = np.empty(f0.shape + (n,))
    B = np.empty(f0.shape + (m,))
    for k in range(n):
        h = step * np.maximum(1.0, np.abs(x[..., k]))
        xp, xm = x.copy(), x.copy()
        xp[..., k] += h
        xm[..., k] -= h
        A[..., k] = (fn(xp, u) - fn(xm, u)) / (2 * h[..., None])
    for k in range(m):
        h = step * np.maximum(1.0, np.abs(u[..., k]))
        up, um = u.copy(), u.copy()
        up[..., k] += h
        um[..., k] -= h
        B[..., k] = (fn(x, up) - fn(x, um)) / (2 * h[..., None])
    return A, B


@dataclass(frozen=True)
class AgentDynamics:
    """Deterministic step map ``x_t = f(x_{t-1}, u_t)`` for one agent.

    kinds: ``integrator`` (x + u, requires equal dims), ``linear`` (A x + B u),
    ``tanh_integrator`` (x + vmax * tanh(u / vmax)), ``sin_integrator``
    (x + sin(u)) and ``custom`` (user callable, finite-difference Jacobians).
    """

    kind: str
    state_dim: int
    action_dim: int
    params: dict = field(default_factory=dict)
    fn: Optional[Callable] = None

    def __post_init__(self):
        if self.kind in ("integrator", "tanh_integrator", "sin_integrator") and self.state_dim != self.action_dim:
            raise DimensionMismatch(f"{self.kind} dynamics need equal state and action dims")
        if self.kind == "linear":
            A = np.asarray(self.params.get("A"), dtype=float)
            B = np.asarray(self.params.get("B"), dtype=float)
            if A.shape != (self.state_dim, self.state_dim) or B.shape != (self.state_dim, self.action_dim):
                raise DimensionMismatch("linear dynamics A/B shapes do not match the declared dims")
        elif self.kind == "custom" and self.fn is None:
            raise InputError("custom dynamics need a callable")
        elif self.kind not in ("integrator", "linear", "tanh_integrator", "sin_integrator", "custom"):
            raise InputError(f"unknown dynamics kind {self.kind!r}")

    def step(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if self.kind == "integrator":
            return x + u
        if self.kind == "linear":
            A = np.asarray(self.params["A"], dtype=float)
            B = np.asarray(self.params["B"], dtype=float)
            return x @ A.T + u @ B.T
        if self.kind == "tanh_integrator":
            vmax = float(self.params.get("vmax", 1.0))
            return x + vmax * np.tanh(u / vmax)
        if self.kind == "sin_integrator":
            return x + np.sin(u)
        return np.asarray(self.fn(x, u), dtype=float)

    def jacobians(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        n, m = self.state_dim, self.action_dim
        if self.kind == "integrator":
            return np.broadcast_to(np.eye(n), batch + (n, n)).copy(), np.broadcast_to(np.eye(n), batch + (n, m)).copy()
        if self.kind == "linear":
            A = np.asarray(self.params["A"], dtype=float)
            B = np.asarray(self.params["B"], dtype=float)
            return np.broadcast_to(A, batch + A.shape).copy(), np.broadcast_to(B, batch + B.shape).copy()
        if self.kind == "tanh_integrator":
            vmax = float(self.params.get("vmax", 1.0))
            d = 1.0 - np.tanh(u / vmax) ** 2
            B = d[..., :, None] * np.eye(n)
            return np.broadcast_to(np.eye(n), batch + (n, n)).copy(), B
        if self.kind == "sin_integrator":
            B = np.cos(u)[..., :, None] * np.eye(n)
            return np.broadcast_to(np.eye(n), batch + (n, n)).copy(), B
        return _central_jacobian(self.step, np.broadcast_to(x, batch + (n,)).copy(), np.broadcast_to(u, batch + (m,)).copy())

    def to_dict(self) -> dict:
        if self.kind == "custom":
            raise InputError("custom dynamics cannot be serialized")
        params = {k: np.asarray(v).tolist() for k, v in self.params.items()}
        return {"type": self.kind, "params": params}


@dataclass(frozen=True)
class DynamicsModel:
    """Decoupled per-agent dynamics."""

    agent_i: AgentDynamics
    agent_j: AgentDynamics

    @property
    def dims(self) -> Dims:
        return Dims(self.agent_i.state_dim, self.agent_j.state_dim, self.agent_i.action_dim, self.agent_j.action_dim)

    def step(self, x_i, x_j, u_i, u_j):
        return self.agent_i.step(x_i, u_i), self.agent_j.step(x_j, u_j)

    def rollout(self, x0: JointState, actions_i, actions_j) -> JointTrajectory:
        """Open-loop roll-out of the given action sequences (may be batched)."""
        actions_i = np.asarray(actions_i, dtype=float)
        actions_j = np.asarray(actions_j, dtype=float)
        T = actions_i.shape[-2]
        batch = actions_i.shape[:-2]
        xi = np.empty(batch + (T + 1, self.agent_i.state_dim))
        xj = np.empty(batch + (T + 1, self.agent_j.state_dim))
        xi[..., 0, :] = x0.x_i
        xj[..., 0, :] = x0.x_j
        for t in range(T):
            xi[..., t + 1, :], xj[..., t + 1, :] = self.step(xi[..., t, :], xj[..., t, :], actions_i[..., t, :], actions_j[..., t, :])
        return JointTrajectory(xi, xj, actions_i, actions_j)

    def residual(self, traj: JointTrajectory) -> float:
        """Max-norm mismatch between recorded states and re-simulated ones."""
        xi, xj = self.step(traj.states_i[..., :-1, :], traj.states_j[..., :-1, :], traj.actions_i, traj.actions_j)
        return float(max(np.max(np.abs(xi - traj.states_i[..., 1:, :])), np.max(np.abs(xj - traj.states_j[..., 1:, :]))))

    def to_dict(self) -> dict:
        return {"i": self.agent_i.to_dict(), "j": self.agent_j.to_dict()}


@dataclass(frozen=True)
class LinearizedDynamics:
    """Per-stage Jacobians ``A_kt = d x_kt / d x_k,t-1`` and ``B_kt = d x_kt / d u_kt``."""

    A_i: np.ndarray
    B_i: np.ndarray
    A_j: np.ndarray
    B_j: np.ndarray

    @property
    def T(self) -> int:
        return self.A_i.shape[-3]

    def joint(self):
        """Block-diagonal joint ``(A, B)`` with shapes (..., T, n, n) and (..., T, n, m)."""
        ni, nj = self.A_i.shape[-1], self.A_j.shape[-1]
        mi, mj = self.B_i.shape[-1], self.B_j.shape[-1]
        batch = np.broadcast_shapes(self.A_i.shape[:-2], self.A_j.shape[:-2])
        A = np.zeros(batch + (ni + nj, ni + nj))
        B = np.zeros(batch + (ni + nj, mi + mj))
        A[..., :ni, :ni] = self.A_i
        A[..., ni:, ni:] = self.A_j
        B[..., :ni, :mi] = self.B_i
        B[..., ni:, mi:] = self.B_j
        return A, B


def linearize(dynamics: DynamicsModel, reference: JointTrajectory) -> LinearizedDynamics:
    """Jacobians of both agents' dynamics along ``reference``; exact for linear maps."""
    if dynamics.dims != reference.dims:
        raise DimensionMismatch(f"dynamics dims {dynamics.dims} do not match reference dims {reference.dims}")
    A_i, B_i = dynamics.agent_i.jacobians(reference.states_i[..., :-1, :], reference.actions_i)
    A_j, B_j = dynamics.agent_j.jacobians(reference.states_j[..., :-1, :], reference.actions_j)
    for M in (A_i, B_i, A_j, B_j):
        bad = ~np.isfinite(M)
        if bad.any():
            t = int(np.argwhere(bad)[0][-3]) + 1
            raise NonFiniteDerivative(t, "dynamics Jacobian")
    return LinearizedDynamics(A_i, B_i, A_j, B_j)
