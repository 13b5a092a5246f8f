"""Reward terms, parameterized reward models and their quadratic expansion.

A stage reward is evaluated on ``z = [x_i, x_j, u_i, u_j]`` where ``x`` is the
state the stage leads to.  Catalog terms provide analytic gradients and
Hessians; :class:`CustomTerm` falls back to central finite differences.

Terms are written as penalties/bonuses with unit weight; a
:class:`RewardModel` multiplies each by a coefficient that is either fixed or
read from the parameter vector ``theta``.  Rewards are therefore linear in
``theta``, which lets inference expand every term once and recombine the
expansions for each trial ``theta``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import AgentId, Dims, JointTrajectory
from .errors import DimensionMismatch, InputError, MissingCoefficient, NonFiniteDerivative


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


class RewardTerm:
    """Base class: subclasses implement :meth:`derivatives`."""

    type_name = "abstract"

    def check(self, dims: Dims):
        pass

    def derivatives(self, z: np.ndarray, dims: Dims):
        """Return ``(value, grad, hess)`` with shapes (...), (..., nz), (..., nz, nz)."""
        raise NotImplementedError

    def value(self, z, dims: Dims):
        return self.derivatives(z, dims)[0]

    def to_dict(self) -> dict:
        raise NotImplementedError


def _zeros(z, dims):
    batch = z.shape[:-1]
    return np.zeros(batch), np.zeros(batch + (dims.nz,)), np.zeros(batch + (dims.nz, dims.nz))


def _indices(sl: slice, components):
    idx = np.arange(sl.start, sl.stop)
    if components is None:
        return idx
    comps = np.asarray(components, dtype=int)
    if comps.size and (comps.min() < 0 or comps.max() >= idx.size):
        raise DimensionMismatch(f"component index out of range for a block of size {idx.size}")
    return idx[comps]


@dataclass(frozen=True)
class _SquaredDistance(RewardTerm):
    """``-sum_c (v[c] - target[c])^2`` over selected components of one block."""

    of: AgentId = AgentId.I
    target: Optional[tuple] = None
    components: Optional[tuple] = None

    block = "x"

    def __post_init__(self):
        object.__setattr__(self, "of", AgentId.parse(self.of))
        if self.target is not None:
            object.__setattr__(self, "target", tuple(float(v) for v in np.atleast_1d(self.target)))
        if self.components is not None:
            object.__setattr__(self, "components", tuple(int(c) for c in np.atleast_1d(self.components)))

    def _idx(self, dims):
        key = f"{self.block}{self.of.value}"
        return _indices(dims.z_slices()[key], self.components)

    def check(self, dims):
        idx = self._idx(dims)
        if self.target is not None and len(self.target) not in (1, idx.size):
            raise DimensionMismatch(f"{self.type_name}: target has {len(self.target)} entries for {idx.size} components")

    def derivatives(self, z, dims):
        val, g, H = _zeros(z, dims)
        idx = self._idx(dims)
        tgt = np.zeros(idx.size) if self.target is None else np.broadcast_to(np.asarray(self.target), (idx.size,))
        d = z[..., idx] - tgt
        val = -np.sum(d * d, axis=-1)
        g[..., idx] = -2.0 * d
        H[..., idx, idx] = -2.0
        return val, g, H

    def to_dict(self):
        out = {"type": self.type_name, "of": self.of.value}
        if self.target is not None:
            out["target"] = list(self.target)
        if self.components is not None:
            out["components"] = list(self.components)
        return out


@dataclass(frozen=True)
class StateQuadratic(_SquaredDistance):
    """Quadratic pull of an agent's state (or some components) toward a target.

    Covers the group-goal state penalty, goal rewards and lane keeping.
    """

    type_name = "state_quadratic"
    block = "x"


@dataclass(frozen=True)
class ActionQuadratic(_SquaredDistance):
    """Quadratic penalty on an agent's action, optionally around a preferred velocity."""

    type_name = "action_quadratic"
    block = "u"


@dataclass(frozen=True)
class CoupledAction(RewardTerm):
    """``-||u_i + u_j||^2``: maximal when the agents' actions cancel."""

    type_name = "coupled_action"

    def check(self, dims):
        if dims.m_i != dims.m_j:
            raise DimensionMismatch("coupled_action needs equal action dims")

    def derivatives(self, z, dims):
        val, g, H = _zeros(z, dims)
        sl = dims.z_slices()
        s = z[..., sl["ui"]] + z[..., sl["uj"]]
        val = -np.sum(s * s, axis=-1)
        g[..., sl["ui"]] = -2.0 * s
        g[..., sl["uj"]] = -2.0 * s
        eye = -2.0 * np.eye(dims.m_i)
        for a in ("ui", "uj"):
            for b in ("ui", "uj"):
                H[..., sl[a], sl[b]] = eye
        return val, g, H

    def to_dict(self):
        return {"type": self.type_name}


@dataclass(frozen=True)
class ZebraInteraction(RewardTerm):
    """Car/pedestrian interaction at a crossing.

    ``log(|x_c| + offset) * sigmoid(-x_c + reach) * sigmoid(x_c) * sigmoid(-y_p)``
    where ``x_c`` is the car's offset to the intersection and ``y_p`` the
    pedestrian's.  Strongly negative when the car sits close in front of the
    intersection while the pedestrian has not crossed yet (``y_p < 0``).
    """

    type_name = "zebra_interaction"
    car: AgentId = AgentId.J
    car_component: int = 0
    pedestrian_component: int = 0
    offset: float = 0.1
    reach: float = 6.0

    def __post_init__(self):
        object.__setattr__(self, "car", AgentId.parse(self.car))

    def _idx(self, dims):
        sl = dims.z_slices()
        car = sl[f"x{self.car.value}"]
        ped = sl[f"x{self.car.other.value}"]
        ic = car.start + self.car_component
        ip = ped.start + self.pedestrian_component
        if not (car.start <= ic < car.stop and ped.start <= ip < ped.stop):
            raise DimensionMismatch("zebra_interaction component out of range")
        return ic, ip

    def check(self, dims):
        self._idx(dims)

    def derivatives(self, z, dims):
        val, g, H = _zeros(z, dims)
        ic, ip = self._idx(dims)
        x = z[..., ic]
        y = z[..., ip]
        a = np.abs(x) + self.offset
        L = np.log(a)
        L1 = np.sign(x) / a
        L2 = -1.0 / (a * a)
        s1 = sigmoid(self.reach - x)
        s1p = -s1 * (1 - s1)
        s1pp = s1 * (1 - s1) * (1 - 2 * s1)
        s2 = sigmoid(x)
        s2p = s2 * (1 - s2)
        s2pp = s2 * (1 - s2) * (1 - 2 * s2)
        s3 = sigmoid(-y)
        s3p = -s3 * (1 - s3)
        s3pp = s3 * (1 - s3) * (1 - 2 * s3)
        P = L * s1 * s2
        P1 = L1 * s1 * s2 + L * s1p * s2 + L * s1 * s2p
        P2 = (
            L2 * s1 * s2
            + L * s1pp * s2
            + L * s1 * s2pp
            + 2 * (L1 * s1p * s2 + L1 * s1 * s2p + L * s1p * s2p)
        )
        val = P * s3
        g[..., ic] = P1 * s3
        g[..., ip] = P * s3p
        H[..., ic, ic] = P2 * s3
        H[..., ip, ip] = P * s3pp
        H[..., ic, ip] = P1 * s3p
        H[..., ip, ic] = P1 * s3p
        return val, g, H

    def to_dict(self):
        return {
            "type": self.type_name,
            "car": self.car.value,
            "car_component": self.car_component,
            "pedestrian_component": self.pedestrian_component,
            "offset": self.offset,
            "reach": self.reach,
        }


@dataclass(frozen=True)
class CustomTerm(RewardTerm):
    """User term ``fn(x_i, x_j, u_i, u_j) -> float`` with finite-difference derivatives.

    Gradient step is ``1e-5 * max(1, |z_k|)``; the Hessian uses ``1e-4 * max(1, |z_k|)``
    because second differences lose two orders of magnitude to cancellation.
    """

    fn: Callable = None
    name: str = "custom"
    type_name = "custom"

    def _scalar(self, z, dims):
        sl = dims.z_slices()
        return float(self.fn(z[sl["xi"]], z[sl["xj"]], z[sl["ui"]], z[sl["uj"]]))

    def _one(self, z, dims):
        nz = dims.nz
        f0 = self._scalar(z, dims)
        g = np.empty(nz)
        H = np.empty((nz, nz))
        hg = 1e-5 * np.maximum(1.0, np.abs(z))
        hh = 1e-4 * np.maximum(1.0, np.abs(z))
        e = np.eye(nz)
        for a in range(nz):
            g[a] = (self._scalar(z + hg[a] * e[a], dims) - self._scalar(z - hg[a] * e[a], dims)) / (2 * hg[a])
            H[a, a] = (
                self._scalar(z + hh[a] * e[a], dims) - 2 * f0 + self._scalar(z - hh[a] * e[a], dims)
            ) / hh[a] ** 2
            for b in range(a):
                da, db = hh[a] * e[a], hh[b] * e[b]
                H[a, b] = H[b, a] = (
                    self._scalar(z + da + db, dims)
                    - self._scalar(z + da - db, dims)
                    - self._scalar(z - da + db, dims)
                    + self._scalar(z - da - db, dims)
                ) / (4 * hh[a] * hh[b])
        return f0, g, H

    def derivatives(self, z, dims):
        batch = z.shape[:-1]
        flat = z.reshape(-1, dims.nz)
        out = [self._one(row, dims) for row in flat]
        val = np.array([o[0] for o in out]).reshape(batch)
        g = np.array([o[1] for o in out]).reshape(batch + (dims.nz,))
        H = np.array([o[2] for o in out]).reshape(batch + (dims.nz, dims.nz))
        return val, g, H

    def to_dict(self):
        raise InputError("custom reward terms cannot be serialized")


TERM_TYPES = {
    cls.type_name: cls for cls in (StateQuadratic, ActionQuadratic, CoupledAction, ZebraInteraction)
}


def term_from_dict(d: dict) -> RewardTerm:
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in TERM_TYPES:
        raise InputError(f"unknown reward term type {kind!r}")
    try:
        return TERM_TYPES[kind](**d)
    except TypeError as exc:
        raise InputError(f"bad parameters for reward term {kind!r}: {exc}") from None


@dataclass(frozen=True)
class WeightedTerm:
    """A term times a coefficient: ``scale * theta[theta_index]`` or just ``scale``."""

    term: RewardTerm
    theta_index: Optional[int] = None
    scale: float = 1.0

    def weight(self, theta) -> float:
        if self.theta_index is None:
            return self.scale
        return self.scale * float(theta[self.theta_index])

    def to_dict(self) -> dict:
        out = self.term.to_dict()
        if self.theta_index is None:
            out["weight"] = self.scale
        else:
            out["theta_index"] = self.theta_index
            if self.scale != 1.0:
                out["scale"] = self.scale
        return out

    @staticmethod
    def from_dict(d: dict) -> "WeightedTerm":
        d = dict(d)
        idx = d.pop("theta_index", None)
        weight = d.pop("weight", None)
        scale = d.pop("scale", None)
        if idx is None and weight is None:
            raise MissingCoefficient(f"reward term {d.get('type')!r} has neither 'weight' nor 'theta_index'")
        if idx is not None and weight is not None:
            raise InputError("reward term may not set both 'weight' and 'theta_index'")
        if idx is not None:
            return WeightedTerm(term_from_dict(d), int(idx), 1.0 if scale is None else float(scale))
        return WeightedTerm(term_from_dict(d), None, float(weight))


@dataclass(frozen=True)
class RewardModel:
    """``r_owner(z; theta) = sum_k w_k(theta) * phi_k(z)``."""

    terms: tuple
    theta: np.ndarray
    owner: AgentId
    dims: Dims

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))
        object.__setattr__(self, "owner", AgentId.parse(self.owner))
        for wt in self.terms:
            if wt.theta_index is not None and not 0 <= wt.theta_index < self.theta.size:
                raise DimensionMismatch(f"theta_index {wt.theta_index} out of range for theta of size {self.theta.size}")
            wt.term.check(self.dims)

    def with_theta(self, theta) -> "RewardModel":
        return RewardModel(self.terms, theta, self.owner, self.dims)

    def weights(self, theta=None) -> np.ndarray:
        theta = self.theta if theta is None else theta
        return np.array([wt.weight(theta) for wt in self.terms])

    def value(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        total = np.zeros(z.shape[:-1])
        for w, wt in zip(self.weights(), self.terms):
            total = total + w * wt.term.value(z, self.dims)
        return total

    def feature_derivatives(self, z):
        """Per-term ``(values, grads, hessians)`` stacked on a leading term axis."""
        z = np.asarray(z, dtype=float)
        if not self.terms:
            val, g, H = _zeros(z, self.dims)
            return val[None], g[None], H[None]
        parts = [wt.term.derivatives(z, self.dims) for wt in self.terms]
        return tuple(np.stack(p) for p in zip(*parts))

    def derivatives(self, z):
        vals, grads, hess = self.feature_derivatives(z)
        w = self.weights() if self.terms else np.zeros(1)
        return combine(w, vals, grads, hess)


def combine(weights, vals, grads, hess):
    """Weighted sum over the leading term axis of per-term derivatives."""
    w = np.asarray(weights, dtype=float)
    return (
        np.tensordot(w, vals, axes=1),
        np.tensordot(w, grads, axes=1),
        np.tensordot(w, hess, axes=1),
    )


@dataclass(frozen=True)
class QuadraticExpansion:
    """Per-stage second-order expansion of one agent's reward about a reference.

    ``H`` and ``g`` are the full Hessian/gradient over ``z = [x_i, x_j, u_i, u_j]``
    (shapes (..., T, nz, nz) and (..., T, nz)); named blocks are views into them.
    The quadratic model is ``r_t + g.z_bar + 0.5 z_bar' H z_bar``.
    """

    r: np.ndarray
    g: np.ndarray
    H: np.ndarray
    dims: Dims
    reference: Optional[JointTrajectory] = None

    @property
    def T(self) -> int:
        return self.g.shape[-2]

    def block(self, a: str, b: str) -> np.ndarray:
        sl = self.dims.z_slices()
        return self.H[..., sl[a], sl[b]]

    def grad(self, a: str) -> np.ndarray:
        return self.g[..., self.dims.z_slices()[a]]

    # state Hessians (hat) and action Hessians (tilde, before folding mixed terms)
    @property
    def H_state_ii(self):
        return self.block("xi", "xi")

    @property
    def H_state_jj(self):
        return self.block("xj", "xj")

    @property
    def H_state_ji(self):
        return self.block("xj", "xi")

    @property
    def H_action_ii(self):
        return self.block("ui", "ui")

    @property
    def H_action_jj(self):
        return self.block("uj", "uj")

    @property
    def H_action_ji(self):
        return self.block("uj", "ui")

    def evaluate(self, z_bar) -> np.ndarray:
        """Quadratic model at deviation ``z_bar`` (…, T, nz)."""
        quad = 0.5 * np.einsum("...a,...ab,...b->...", z_bar, self.H, z_bar)
        return self.r + np.einsum("...a,...a->...", self.g, z_bar) + quad

    def regularized(self, t: int, agent, lam: float) -> "QuadraticExpansion":
        """Copy with ``-lam * I`` added to the agent's own action Hessian at stage ``t`` (1-based)."""
        H = self.H.copy()
        sl = self.dims.z_slices()[f"u{AgentId.parse(agent).value}"]
        k = np.arange(sl.start, sl.stop)
        H[..., t - 1, k, k] -= lam
        return QuadraticExpansion(self.r, self.g, H, self.dims, self.reference)


def taylor_expand(reward: RewardModel, reference: JointTrajectory) -> QuadraticExpansion:
    """Expand ``reward`` to second order at every stage of ``reference``."""
    if reward.dims != reference.dims:
        raise DimensionMismatch(f"reward dims {reward.dims} do not match reference dims {reference.dims}")
    z = reference.stage_vectors()
    r, g, H = reward.derivatives(z)
    for a, trailing in ((r, 0), (g, 1), (H, 2)):
        bad = ~np.isfinite(a)
        if bad.any():
            pos = np.argwhere(bad)[0]
            raise NonFiniteDerivative(int(pos[a.ndim - trailing - 1]) + 1, "reward or derivative")
    return QuadraticExpansion(r, g, H, reference.dims, reference)


def expand_features(reward: RewardModel, reference: JointTrajectory):
    """Per-term expansions along ``reference`` for fast re-weighting by theta."""
    if reward.dims != reference.dims:
        raise DimensionMismatch(f"reward dims {reward.dims} do not match reference dims {reference.dims}")
    vals, grads, hess = reward.feature_derivatives(reference.stage_vectors())
    for a, trailing in ((vals, 0), (grads, 1), (hess, 2)):
        bad = ~np.isfinite(a)
        if bad.any():
            pos = np.argwhere(bad)[0]
            raise NonFiniteDerivative(int(pos[a.ndim - trailing - 1]) + 1, "reward or derivative")
    return vals, grads, hess


def expansion_from_features(reward: RewardModel, features, theta, reference=None) -> QuadraticExpansion:
    vals, grads, hess = features
    w = reward.weights(theta) if reward.terms else np.zeros(1)
    r, g, H = combine(w, vals, grads, hess)
    return QuadraticExpansion(r, g, H, reward.dims, reference)
