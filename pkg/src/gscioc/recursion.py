"""Backward value recursion for two-agent soft-Bellman games.

Every stage is handled in stacked coordinates.  For owner ``k`` the reward
expansion (over ``z_t = [x_t, u_t]``) plus the quadratic value ``V_k(x_t)`` is
pulled back through the linearized dynamics ``x_t = A x_{t-1} + B u_t`` into a
quadratic ``W_k, w_k`` over ``y = [x_{t-1}, u_i, u_j]``.  From it:

* ``W_k[u, u]`` is the precision block matrix ``M~^{(k)}``; its ``(kk)`` block
  is minus the precision of agent ``k``'s Gaussian policy.  The action blocks
  of ``W_k`` already contain the state/action mixing terms.
* Each agent's mean zeroes its own ``u_k``-gradient of ``W_k`` given the other
  agent's mean, a coupled linear system in ``(mu_i, mu_j)``.  Its solution is
  affine in ``x_{t-1}``, which yields ``nu``, ``Pi`` (gain on the other agent's
  state) and ``Omega`` (gain on the own state).
* The soft maximum over ``u_k`` of a quadratic equals its value at the mean up
  to a constant, and the expectation over the other agent's Gaussian action
  equals the value at its mean up to a constant.  Hence
  ``V_k(x_{t-1}) = L' W_k L`` with ``L = [I; K]``, ``K`` the stacked gains.

Expanding ``L' W_k L`` block by block gives the closed-form
Pi/Omega/M~-Schur-complement recursions, including the corrections for mixed
state/action reward terms.  With all cross-agent blocks zero it reduces to the
single-agent recursion implemented in :func:`cioc_backward`.

All routines broadcast over leading batch dimensions.  Matrix quantities
(Hessians, Jacobians, gains, precisions) and vector quantities (gradients,
``nu``, ``v``) may carry different batch shapes: when every trajectory of a
batch shares the same Hessians and Jacobians (quadratic rewards, linear
dynamics) the matrix recursion runs once and only the vectors are batched.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import AgentId, Dims, JointTrajectory, LinearizedDynamics
from .errors import (
    DimensionMismatch,
    IllConditioned,
    InputError,
    NonPositiveDefinitePrecision,
    SingularMeanSystem,
)
from .rewards import QuadraticExpansion

SINGULAR_RCOND = 1e-12
ILL_CONDITIONED = 1e8


def _T(a):
    return np.swapaxes(a, -1, -2)


def _sym(a):
    return 0.5 * (a + _T(a))


@dataclass(frozen=True)
class QuadraticValue:
    """``V(x) = 0.5 x' V x + v' x`` over the joint state ``x = [x_i, x_j]``."""

    V: np.ndarray
    v: np.ndarray
    dims: Dims

    @staticmethod
    def zero(dims: Dims, batch=(), vbatch=None) -> "QuadraticValue":
        vbatch = batch if vbatch is None else vbatch
        return QuadraticValue(np.zeros(batch + (dims.n, dims.n)), np.zeros(vbatch + (dims.n,)), dims)

    def _blk(self, a, b):
        sa, sb = self.dims.state_slice(a), self.dims.state_slice(b)
        return self.V[..., sa, sb]

    @property
    def V_ii(self):
        return self._blk("i", "i")

    @property
    def V_jj(self):
        return self._blk("j", "j")

    @property
    def V_ji(self):
        return self._blk("j", "i")

    @property
    def v_i(self):
        return self.v[..., self.dims.state_slice("i")]

    @property
    def v_j(self):
        return self.v[..., self.dims.state_slice("j")]

    def __call__(self, x):
        return 0.5 * np.einsum("...a,...ab,...b->...", x, self.V, x) + np.einsum("...a,...a->...", self.v, x)


@dataclass(frozen=True)
class StagePolicy:
    """Gaussian policy of one stage in deviation coordinates.

    ``mean(x_bar) = nu + gain @ x_bar`` with ``x_bar`` the joint state
    deviation at ``t-1``; ``Pi`` and ``Omega`` are the column blocks of
    ``gain`` acting on the other agent's and the own state.
    """

    nu: np.ndarray
    gain: np.ndarray
    precision: np.ndarray
    dims: Dims
    owner: Optional[AgentId] = None

    @property
    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.precision)

    @property
    def Pi(self) -> np.ndarray:
        if self.owner is None:
            raise AttributeError("joint policies have no Pi block")
        return self.gain[..., self.dims.state_slice(self.owner.other)]

    @property
    def Omega(self) -> np.ndarray:
        if self.owner is None:
            raise AttributeError("joint policies have no Omega block")
        return self.gain[..., self.dims.state_slice(self.owner)]

    def mean(self, x_bar) -> np.ndarray:
        return self.nu + np.einsum("...ab,...b->...a", self.gain, x_bar)

    def log_density(self, u_bar, x_bar) -> np.ndarray:
        d = np.asarray(u_bar) - self.mean(x_bar)
        return gaussian_logpdf(d, self.precision)


def gaussian_logpdf(d, precision):
    """``log N(d; 0, precision^{-1})`` batched over leading dims."""
    m = precision.shape[-1]
    sign, logdet = np.linalg.slogdet(precision)
    maha = np.einsum("...a,...ab,...b->...", d, precision, d)
    return 0.5 * logdet - 0.5 * m * np.log(2 * np.pi) - 0.5 * maha


@dataclass(frozen=True)
class PolicySequence:
    """Stage policies for t = 1..T plus the values they were derived from.

    Arrays carry a time axis just before the matrix axes: ``nu`` is
    (..., T, m_k), ``gain`` (..., T, m_k, n), ``precision`` (..., T, m_k, m_k).
    ``value_V``/``value_v`` hold the owner's quadratic value at times 0..T
    (index T is the zero terminal value).  ``owner`` is ``None`` for a
    centrally-controlled joint policy over the stacked action.
    """

    nu: np.ndarray
    gain: np.ndarray
    precision: np.ndarray
    dims: Dims
    owner: Optional[AgentId]
    reference: Optional[JointTrajectory] = None
    value_V: Optional[np.ndarray] = None
    value_v: Optional[np.ndarray] = None
    regularization: tuple = field(default_factory=tuple)

    @property
    def T(self) -> int:
        return self.nu.shape[-2]

    def __len__(self):
        return self.T

    def stage(self, t: int) -> StagePolicy:
        """Policy of stage ``t`` (1-based, as in the recursion)."""
        if not 1 <= t <= self.T:
            raise IndexError(f"stage {t} outside 1..{self.T}")
        k = t - 1
        return StagePolicy(self.nu[..., k, :], self.gain[..., k, :, :], self.precision[..., k, :, :], self.dims, self.owner)

    def __getitem__(self, t: int) -> StagePolicy:
        return self.stage(t)

    @property
    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.precision)

    @property
    def action_slice(self) -> slice:
        if self.owner is None:
            return slice(0, self.dims.m)
        return self.dims.action_slice(self.owner)

    @property
    def Pi(self):
        return self.gain[..., self.dims.state_slice(self.owner.other)]

    @property
    def Omega(self):
        return self.gain[..., self.dims.state_slice(self.owner)]

    def value(self, t: int) -> QuadraticValue:
        return QuadraticValue(self.value_V[..., t, :, :], self.value_v[..., t, :], self.dims)

    def absolute(self):
        """Affine policy in absolute coordinates: ``u = offset + gain @ x_{t-1}``.

        Returns ``(offset, gain, precision)``; independent of the reference for
        exactly quadratic games.
        """
        ref = self.reference
        u_ref = ref.actions[..., self.action_slice]
        x_prev = ref.states[..., :-1, :]
        offset = u_ref + self.nu - np.einsum("...ab,...b->...a", self.gain, x_prev)
        return offset, self.gain, self.precision

    def with_reference(self, reference: JointTrajectory) -> "PolicySequence":
        return PolicySequence(
            self.nu, self.gain, self.precision, self.dims, self.owner, reference, self.value_V, self.value_v, self.regularization
        )


    def to_dict(self) -> dict:
        """Per-stage JSON record (1-based ``t``); unbatched policies only."""
        if self.nu.ndim != 2:
            raise InputError("only unbatched policies serialize")
        cov = self.covariance
        stages = []
        for k in range(self.T):
            st = {"t": k + 1, "nu": self.nu[k].tolist(), "gain": self.gain[k].tolist(), "covariance": cov[k].tolist()}
            if self.owner is not None:
                st["Pi"] = self.Pi[k].tolist()
                st["Omega"] = self.Omega[k].tolist()
            stages.append(st)
        d = self.dims
        return {
            "owner": None if self.owner is None else self.owner.value,
            "dims": [d.n_i, d.n_j, d.m_i, d.m_j],
            "stages": stages,
            "reference": None if self.reference is None else self.reference.to_dict(),
            "regularization": [list(r) for r in self.regularization],
        }

    @staticmethod
    def from_dict(data: dict) -> "PolicySequence":
        try:
            dims = Dims(*data["dims"])
            stages = sorted(data["stages"], key=lambda s: s["t"])
            nu = np.array([s["nu"] for s in stages], dtype=float)
            gain = np.array([s["gain"] for s in stages], dtype=float)
            prec = np.linalg.inv(np.array([s["covariance"] for s in stages], dtype=float))
            owner = None if data.get("owner") is None else AgentId.parse(data["owner"])
            ref = None if data.get("reference") is None else JointTrajectory.from_dict(data["reference"])
        except (KeyError, TypeError, ValueError, np.linalg.LinAlgError) as exc:
            raise InputError(f"malformed policy record: {exc}") from None
        return PolicySequence(nu, gain, 0.5 * (prec + _T(prec)), dims, owner, ref)


# --------------------------------------------------------------------------- stage algebra


def transition(A, B):
    """``[[A, B], [0, I]]`` mapping ``[x_{t-1}, u]`` to ``[x_t, u]``."""
    n, m = A.shape[-1], B.shape[-1]
    Tm = np.zeros(np.broadcast_shapes(A.shape[:-2], B.shape[:-2]) + (n + m, n + m))
    Tm[..., :n, :n] = A
    Tm[..., :n, n:] = B
    Tm[..., n:, n:] = np.eye(m)
    return Tm


def pullback(H, g, A, B, V, v, Tm=None):
    """Quadratic over ``y = [x_{t-1}, u]`` from one over ``[x_t, u]`` plus ``V(x_t)``.

    ``H, g`` are the reward Hessian/gradient over ``[x_t, u]``; ``A, B`` the
    (joint) dynamics Jacobians (or their precomputed :func:`transition`
    matrix ``Tm``).  Returns ``(W, w)``.
    """
    n = A.shape[-1] if Tm is None else V.shape[-1]
    if Tm is None:
        Tm = transition(A, B)
    Hb = H + np.pad(V, [(0, 0)] * (V.ndim - 2) + [(0, H.shape[-1] - n)] * 2)
    gb = g + np.pad(v, [(0, 0)] * (v.ndim - 1) + [(0, g.shape[-1] - n)])
    TmT = _T(Tm)
    W = TmT @ Hb @ Tm
    W = 0.5 * (W + _T(W))
    w = (TmT @ gb[..., None])[..., 0]
    return W, w


@dataclass(frozen=True)
class StageGame:
    """Pulled-back stage quadratics of both owners at one stage ``t``."""

    W_i: np.ndarray
    w_i: np.ndarray
    W_j: np.ndarray
    w_j: np.ndarray
    dims: Dims
    t: int

    def owner(self, k):
        return (self.W_i, self.w_i) if AgentId.parse(k) is AgentId.I else (self.W_j, self.w_j)


@dataclass(frozen=True)
class StagePrecisions:
    """``M~^{(k)}_(nm)`` for both owners; ``M_k`` is the full stacked-action block."""

    M_i: np.ndarray
    M_j: np.ndarray
    dims: Dims

    def block(self, owner, n, m) -> np.ndarray:
        M = self.M_i if AgentId.parse(owner) is AgentId.I else self.M_j
        return M[..., self.dims.action_slice(n), self.dims.action_slice(m)]


@dataclass(frozen=True)
class StageMeans:
    nu_i: np.ndarray
    K_i: np.ndarray
    nu_j: np.ndarray
    K_j: np.ndarray
    dims: Dims

    @property
    def nu(self):
        return np.concatenate([self.nu_i, self.nu_j], axis=-1)

    @property
    def K(self):
        return np.concatenate([self.K_i, self.K_j], axis=-2)

    @property
    def Pi_i(self):
        return self.K_i[..., self.dims.state_slice("j")]

    @property
    def Omega_i(self):
        return self.K_i[..., self.dims.state_slice("i")]

    @property
    def Pi_j(self):
        return self.K_j[..., self.dims.state_slice("i")]

    @property
    def Omega_j(self):
        return self.K_j[..., self.dims.state_slice("j")]


def build_stage(expansion_i: QuadraticExpansion, expansion_j: QuadraticExpansion, lin: LinearizedDynamics, value_i: QuadraticValue, value_j: QuadraticValue, t: int, Tm=None) -> StageGame:
    k = t - 1
    if Tm is None:
        Tm = transition(*lin.joint())
    Tm = Tm[..., k, :, :]
    W_i, w_i = pullback(expansion_i.H[..., k, :, :], expansion_i.g[..., k, :], None, None, value_i.V, value_i.v, Tm)
    W_j, w_j = pullback(expansion_j.H[..., k, :, :], expansion_j.g[..., k, :], None, None, value_j.V, value_j.v, Tm)
    return StageGame(W_i, w_i, W_j, w_j, expansion_i.dims, t)


def compute_precisions(expansion_i, expansion_j, lin, value_i, value_j, t) -> StagePrecisions:
    """``M~_(nm)t = B_n' Q^_(nm)t B_m + H~_(nm)t`` for both owners (mixed terms folded in)."""
    stage = build_stage(expansion_i, expansion_j, lin, value_i, value_j, t)
    return stage_precisions(stage)


def stage_precisions(stage: StageGame) -> StagePrecisions:
    n = stage.dims.n
    return StagePrecisions(stage.W_i[..., n:, n:], stage.W_j[..., n:, n:], stage.dims)


def check_precision(precision, t, agent):
    """Raise unless every ``precision`` in the batch is symmetric positive definite."""
    try:
        if np.all(np.isfinite(precision)):
            np.linalg.cholesky(precision)
            return
    except np.linalg.LinAlgError:
        pass
    lam = np.linalg.eigvalsh(_sym(precision))
    ok = np.all((lam > 0) & np.isfinite(lam), axis=-1)
    if not np.all(ok):
        err = NonPositiveDefinitePrecision(t, agent)
        bad = np.argwhere(~np.atleast_1d(ok))
        err.index = tuple(int(v) for v in bad[0]) if np.ndim(ok) else None
        raise err


def solve_stage_means(stage: StageGame) -> StageMeans:
    """Solve the coupled mean system for ``nu``, ``Pi``, ``Omega`` of both agents."""
    d = stage.dims
    n = d.n
    ri = slice(n, n + d.m_i)
    rj = slice(n + d.m_i, n + d.m)
    S = np.concatenate([stage.W_i[..., ri, n:], stage.W_j[..., rj, n:]], axis=-2)
    G = np.concatenate([stage.W_i[..., ri, :n], stage.W_j[..., rj, :n]], axis=-2)
    c = np.concatenate([stage.w_i[..., ri], stage.w_j[..., rj]], axis=-1)
    Sinv = _checked_inverse(S, stage.t)
    nu = -np.einsum("...ab,...b->...a", Sinv, c)
    K = -Sinv @ G
    return StageMeans(nu[..., : d.m_i], K[..., : d.m_i, :], nu[..., d.m_i :], K[..., d.m_i :, :], d)


def _checked_inverse(S, t):
    """LU-based inverse with a 1-norm condition check (rcond below 1e-12 is singular)."""
    if not np.all(np.isfinite(S)):
        raise SingularMeanSystem(t)
    try:
        Sinv = np.linalg.inv(S)
    except np.linalg.LinAlgError:
        raise SingularMeanSystem(t, 0.0) from None
    cond = np.abs(S).sum(axis=-2).max(axis=-1) * np.abs(Sinv).sum(axis=-2).max(axis=-1)
    worst = float(np.max(cond)) if np.size(cond) else 1.0
    if not np.isfinite(worst) or 1.0 / worst < SINGULAR_RCOND:
        raise SingularMeanSystem(t, 0.0 if not np.isfinite(worst) else 1.0 / worst)
    if worst > ILL_CONDITIONED:
        warnings.warn(f"coupled mean system ill-conditioned at t={t} (cond={worst:.3g})", IllConditioned, stacklevel=3)
    return Sinv


def _value_from_gains(W, w, L, l):
    """``L' W L`` and ``L' (W l + w)``."""
    LT = _T(L)
    V = LT @ W @ L
    asym = np.max(np.abs(V - _T(V))) if V.size else 0.0
    assert asym <= 1e-9 * max(1.0, float(np.max(np.abs(V)))), f"value matrix lost symmetry ({asym:.3g})"
    v = (LT @ ((W @ l[..., None])[..., 0] + w)[..., None])[..., 0]
    return 0.5 * (V + _T(V)), v


def value_step(stage: StageGame, means: StageMeans):
    """Quadratic values of both agents at ``t-1`` given the stage policies at ``t``.

    Uses ``L = [I; K]`` and ``l = [0; nu]`` with the stacked gains of both agents.
    """
    n = stage.dims.n
    K, nu = means.K, means.nu
    L = np.concatenate([np.broadcast_to(np.eye(n), K.shape[:-2] + (n, n)), K], axis=-2)
    l = np.concatenate([np.zeros(nu.shape[:-1] + (n,)), nu], axis=-1)
    V_i, v_i = _value_from_gains(stage.W_i, stage.w_i, L, l)
    V_j, v_j = _value_from_gains(stage.W_j, stage.w_j, L, l)
    return QuadraticValue(V_i, v_i, stage.dims), QuadraticValue(V_j, v_j, stage.dims)


# --------------------------------------------------------------------------- full passes


def _check_pair(expansion_i, expansion_j, lin):
    if expansion_i.dims != expansion_j.dims:
        raise DimensionMismatch("expansions disagree on dimensions")
    if expansion_i.T != expansion_j.T or lin.T != expansion_i.T:
        raise DimensionMismatch("expansions and linearization disagree on the horizon")


def gs_cioc_backward(expansion_i: QuadraticExpansion, expansion_j: QuadraticExpansion, lin: LinearizedDynamics, *, regularize: bool = False, lam0: float = 1e-6, lam_max: float = 1e8):
    """Two-agent backward pass; returns ``(policy_i, policy_j)``.

    With ``regularize`` a non-positive-definite policy precision is repaired by
    adding ``-lam * I`` to the offending agent's action Hessian (``lam``
    doubling from ``lam0``); repairs are listed in ``policy.regularization``
    as ``(t, agent, lam)``.  Without it the error propagates.
    """
    _check_pair(expansion_i, expansion_j, lin)
    d = expansion_i.dims
    T = expansion_i.T
    batch = np.broadcast_shapes(expansion_i.H.shape[:-3], expansion_j.H.shape[:-3], lin.A_i.shape[:-3], lin.A_j.shape[:-3])
    vbatch = np.broadcast_shapes(batch, expansion_i.g.shape[:-2], expansion_j.g.shape[:-2])
    val_i = QuadraticValue.zero(d, batch, vbatch)
    val_j = QuadraticValue.zero(d, batch, vbatch)
    out = {
        k: dict(
            nu=np.zeros(vbatch + (T, d.action_dim(k))),
            gain=np.zeros(batch + (T, d.action_dim(k), d.n)),
            prec=np.zeros(batch + (T, d.action_dim(k), d.action_dim(k))),
            V=np.zeros(batch + (T + 1, d.n, d.n)),
            v=np.zeros(vbatch + (T + 1, d.n)),
        )
        for k in (AgentId.I, AgentId.J)
    }
    repairs = []
    AB = transition(*lin.joint())
    exp = {AgentId.I: expansion_i, AgentId.J: expansion_j}
    for t in range(T, 0, -1):
        while True:
            stage = build_stage(exp[AgentId.I], exp[AgentId.J], lin, val_i, val_j, t, AB)
            prec = stage_precisions(stage)
            bad = None
            for k in (AgentId.I, AgentId.J):
                try:
                    check_precision(-prec.block(k, k, k), t, k.value)
                except NonPositiveDefinitePrecision:
                    if not regularize:
                        raise
                    bad = k
                    break
            if bad is None:
                break
            lam = lam0
            while True:
                trial = exp[bad].regularized(t, bad, lam)
                st = build_stage(
                    trial if bad is AgentId.I else exp[AgentId.I],
                    trial if bad is AgentId.J else exp[AgentId.J],
                    lin, val_i, val_j, t, AB,
                )
                try:
                    check_precision(-stage_precisions(st).block(bad, bad, bad), t, bad.value)
                    break
                except NonPositiveDefinitePrecision:
                    lam *= 2.0
                    if lam > lam_max:
                        raise
            exp[bad] = trial
            repairs.append((t, bad.value, lam))
        means = solve_stage_means(stage)
        k0 = t - 1
        for k, nu, K in ((AgentId.I, means.nu_i, means.K_i), (AgentId.J, means.nu_j, means.K_j)):
            o = out[k]
            o["nu"][..., k0, :] = nu
            o["gain"][..., k0, :, :] = K
            o["prec"][..., k0, :, :] = _sym(-prec.block(k, k, k))
        out[AgentId.I]["V"][..., t, :, :] = val_i.V
        out[AgentId.I]["v"][..., t, :] = val_i.v
        out[AgentId.J]["V"][..., t, :, :] = val_j.V
        out[AgentId.J]["v"][..., t, :] = val_j.v
        val_i, val_j = value_step(stage, means)
    out[AgentId.I]["V"][..., 0, :, :] = val_i.V
    out[AgentId.I]["v"][..., 0, :] = val_i.v
    out[AgentId.J]["V"][..., 0, :, :] = val_j.V
    out[AgentId.J]["v"][..., 0, :] = val_j.v
    ref = expansion_i.reference
    return tuple(
        PolicySequence(o["nu"], o["gain"], o["prec"], d, k, ref, o["V"], o["v"], tuple(repairs))
        for k, o in out.items()
    )


def cioc_backward(H, g, A, B, *, agent_label="joint"):
    """Single-agent backward pass on a generic system.

    ``H, g`` (…, T, n+m, n+m)/(…, T, n+m) expand the reward over ``[x_t, u_t]``;
    ``A, B`` are the Jacobians.  Uses the Riccati form
    ``M = W_uu``, ``K = -M^{-1} W_ux``, ``V = W_xx + W_xu K``.
    Returns ``(nu, K, precision, V, v)`` with a time axis of length T
    (values: T+1).
    """
    T = H.shape[-3]
    n = A.shape[-1]
    m = B.shape[-1]
    batch = np.broadcast_shapes(H.shape[:-3], A.shape[:-3], B.shape[:-3])
    vbatch = np.broadcast_shapes(batch, g.shape[:-2])
    Tm = transition(A, B)
    V = np.zeros(batch + (n, n))
    v = np.zeros(vbatch + (n,))
    nus = np.zeros(vbatch + (T, m))
    Ks = np.zeros(batch + (T, m, n))
    precs = np.zeros(batch + (T, m, m))
    Vs = np.zeros(batch + (T + 1, n, n))
    vs = np.zeros(vbatch + (T + 1, n))
    for t in range(T, 0, -1):
        k = t - 1
        W, w = pullback(H[..., k, :, :], g[..., k, :], None, None, V, v, Tm[..., k, :, :])
        M = W[..., n:, n:]
        check_precision(-M, t, agent_label)
        Wux = W[..., n:, :n]
        Minv = np.linalg.inv(M)
        nu = -np.einsum("...ab,...b->...a", Minv, w[..., n:])
        K = -Minv @ Wux
        nus[..., k, :] = nu
        Ks[..., k, :, :] = K
        precs[..., k, :, :] = _sym(-M)
        Vs[..., t, :, :] = V
        vs[..., t, :] = v
        V = _sym(W[..., :n, :n] + _T(Wux) @ K)
        v = w[..., :n] + np.einsum("...ba,...b->...a", Wux, nu)
    Vs[..., 0, :, :] = V
    vs[..., 0, :] = v
    return nus, Ks, precs, Vs, vs


def m_cioc_backward(joint_expansion: QuadraticExpansion, lin: LinearizedDynamics) -> PolicySequence:
    """Centralized baseline: both agents as one with stacked action ``[u_i, u_j]``."""
    if lin.T != joint_expansion.T:
        raise DimensionMismatch("expansion and linearization disagree on the horizon")
    A, B = lin.joint()
    nu, K, prec, V, v = cioc_backward(joint_expansion.H, joint_expansion.g, A, B)
    return PolicySequence(nu, K, prec, joint_expansion.dims, None, joint_expansion.reference, V, v)


def single_agent_cioc_backward(expansion: QuadraticExpansion, lin: LinearizedDynamics, agent) -> PolicySequence:
    """Single-agent baseline: the other agent is a non-reacting obstacle on its observed path.

    Only ``agent``'s own state/action blocks of the expansion enter; the other
    agent's deviation is pinned to zero, so its observed states and actions act
    as constants inside the reward.  Gains are embedded in joint-state
    coordinates with zero columns for the other agent.
    """
    agent = AgentId.parse(agent)
    d = expansion.dims
    if lin.T != expansion.T:
        raise DimensionMismatch("expansion and linearization disagree on the horizon")
    sl = d.z_slices()
    idx = np.r_[np.arange(sl[f"x{agent.value}"].start, sl[f"x{agent.value}"].stop), np.arange(sl[f"u{agent.value}"].start, sl[f"u{agent.value}"].stop)]
    H = expansion.H[..., idx[:, None], idx]
    g = expansion.g[..., idx]
    if agent is AgentId.I:
        A, B = lin.A_i, lin.B_i
    else:
        A, B = lin.A_j, lin.B_j
    nu, K_own, prec, V_own, v_own = cioc_backward(H, g, A, B, agent_label=agent.value)
    ss = d.state_slice(agent)
    K = np.zeros(K_own.shape[:-1] + (d.n,))
    K[..., ss] = K_own
    V = np.zeros(V_own.shape[:-2] + (d.n, d.n))
    V[..., ss, ss] = V_own
    v = np.zeros(v_own.shape[:-1] + (d.n,))
    v[..., ss] = v_own
    return PolicySequence(nu, K, prec, d, agent, expansion.reference, V, v)

