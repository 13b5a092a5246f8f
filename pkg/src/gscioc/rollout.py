"""Policy roll-outs, batch statistics and the roll-out CSV format.

Sampling uses one counter-based Philox stream per trajectory, keyed by
``(seed, trajectory index)``, so a batch is reproducible regardless of how
it is split across workers.  Every trajectory consumes exactly ``T * m``
standard normals; GS-CIOC policies colour them with each agent's own
covariance (independent agents) and a joint M-CIOC policy with the stacked
covariance.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Dims, DynamicsModel, JointState, JointTrajectory
from .errors import DimensionMismatch, InputError, InsufficientSamples, InsufficientVariance, SchemaError, ZeroDenominator
from .recursion import PolicySequence

CSV_VERSION = 1


@dataclass(frozen=True)
class RolloutBatch:
    trajectories: JointTrajectory
    seed: Optional[int]
    provenance: str = "GS-CIOC"

    def __post_init__(self):
        tr = self.trajectories
        if len(tr.batch_shape) != 1 or tr.batch_shape[0] < 1:
            raise InsufficientSamples("a roll-out batch needs a 1-D batch of at least one trajectory")
        x0 = tr.states[:, 0, :]
        if not np.all(x0 == x0[0]):
            raise InputError("all trajectories in a batch must share the initial state")

    @property
    def n(self) -> int:
        return self.trajectories.batch_shape[0]

    @property
    def T(self) -> int:
        return self.trajectories.T

    @property
    def dims(self) -> Dims:
        return self.trajectories.dims


def stream(seed: int, index: int) -> np.random.Generator:
    """Philox generator for trajectory ``index`` of a batch seeded with ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def standard_normals(seed, n, T, m):
    return np.stack([stream(seed, k).standard_normal((T, m)) for k in range(n)]) if n else np.zeros((0, T, m))


def _policy_pieces(pol_i, pol_j):
    """Stacked ``(nu, gain, chol, u_ref, x_ref)`` in joint coordinates."""
    if pol_j is None:
        if pol_i.owner is not None:
            raise InputError("a single policy must be a joint (stacked-action) policy")
        pols = [pol_i]
    else:
        if pol_i.owner is None or pol_j.owner is None or pol_i.owner == pol_j.owner:
            raise InputError("expected one policy per agent")
        if pol_i.owner.value == "j":
            pol_i, pol_j = pol_j, pol_i
        if pol_i.T != pol_j.T:
            raise DimensionMismatch("policies disagree on the horizon")
        pols = [pol_i, pol_j]
    ref = pols[0].reference
    if ref is None:
        raise InputError("policies carry no reference trajectory")
    if ref.batch_shape:
        raise InputError("sampling needs policies built around a single reference trajectory")
    nu = np.concatenate([p.nu for p in pols], axis=-1)
    gain = np.concatenate([p.gain for p in pols], axis=-2)
    chol = [np.linalg.cholesky(p.covariance) for p in pols]
    T, m = nu.shape
    L = np.zeros((T, m, m))
    o = 0
    for c in chol:
        k = c.shape[-1]
        L[:, o : o + k, o : o + k] = c
        o += k
    return nu, gain, L, ref


def _roll(dynamics: DynamicsModel, x0: JointState, nu, gain, L, ref, noise, eta=1.0):
    d = dynamics.dims
    n_traj = noise.shape[0]
    T = nu.shape[0]
    x = np.empty((n_traj, T + 1, d.n))
    u = np.empty((n_traj, T, d.m))
    x[:, 0] = x0.joint
    x_ref, u_ref = ref.states, ref.actions
    for t in range(T):
        dev = x[:, t] - x_ref[t]
        mean = u_ref[t] + eta * (nu[t] + dev @ gain[t].T)
        u[:, t] = mean + noise[:, t] @ L[t].T
        xi, xj = dynamics.step(x[:, t, : d.n_i], x[:, t, d.n_i :], u[:, t, : d.m_i], u[:, t, d.m_i :])
        x[:, t + 1, : d.n_i] = xi
        x[:, t + 1, d.n_i :] = xj
    return JointTrajectory.from_joint(x, u, d)


def sample_rollouts(pol_i: PolicySequence, pol_j: Optional[PolicySequence], dynamics: DynamicsModel, x0: JointState, n: int, seed: int = 0, *, provenance=None, zero_covariance=False) -> RolloutBatch:
    """Sample ``n`` closed-loop trajectories.

    Pass both agents' policies for GS-CIOC (independent draws) or a single
    joint policy with ``pol_j=None`` for M-CIOC (correlated draws).
    """
    if n < 1:
        raise InsufficientSamples("need at least one roll-out")
    nu, gain, L, ref = _policy_pieces(pol_i, pol_j)
    if dynamics.dims != ref.dims or x0.joint.shape != (dynamics.dims.n,):
        raise DimensionMismatch("policies, dynamics and x0 disagree on dimensions")
    if zero_covariance:
        L = np.zeros_like(L)
    noise = standard_normals(seed, n, nu.shape[0], nu.shape[1])
    if provenance is None:
        provenance = "M-CIOC" if pol_j is None else "GS-CIOC"
    return RolloutBatch(_roll(dynamics, x0, nu, gain, L, ref, noise), seed, provenance)


def mean_rollout(pol_i: PolicySequence, pol_j: Optional[PolicySequence], dynamics: DynamicsModel, x0: JointState, eta: float = 1.0) -> JointTrajectory:
    """Deterministic roll-out following the (``eta``-scaled) mean actions."""
    nu, gain, L, ref = _policy_pieces(pol_i, pol_j)
    noise = np.zeros((1,) + nu.shape)
    return _roll(dynamics, x0, nu, gain, np.zeros_like(L), ref, noise, eta)[0]


# --------------------------------------------------------------------------- statistics


@dataclass(frozen=True)
class BatchStatistics:
    n: int
    mean_states: np.ndarray
    mean_actions: np.ndarray
    std_states: np.ndarray
    std_actions: np.ndarray
    correlation: float
    total_variance: float
    correlation_per_t: np.ndarray
    dims: Dims

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "correlation": self.correlation,
            "total_variance": self.total_variance,
            "correlation_per_t": [None if not np.isfinite(c) else float(c) for c in self.correlation_per_t],
            "mean_states": self.mean_states.tolist(),
            "mean_actions": self.mean_actions.tolist(),
            "std_states": self.std_states.tolist(),
            "std_actions": self.std_actions.tolist(),
        }


def _pearson(a, b):
    num = np.sum(a * b)
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return num / den if den > 0 else np.nan


def batch_statistics(batch: RolloutBatch, reference_mean: Optional[np.ndarray] = None) -> BatchStatistics:
    """Mean/std bands, pooled cross-agent action correlation and total action variance.

    Deviations are taken from the batch mean, or from ``reference_mean``
    (shape (T, m)) when given.  The correlation pools pairs
    ``(du_i[t, c], du_j[t, c])`` over all stages and shared action components.
    """
    if batch.n < 2:
        raise InsufficientSamples("statistics need at least two trajectories")
    tr = batch.trajectories
    d = tr.dims
    U = tr.actions
    X = tr.states
    mean_u = U.mean(axis=0)
    center = mean_u if reference_mean is None else np.asarray(reference_mean, dtype=float)
    dU = U - center
    c = min(d.m_i, d.m_j)
    a = dU[..., : c]
    b = dU[..., d.m_i : d.m_i + c]
    corr = _pearson(a, b)
    if not np.isfinite(corr):
        raise InsufficientVariance("action deviations have zero variance; correlation undefined")
    with np.errstate(invalid="ignore", divide="ignore"):
        per_t = np.array([_pearson(a[:, t], b[:, t]) for t in range(tr.T)])
    total_var = float(np.sum(dU * dU) / ((batch.n - 1) * dU[0].size))
    return BatchStatistics(
        n=batch.n,
        mean_states=X.mean(axis=0),
        mean_actions=mean_u,
        std_states=X.std(axis=0, ddof=1),
        std_actions=U.std(axis=0, ddof=1),
        correlation=float(corr),
        total_variance=total_var,
        correlation_per_t=per_t,
        dims=d,
    )


def variance_ratio(a: BatchStatistics, b: BatchStatistics) -> float:
    if b.total_variance == 0:
        raise ZeroDenominator("reference batch has zero action variance")
    if a.mean_actions.shape != b.mean_actions.shape:
        raise DimensionMismatch("batches differ in horizon or action layout")
    return a.total_variance / b.total_variance


# --------------------------------------------------------------------------- csv


def _fmt(v):
    return repr(float(v))


def write_batch_csv(batch: RolloutBatch, path=None) -> str:
    """Serialize to CSV (returns the text; also writes it when ``path`` is given).

    One row per (trajectory, time, agent); the action column holds the action
    that led to the row's state and is blank at ``t = 0``.
    """
    tr = batch.trajectories
    d = tr.dims
    ns, na = max(d.n_i, d.n_j), max(d.m_i, d.m_j)
    buf = io.StringIO()
    buf.write(f"# gscioc-rollout v{CSV_VERSION} seed={batch.seed} provenance={batch.provenance} dims={d.n_i},{d.n_j},{d.m_i},{d.m_j}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["traj_id", "t", "agent"] + [f"s{k}" for k in range(ns)] + [f"a{k}" for k in range(na)])
    per_agent = (("i", tr.states_i, tr.actions_i), ("j", tr.states_j, tr.actions_j))
    for k in range(batch.n):
        for t in range(tr.T + 1):
            for name, S, A in per_agent:
                s = [_fmt(v) for v in S[k, t]] + [""] * (ns - S.shape[-1])
                a = [""] * na if t == 0 else [_fmt(v) for v in A[k, t - 1]] + [""] * (na - A.shape[-1])
                w.writerow([k, t, name] + s + a)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_batch_csv(path) -> RolloutBatch:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise InputError(f"roll-out CSV not found: {path}") from None
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# gscioc-rollout"):
        raise SchemaError("missing '# gscioc-rollout' header line")
    meta = dict(tok.split("=", 1) for tok in lines[0].split()[3:] if "=" in tok)
    if lines[0].split()[2] != f"v{CSV_VERSION}":
        raise SchemaError(f"unsupported roll-out CSV version {lines[0].split()[2]}")
    try:
        n_i, n_j, m_i, m_j = (int(v) for v in meta["dims"].split(","))
    except (KeyError, ValueError):
        raise SchemaError("header lacks a valid dims= field") from None
    rows = list(csv.DictReader(lines[1:]))
    if not rows:
        raise InsufficientSamples("roll-out CSV contains no rows")
    try:
        n = max(int(r["traj_id"]) for r in rows) + 1
        T = max(int(r["t"]) for r in rows)
        Si = np.full((n, T + 1, n_i), np.nan)
        Sj = np.full((n, T + 1, n_j), np.nan)
        Ai = np.full((n, T, m_i), np.nan)
        Aj = np.full((n, T, m_j), np.nan)
        for r in rows:
            k, t, ag = int(r["traj_id"]), int(r["t"]), r["agent"]
            S, A, ns, na = (Si, Ai, n_i, m_i) if ag == "i" else (Sj, Aj, n_j, m_j)
            if ag not in ("i", "j"):
                raise SchemaError(f"unknown agent {ag!r}")
            S[k, t] = [float(r[f"s{c}"]) for c in range(ns)]
            if t > 0:
                A[k, t - 1] = [float(r[f"a{c}"]) for c in range(na)]
    except (KeyError, ValueError, IndexError) as exc:
        raise SchemaError(f"malformed roll-out CSV: {exc}") from None
    if T < 1 or any(np.isnan(a).any() for a in (Si, Sj, Ai, Aj)):
        raise SchemaError("roll-out CSV is incomplete (missing rows or values)")
    seed = meta.get("seed")
    seed = None if seed in (None, "None") else int(seed)
    return RolloutBatch(JointTrajectory(Si, Sj, Ai, Aj), seed, meta.get("provenance", "unknown"))
