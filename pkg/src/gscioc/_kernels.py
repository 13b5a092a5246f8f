"""Compiled kernels (numba) with pure-numpy twins.

``USE_NUMBA`` from :mod:`gscioc._accel` picks the implementation; both
compute the same numbers and are cross-checked by the test-suite.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

LOG2PI = float(np.log(2.0 * np.pi))

# status codes returned by the likelihood kernel
OK = 0
NOT_PD = 1
SINGULAR = 2


@njit(cache=True)
def _chol_logdet(P):
    """Cholesky log-determinant of a small SPD matrix; NaN when not PD."""
    m = P.shape[0]
    L = np.zeros((m, m))
    for a in range(m):
        for b in range(a + 1):
            s = P[a, b]
            for c in range(b):
                s -= L[a, c] * L[b, c]
            if a == b:
                if not s > 0.0:
                    return np.nan
                L[a, a] = np.sqrt(s)
            else:
                L[a, b] = s / L[b, b]
    out = 0.0
    for a in range(m):
        out += 2.0 * np.log(L[a, a])
    return out


@njit(cache=True)
def _loglik_numba(Hi, Hj, gi, gj, Tm, n, mi, mj):
    T = Hi.shape[0]
    R = gi.shape[0]
    nz = n + mi + mj
    m = mi + mj
    Vi = np.zeros((n, n))
    Vj = np.zeros((n, n))
    vi = np.zeros((R, n))
    vj = np.zeros((R, n))
    ll = np.zeros(R)
    worst = 1.0
    Qi = np.empty((nz, nz))
    Qj = np.empty((nz, nz))
    wi = np.empty(nz)
    wj = np.empty(nz)
    ti = np.empty(nz)
    tj = np.empty(nz)
    c = np.empty(m)
    nu = np.empty(m)
    for t in range(T - 1, -1, -1):
        A = Tm[t]
        Qi[:, :] = Hi[t]
        Qj[:, :] = Hj[t]
        Qi[:n, :n] += Vi
        Qj[:n, :n] += Vj
        Wi = A.T @ Qi @ A
        Wj = A.T @ Qj @ A
        Wi = 0.5 * (Wi + Wi.T)
        Wj = 0.5 * (Wj + Wj.T)
        Pi = -np.ascontiguousarray(Wi[n : n + mi, n : n + mi])
        Pj = -np.ascontiguousarray(Wj[n + mi :, n + mi :])
        ldi = _chol_logdet(Pi)
        if np.isnan(ldi):
            return ll, NOT_PD, t + 1, 0, worst
        ldj = _chol_logdet(Pj)
        if np.isnan(ldj):
            return ll, NOT_PD, t + 1, 1, worst
        S = np.empty((m, m))
        G = np.empty((m, n))
        S[:mi, :] = Wi[n : n + mi, n:]
        S[mi:, :] = Wj[n + mi :, n:]
        G[:mi, :] = Wi[n : n + mi, :n]
        G[mi:, :] = Wj[n + mi :, :n]
        Sinv = np.linalg.inv(S)
        cond = np.max(np.sum(np.abs(S), axis=0)) * np.max(np.sum(np.abs(Sinv), axis=0))
        if not cond < 1e12:
            return ll, SINGULAR, t + 1, 0, cond
        if cond > worst:
            worst = cond
        K = -Sinv @ G
        L = np.zeros((nz, n))
        for a in range(n):
            L[a, a] = 1.0
        L[n:, :] = K
        const = 0.5 * (ldi + ldj) - 0.5 * m * LOG2PI
        WLi = Wi @ L
        WLj = Wj @ L
        newVi = L.T @ WLi
        newVj = L.T @ WLj
        for r in range(R):
            # w = Tm' (g + [v; 0])
            for a in range(nz):
                si = 0.0
                sj = 0.0
                for b in range(nz):
                    xi = gi[r, t, b]
                    xj = gj[r, t, b]
                    if b < n:
                        xi += vi[r, b]
                        xj += vj[r, b]
                    si += A[b, a] * xi
                    sj += A[b, a] * xj
                wi[a] = si
                wj[a] = sj
            for a in range(mi):
                c[a] = wi[n + a]
            for a in range(mj):
                c[mi + a] = wj[n + mi + a]
            for a in range(m):
                s = 0.0
                for b in range(m):
                    s -= Sinv[a, b] * c[b]
                nu[a] = s
            q = 0.0
            for a in range(mi):
                for b in range(mi):
                    q += nu[a] * Pi[a, b] * nu[b]
            for a in range(mj):
                for b in range(mj):
                    q += nu[mi + a] * Pj[a, b] * nu[mi + b]
            ll[r] += const - 0.5 * q
            # v = L' (W [0; nu] + w)
            for a in range(nz):
                si = wi[a]
                sj = wj[a]
                for b in range(m):
                    si += Wi[a, n + b] * nu[b]
                    sj += Wj[a, n + b] * nu[b]
                ti[a] = si
                tj[a] = sj
            for a in range(n):
                si = 0.0
                sj = 0.0
                for b in range(nz):
                    si += L[b, a] * ti[b]
                    sj += L[b, a] * tj[b]
                vi[r, a] = si
                vj[r, a] = sj
        Vi = 0.5 * (newVi + newVi.T)
        Vj = 0.5 * (newVj + newVj.T)
    return ll, OK, 0, 0, worst


def _loglik_numpy(Hi, Hj, gi, gj, Tm, n, mi, mj):
    """Same contract as the compiled kernel, built on the general recursion."""
    from .core import Dims
    from .errors import SingularMeanSystem
    from .recursion import QuadraticValue, StageGame, gaussian_logpdf, pullback, solve_stage_means, stage_precisions, value_step

    d = Dims(n, 0, mi, mj)  # only n, m_i, m_j matter for the stacked algebra
    R = gi.shape[0]
    T = Hi.shape[0]
    vi = QuadraticValue(np.zeros((n, n)), np.zeros((R, n)), d)
    vj = QuadraticValue(np.zeros((n, n)), np.zeros((R, n)), d)
    ll = np.zeros(R)
    for t in range(T, 0, -1):
        k = t - 1
        Wi, wi = pullback(Hi[k], gi[:, k], None, None, vi.V, vi.v, Tm[k])
        Wj, wj = pullback(Hj[k], gj[:, k], None, None, vj.V, vj.v, Tm[k])
        stage = StageGame(Wi, wi, Wj, wj, d, t)
        prec = stage_precisions(stage)
        Pi, Pj = -prec.block("i", "i", "i"), -prec.block("j", "j", "j")
        for code, P in ((0, Pi), (1, Pj)):
            if not np.all(np.linalg.eigvalsh(0.5 * (P + P.T)) > 0):
                return ll, NOT_PD, t, code, 1.0
        try:
            means = solve_stage_means(stage)
        except SingularMeanSystem:
            return ll, SINGULAR, t, 0, np.inf
        ll += gaussian_logpdf(-means.nu_i, Pi) + gaussian_logpdf(-means.nu_j, Pj)
        vi, vj = value_step(stage, means)
    return ll, OK, 0, 0, 1.0


def quadratic_game_loglik(Hi, Hj, gi, gj, Tm, n, mi, mj):
    """Per-row log-likelihood of zero deviations under the two-agent stage policies.

    ``Hi, Hj`` (T, nz, nz) are shared reward Hessians, ``gi, gj`` (R, T, nz)
    per-row reward gradients and ``Tm`` (T, nz, nz) the stage transition
    matrices.  Returns ``(ll, status, t, agent, worst_cond)``.
    """
    args = (
        np.ascontiguousarray(Hi, dtype=float),
        np.ascontiguousarray(Hj, dtype=float),
        np.ascontiguousarray(gi, dtype=float),
        np.ascontiguousarray(gj, dtype=float),
        np.ascontiguousarray(Tm, dtype=float),
        int(n),
        int(mi),
        int(mj),
    )
    if USE_NUMBA:
        return _loglik_numba(*args)
    return _loglik_numpy(*args)
