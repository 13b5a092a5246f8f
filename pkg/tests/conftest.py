import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gscioc.core import AgentDynamics, Dims, DynamicsModel, JointState, LinearizedDynamics
from gscioc.rewards import QuadraticExpansion

settings.register_profile("gscioc", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("gscioc")

D1 = Dims(1, 1, 1, 1)


def random_quadratic_game(rng, T, dims=D1, cross=True, scale=1.0):
    """Random concave stage quadratics for both agents plus integrator-like Jacobians."""
    nz = dims.nz
    out = []
    for _ in range(2):
        P = rng.normal(size=(T, nz, nz))
        H = -(P @ np.swapaxes(P, -1, -2)) * 0.3 * scale - np.eye(nz)
        g = rng.normal(size=(T, nz))
        out.append([H, g])
    if not cross:
        sl = dims.z_slices()
        for (H, g), own in zip(out, ("i", "j")):
            keep = np.zeros(nz, bool)
            keep[sl[f"x{own}"]] = keep[sl[f"u{own}"]] = True
            H[:, ~keep, :] = 0.0
            H[:, :, ~keep] = 0.0
            g[:, ~keep] = 0.0
    exp_i = QuadraticExpansion(np.zeros(T), out[0][1], out[0][0], dims)
    exp_j = QuadraticExpansion(np.zeros(T), out[1][1], out[1][0], dims)
    A_i = np.broadcast_to(np.eye(dims.n_i) + 0.1 * rng.normal(size=(dims.n_i, dims.n_i)), (T, dims.n_i, dims.n_i)).copy()
    A_j = np.broadcast_to(np.eye(dims.n_j) + 0.1 * rng.normal(size=(dims.n_j, dims.n_j)), (T, dims.n_j, dims.n_j)).copy()
    B_i = np.broadcast_to(np.eye(dims.n_i, dims.m_i) + 0.1 * rng.normal(size=(dims.n_i, dims.m_i)), (T, dims.n_i, dims.m_i)).copy()
    B_j = np.broadcast_to(np.eye(dims.n_j, dims.m_j) + 0.1 * rng.normal(size=(dims.n_j, dims.m_j)), (T, dims.n_j, dims.m_j)).copy()
    return exp_i, exp_j, LinearizedDynamics(A_i, B_i, A_j, B_j)


@pytest.fixture
def integrator_1d():
    integ = AgentDynamics("integrator", 1, 1)
    return DynamicsModel(integ, integ)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def x0_1d():
    return JointState([1.0], [-2.0])
