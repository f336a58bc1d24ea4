import numpy as np
import pytest

from driftsampler.energy import get_target


@pytest.fixture(scope="session")
def gmm4():
    return get_target("gmm4")


@pytest.fixture(scope="session")
def double_well():
    return get_target("double_well")


@pytest.fixture(scope="session")
def banana():
    return get_target("banana")


def fd_grad(target, x, h=1e-4):
    """Central-difference gradient of the energy."""
    g = np.zeros_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (target.energy(x + e) - target.energy(x - e)) / (2 * h)
    return g


def fd_hess(target, x, h=1e-4):
    """Central-difference Hessian via the analytic gradient."""
    d = len(x)
    out = np.zeros((d, d))
    for j in range(d):
        e = np.zeros_like(x)
        e[j] = h
        out[:, j] = (target.grad_energy(x + e) - target.grad_energy(x - e)) / (2 * h)
    return out
